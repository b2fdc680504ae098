"""Miniature versions of the evaluation experiments.

The full-size runs are what the acceptance suite executes; these finish in
about a minute and show the shape of each result table.
"""

from crocs.experiments import run_experiment

print("-- ARI as the number of stage-one prototypes grows")
res = run_experiment("overestimation", {"spec": {"m": 30, "p": 60}, "k_range": [2, 6, 12], "trials": 2})
print(res.summary[["k", "mean_ari", "mean_ami", "mean_psi"]].to_string(index=False))

print("\n-- set distances with outlier days injected")
res = run_experiment("set-distance", {"spec": {"m": 30, "p": 60}, "n_outliers": [0, 20], "k_range": [6],
                                      "trials": 2, "algorithm": "hac_ward"})
print(res.summary.pivot_table(index="n_outliers", columns="kind", values="ari").round(3).to_string())

print("\n-- reconstruction error of a consumer's days")
res = run_experiment("reconstruction", {"m": 5, "p": 60, "k_range": [2, 4, 8]})
print(res.summary.pivot(index="k", columns="representation", values="mean_error").round(3).to_string())

print("\n-- how synchronous are consumers that look alike?")
res = run_experiment("asynchrony", {"spec": {"m": 10, "p": 60}, "k_joint": 4})
print(res.summary.to_string(index=False))
