"""Segment a small synthetic population and score the result against the truth.

Run with ``python demos/01_quickstart.py``.
"""

import numpy as np

from crocs import CrocsConfig, SyntheticSpec, ari, generate_dataset, run_crocs

# Sixty consumers in three groups; each group mixes two daily shapes.
data = generate_dataset(SyntheticSpec(m=60, p=60, K=3, k_shapes=2, n_outliers=10, seed=1))
print(f"{len(data.records)} consumers, {data.records[0].p} days each, "
      f"{data.records[0].values.shape[1]} readings per day")

# Stage one summarises every consumer by a handful of prototypes.
# Overestimating their number is harmless, so ask for more than two.
cfg = CrocsConfig(k_stage1=6, K_consumers=3, seed=0)
res = run_crocs(data.records, cfg)

rls = res.rls_per_consumer[0]
print(f"consumer {rls.consumer_id}: {len(rls.counts)} prototypes covering {int(rls.counts.sum())} days")
print("timings (s):", {k: round(v, 2) for k, v in res.timings.items()})

truth = data.truth.labels[res.kept]
print(f"ARI against the generating groups: {ari(truth, res.consumer_partition.labels):.3f}")
print("cluster sizes:", np.bincount(res.consumer_partition.labels))
