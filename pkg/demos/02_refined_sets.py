"""Condense each consumer cluster into a few hyperprototypes.

The prototypes of every consumer in a cluster are linked through the
pairings found while comparing their sets; community detection on that
graph then groups prototypes that describe the same kind of day.
"""

from crocs import CommunityConfig, CrocsConfig, SyntheticSpec, generate_dataset, rrls_for_partition, run_crocs

data = generate_dataset(SyntheticSpec(m=40, p=60, K=2, k_shapes=3, seed=4))
print("shape subsets of the generating groups:", [sorted(s) for s in data.cluster_shapes])
res = run_crocs(data.records, CrocsConfig(k_stage1=6, K_consumers=2, seed=0))

refined = rrls_for_partition(res.rls_per_consumer, res.consumer_partition, res.pairings,
                             CommunityConfig(target_communities=3))
for c, rr in refined.items():
    print(f"cluster {c}: {rr.n_communities} communities at gamma={rr.gamma:.2f}")
    for com in rr.communities:
        tag = "major" if com.major else "minor"
        peak = int(com.hyperprototype_medoid.argmax())
        print(f"  {tag}: {com.day_coverage:6.1%} of days, {com.consumer_coverage:6.1%} of consumers, "
              f"peak at slot {peak}")
