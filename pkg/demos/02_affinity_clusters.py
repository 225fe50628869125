"""
Clustering an anonymization pool
================================

Affinity propagation over speaker-level pool embeddings, then a look at the
cluster sizes that drive the sparse and dense selection rules.
"""

from xvec_anon import (
    ClusteringParams,
    DistanceMetric,
    PopulationSpec,
    build_speaker_pool,
    cluster_genders,
    cluster_pool,
    generate_population,
    rank_clusters_by_size,
)

pool = build_speaker_pool(generate_population(PopulationSpec(8, 150, 5, seed=4, prefix="pool")))
asg = cluster_pool(pool, DistanceMetric.cosine(), ClusteringParams(damping=0.7), seed=0)
print(f"{asg.n_clusters} clusters, converged={asg.converged} after {asg.iterations_run} sweeps")

labels = cluster_genders(asg, pool)
ranked = rank_clusters_by_size(asg)
print("largest :", [(pool.speaker_ids[e], n, labels[e]) for e, n in ranked[:3]])
print("smallest:", [(pool.speaker_ids[e], n, labels[e]) for e, n in ranked[-3:]])
print("male clusters:", sum(g == "M" for g in labels.values()),
      " female clusters:", sum(g == "F" for g in labels.values()))
