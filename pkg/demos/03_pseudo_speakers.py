"""
Building pseudo-speakers
========================

Every source speaker is replaced by the mean of N* pool speakers picked with
one of five rules.  Far candidates end up much farther from the source (in
PLDA terms) than near ones.
"""

import numpy as np

from xvec_anon import (
    AnonymizationConfig,
    PopulationSpec,
    TrainingOptions,
    anonymize_dataset,
    average_plda_distance,
    build_speaker_pool,
    generate_population,
    train_plda,
)

train = generate_population(PopulationSpec(16, 150, 8, seed=1, prefix="trn"))
model = train_plda(train.embeddings, train.speaker_ids, TrainingOptions())
pool = build_speaker_pool(generate_population(PopulationSpec(16, 150, 8, seed=2, prefix="pool")))
users = generate_population(PopulationSpec(16, 10, 4, seed=3, prefix="usr"))

for proximity in ("random", "near", "far"):
    cfg = AnonymizationConfig(metric="plda", proximity=proximity, pool_rank_n=40, n_star=20, seed=0)
    anon, results = anonymize_dataset(users, pool, cfg, model=model)
    print(f"{proximity:>6}: avg PLDA distance {average_plda_distance(model, users, anon):9.1f}")

# perm mapping: all utterances of a speaker share one target
ix = users.speaker_indices()["usr0000"]
print("identical targets within usr0000:", all(np.array_equal(anon.embeddings[ix[0]], anon.embeddings[i]) for i in ix))

cfg = AnonymizationConfig(metric="plda", proximity="far", gender_selection="opposite", pool_rank_n=40, n_star=20)
anon, _ = anonymize_dataset(users, pool, cfg, model=model)
print("genders before:", "".join(users.genders[::4]), " after:", "".join(anon.genders[::4]))
