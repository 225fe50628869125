"""
Training a PLDA model and scoring pairs
=======================================

Draw a synthetic population, fit the two-covariance model by EM and look at
same-speaker versus different-speaker log-likelihood ratios.
"""

import numpy as np

from xvec_anon import PopulationSpec, TrainingOptions, generate_population, plda_llr, train_plda

ds = generate_population(PopulationSpec(dim=16, n_speakers=100, utterances_per_speaker=8, seed=0))
model = train_plda(ds.embeddings, ds.speaker_ids, TrainingOptions())
print("EM iterations:", len(model.history) - 1)
print("log-likelihood trace:", np.round(model.history[:5], 1), "...")

# scoring takes conditioned vectors, so run the raw ones through the model first
X = model.transform(ds.embeddings)
same = plda_llr(model, X[0], X[1])      # two utterances of spk0000
diff = plda_llr(model, X[0], X[8])      # spk0000 vs spk0001
print(f"same speaker LLR {same:8.2f}")
print(f"diff speaker LLR {diff:8.2f}")

# the score is symmetric to the last bit
assert plda_llr(model, X[3], X[40]) == plda_llr(model, X[40], X[3])
