"""
Attacking anonymized embeddings
===============================

Baseline, ignorant and semi-ignorant attackers against far/PLDA/same
anonymization.  The ignorant attacker enrolls on clear speech and is close to
chance; the semi-ignorant one anonymizes enrollment too and recovers a lot.
"""

from xvec_anon import (
    AnonymizationConfig,
    AttackScenario,
    PopulationSpec,
    TrainingOptions,
    build_speaker_pool,
    full_trials,
    generate_population,
    run_scenario,
    split_enroll_trial,
    train_plda,
)

DIM = 32
train = generate_population(PopulationSpec(DIM, 200, 10, within_scale=0.1, seed=1, prefix="trn"))
pool = build_speaker_pool(generate_population(PopulationSpec(DIM, 200, 10, within_scale=0.1, seed=2, prefix="pool")))
enroll, trial = split_enroll_trial(generate_population(PopulationSpec(DIM, 40, 10, within_scale=0.1, seed=3, prefix="ev")), 5)
model = train_plda(train.embeddings, train.speaker_ids, TrainingOptions())
trials = full_trials(enroll, trial)

user = AnonymizationConfig(metric="plda", proximity="far", pool_rank_n=50, n_star=25, seed=0)
attacker = AnonymizationConfig(metric="plda", proximity="far", pool_rank_n=50, n_star=25, seed=1)

print(f"{'scenario':<14} {'EER%':>6} {'Cllr':>8} {'minCllr':>8}")
for sc in (AttackScenario("baseline"), AttackScenario("ignorant", user), AttackScenario("semi_ignorant", user, attacker)):
    r = run_scenario(sc, enroll, trial, trials, pool, model)
    print(f"{r['scenario']:<14} {100 * r['eer']:6.2f} {r['cllr']:8.2f} {r['min_cllr']:8.3f}")
