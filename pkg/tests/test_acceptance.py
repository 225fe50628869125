"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import time
import warnings

import numpy as np
import pytest
from scipy.stats import multivariate_normal

from xvec_anon.anonymizer import AnonymizationConfig, anonymize_dataset, candidates_near_far, make_metric
from xvec_anon.clustering import ClusteringParams, affinity_propagation, cluster_pool
from xvec_anon.dataset import SpeakerPool, build_speaker_pool, format_dataset, speaker_means
from xvec_anon.distance import DistanceMetric, distance
from xvec_anon.evaluation import AttackScenario, average_plda_distance, format_report, full_trials, run_scenario, split_enroll_trial
from xvec_anon.metrics import ScoreSet, cllr, min_cllr, rocch, rocch_eer
from xvec_anon.plda import PldaModel, TrainingOptions, format_model, plda_llr, preprocess, train_plda
from xvec_anon.synthgen import PopulationSpec, generate_population

from test_metrics import oracle_eer

DIM = 32
RATIO = 0.1  # within/between scale
N_RANK, N_STAR = 50, 25


@pytest.fixture
def report(capsys):
    def emit(number, title, ok, detail=""):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'} {title}" + (f" ({detail})" if detail else ""))
        assert ok, f"criterion {number} failed: {detail}"
    return emit


def joint_llr(model, u, v):
    sb = model.V @ model.V.T
    tot = sb + model.D @ model.D.T + model.sigma_floor * np.eye(model.dim)
    z = np.zeros_like(sb)
    x, mu = np.concatenate([u, v]), np.concatenate([model.m, model.m])
    same = multivariate_normal(mu, np.block([[tot, sb], [sb, tot]])).logpdf(x)
    diff = multivariate_normal(mu, np.block([[tot, z], [z, tot]])).logpdf(x)
    return same - diff


def fuzz_scores(rng, max_total=50, ties=False):
    nt = int(rng.integers(1, max_total))
    nn = int(rng.integers(1, max_total - nt + 1))
    tar, non = rng.standard_normal(nt) * rng.uniform(0.2, 3) + rng.uniform(-2, 4), rng.standard_normal(nn)
    if ties:
        tar, non = np.round(tar), np.round(non)
    return ScoreSet(tar, non)


def pipeline():
    """Criterion-7 population, model, far/near anonymization and the three scenarios."""
    train = generate_population(PopulationSpec(DIM, 200, 10, within_scale=RATIO, seed=1, prefix="trn"))
    pool_utts = generate_population(PopulationSpec(DIM, 200, 10, within_scale=RATIO, seed=2, prefix="pool"))
    ev = generate_population(PopulationSpec(DIM, 40, 10, within_scale=RATIO, seed=3, prefix="ev"))
    model = train_plda(train.embeddings, train.speaker_ids, TrainingOptions())
    pool = build_speaker_pool(pool_utts)
    enroll, trial = split_enroll_trial(ev, 5)
    trials = full_trials(enroll, trial)
    user = {m: AnonymizationConfig(metric="plda", proximity=m, gender_selection="same",
                                   pool_rank_n=N_RANK, n_star=N_STAR, seed=0) for m in ("far", "near")}
    attacker = AnonymizationConfig(metric="plda", proximity="far", gender_selection="same",
                                   pool_rank_n=N_RANK, n_star=N_STAR, seed=1)
    recs = [
        run_scenario(AttackScenario("baseline"), enroll, trial, trials, pool, model),
        run_scenario(AttackScenario("ignorant", user["far"]), enroll, trial, trials, pool, model),
        run_scenario(AttackScenario("semi_ignorant", user["far"], attacker), enroll, trial, trials, pool, model),
    ]
    anon = {m: anonymize_dataset(trial, pool, cfg, model=model)[0] for m, cfg in user.items()}
    return {
        "model": model, "pool": pool, "trial": trial, "records": recs, "anon": anon,
        "files": {
            "train": format_dataset(train), "pool": format_dataset(pool.as_dataset()),
            "eval": format_dataset(ev), "model": format_model(model),
            "anon_far": format_dataset(anon["far"]), "anon_near": format_dataset(anon["near"]),
            "report": format_report(recs),
        },
    }


@pytest.fixture(scope="module")
def c7():
    t0 = time.perf_counter()
    out = pipeline()
    out["seconds"] = time.perf_counter() - t0
    return out


def test_criterion_1_plda_oracle(report):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 9))
        q, r = int(rng.integers(1, d + 1)), int(rng.integers(1, d + 1))
        model = PldaModel(rng.standard_normal(d), rng.standard_normal((d, q)), 0.5 * rng.standard_normal((d, r)),
                          sigma_floor=10 ** rng.uniform(-4, -1))
        u, v = rng.standard_normal(d), rng.standard_normal(d)
        worst = max(worst, abs(plda_llr(model, u, v) - joint_llr(model, u, v)))
    secs = time.perf_counter() - t0
    report(1, "PLDA oracle equivalence", worst <= 1e-6 and secs < 5, f"max abs err {worst:.2e}, {secs:.2f}s")


def test_criterion_2_em_sanity(report):
    worst_drop, worst_mean = 0.0, 0.0
    for seed in range(20):
        rng = np.random.default_rng(200 + seed)
        d = int(rng.integers(2, 9))
        spec = PopulationSpec(d, 60, 8, within_scale=float(rng.uniform(0.05, 0.5)), seed=seed)
        ds = generate_population(spec, mean=rng.standard_normal(d) * 3)
        opts = TrainingOptions(rank_q=int(rng.integers(1, d + 1)), center=bool(seed % 2), length_normalize=bool(seed % 3))
        model = train_plda(ds.embeddings, ds.speaker_ids, opts)
        worst_drop = max(worst_drop, float(-np.min(np.diff(model.history))))
        worst_mean = max(worst_mean, float(np.linalg.norm(model.m - preprocess(ds.embeddings, opts).mean(axis=0))))
    report(2, "EM sanity", worst_drop <= 1e-8 and worst_mean <= 0.05,
           f"largest LL decrease {max(worst_drop, 0):.1e}, mean error {worst_mean:.1e}")


def test_criterion_3_rocch_eer(report):
    rng = np.random.default_rng(303)
    worst = 0.0
    for k in range(200):
        s = fuzz_scores(rng, ties=k % 3 == 0)
        worst = max(worst, abs(rocch_eer(s) - oracle_eer(s.target_scores.tolist(), s.nontarget_scores.tolist())))
    hand = ScoreSet([2, 0], [1, -1])
    hull_ok = rocch(hand) == [(0.0, 1.0), (0.0, 0.5), (0.5, 0.0), (1.0, 0.0)]
    bounds = [rocch_eer(fuzz_scores(rng, ties=bool(rng.integers(2)))) for _ in range(1000)]
    ok = worst <= 1e-12 and rocch_eer(hand) == 0.25 and hull_ok and 0 <= min(bounds) and max(bounds) <= 0.5
    report(3, "ROCCH-EER exactness", ok, f"max oracle diff {worst:.1e}, hand EER {rocch_eer(hand)}")


def test_criterion_4_calibration(report):
    rng = np.random.default_rng(404)
    transforms = [lambda x: 2 * x + 3, lambda x: np.exp(x / 4), lambda x: x ** 3 + x]
    worst_gap, worst_inv = -np.inf, 0.0
    for k in range(500):
        s = fuzz_scores(rng, ties=k % 4 == 0)
        worst_gap = max(worst_gap, min_cllr(s) - cllr(s))
        f = transforms[k % 3]
        t = ScoreSet(f(s.target_scores), f(s.nontarget_scores))
        worst_inv = max(worst_inv, abs(rocch_eer(s) - rocch_eer(t)), abs(min_cllr(s) - min_cllr(t)))
    zero = cllr(ScoreSet(np.zeros(7), np.zeros(9)))
    report(4, "calibration metrics", worst_gap <= 0 and worst_inv <= 1e-9 and zero == 1.0,
           f"max(min_cllr - cllr) {worst_gap:.2e}, max invariance diff {worst_inv:.1e}, Cllr(0) {zero}")


def test_criterion_5_affinity_propagation(report):
    rng = np.random.default_rng(505)
    centres = np.array([(0.0, 0.0), (20.0, 0.0), (0.0, 20.0)])
    truth = np.repeat(np.arange(3), 20)
    counts = []
    blobs_ok = True
    for seed in range(20):
        X = np.vstack([c + rng.standard_normal((20, 2)) for c in centres])
        # similarity = minus distance, the same convention the pool clustering uses
        S = -np.linalg.norm(X[:, None] - X[None], axis=-1)
        a = affinity_propagation(S, ClusteringParams(damping=0.5), seed=seed)
        counts.append(a.n_clusters)
        blobs_ok &= a.n_clusters == 3 and all(len(set(a.exemplar_of[truth == b])) == 1 for b in range(3))
    Y = rng.standard_normal((10, 2))
    S10 = -((Y[:, None] - Y[None]) ** 2).sum(-1)
    low = affinity_propagation(S10, ClusteringParams(preference=-1e6), seed=0).n_clusters
    high = affinity_propagation(S10, ClusteringParams(preference=1e6), seed=0).n_clusters
    report(5, "affinity propagation", blobs_ok and low == 1 and high == 10,
           f"cluster counts over 20 blob draws {sorted(set(counts))}, limits {low}/{high}")


def test_criterion_6_anonymization(report):
    rng = np.random.default_rng(606)
    failures = []
    modes = ("random", "near", "far", "sparse", "dense")
    for k in range(100):
        d = int(rng.integers(2, 7))
        n_pool = int(rng.integers(20, 60))
        genders = list(rng.choice(["M", "F"], n_pool))
        genders[:2] = ["M", "F"]
        pool = SpeakerPool([f"p{i:03d}" for i in range(n_pool)], genders, rng.standard_normal((n_pool, d)))
        ds = generate_population(PopulationSpec(d, int(rng.integers(2, 6)), int(rng.integers(1, 4)), seed=k, prefix="s"))
        metric_kind = ("cosine", "plda")[k % 2]
        model = None
        if metric_kind == "plda":
            model = PldaModel(rng.standard_normal(d), rng.standard_normal((d, d)), 0.3 * rng.standard_normal((d, d)))
        N = int(rng.integers(2, 12))
        cfg = AnonymizationConfig(metric=metric_kind, proximity=modes[k % 5],
                                  gender_selection=("same", "opposite", "random")[k % 3],
                                  pool_rank_n=N, n_star=int(rng.integers(1, N + 1)), cluster_top_k=int(rng.integers(1, 5)),
                                  cluster_fraction=float(rng.uniform(0.2, 1.0)), seed=k)
        asg = cluster_pool(pool, make_metric(cfg, model), seed=k) if cfg.uses_clusters else None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            try:
                out, res = anonymize_dataset(ds, pool, cfg, asg, model)
            except ValueError as exc:
                # a fuzzed pool can lack a gender-matching cluster; that is an error by contract
                if "majority gender" in str(exc):
                    continue
                raise
        gender_of = dict(zip(pool.speaker_ids, pool.genders))
        means = speaker_means(ds)
        metric = make_metric(cfg, model)
        for spk, ix in ds.speaker_indices().items():
            r = res[spk]
            if len({out.embeddings[i].tobytes() for i in ix}) != 1:
                failures.append((k, "perm"))
            src_g = ds.speaker_gender()[spk]
            want = {"same": src_g, "opposite": "F" if src_g == "M" else "M"}.get(cfg.gender_selection, r.chosen_gender)
            if r.chosen_gender != want or any(gender_of[c] != want for c in r.candidate_ids):
                failures.append((k, "gender"))
            if {out.genders[i] for i in ix} != {want}:
                failures.append((k, "label"))
            if cfg.proximity in ("near", "far"):
                idx = [i for i in range(n_pool) if genders[i] == want]
                order = sorted(idx, key=lambda i: (distance(metric, means[spk], pool.embeddings[i]), pool.speaker_ids[i]))
                n = min(N, len(order))
                window = order[:n] if cfg.proximity == "near" else order[len(order) - n:]
                if not set(r.candidate_ids) <= {pool.speaker_ids[i] for i in window}:
                    failures.append((k, "window"))
    report(6, "anonymization correctness", not failures, f"{len(failures)} violations" + (f", first {failures[0]}" if failures else ""))


def test_criterion_7_privacy_trend(report, c7):
    base, ign, semi = (r["eer"] for r in c7["records"])
    ok = base < 0.05 and ign >= base + 0.20 and semi <= ign + 0.05 and c7["seconds"] < 60
    report(7, "end-to-end privacy trend", ok,
           f"EER baseline {base:.3f}, ignorant {ign:.3f}, semi-ignorant {semi:.3f}, {c7['seconds']:.1f}s")


def test_criterion_8_distance_trend(report, c7):
    model, pool, trial = c7["model"], c7["pool"], c7["trial"]
    metric = DistanceMetric.plda(model)
    means = speaker_means(trial)
    gender = trial.speaker_gender()
    speakers = list(means)
    index = pool.index_of()
    wins = 0
    for k in range(100):
        spk = speakers[k % len(speakers)]
        mean_d = {}
        for mode in ("near", "far"):
            ids = candidates_near_far(pool, means[spk], metric, gender[spk], mode, N_RANK, N_STAR,
                                      np.random.default_rng(k))
            mean_d[mode] = np.mean([distance(metric, means[spk], pool.embeddings[index[i]]) for i in ids])
        wins += mean_d["far"] >= mean_d["near"]
    far = average_plda_distance(model, trial, c7["anon"]["far"])
    near = average_plda_distance(model, trial, c7["anon"]["near"])
    report(8, "distance trend", wins >= 95 and far > near,
           f"far >= near in {wins}/100, avg PLDA distance far {far:.1f} vs near {near:.1f}")


def test_criterion_9_determinism(report, c7):
    again = pipeline()["files"]
    diff = [name for name, text in c7["files"].items() if again[name].encode() != text.encode()]
    report(9, "determinism", not diff, "byte-identical" if not diff else f"differs: {diff}")
