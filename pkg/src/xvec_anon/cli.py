"""Command-line front end: ``xvec-anon <command> [flags]``.

Commands: synth, train-plda, cluster, anonymize, evaluate, report.  Every
command accepts ``--config FILE`` holding ``key = value`` lines (keys are flag
names without the leading dashes); explicit flags override the file.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

from .anonymizer import GENDER_SELECTIONS, PROXIMITIES, AnonymizationConfig, anonymize_dataset, make_metric, save_mapping
from .clustering import ClusteringParams, cluster_pool, format_clusters, load_clusters
from .dataset import build_speaker_pool, format_dataset, load_dataset, load_pool, save_dataset
from .evaluation import SCENARIOS, AttackScenario, format_report, full_trials, load_trials, run_scenario, save_trials, split_enroll_trial
from .plda import TrainingOptions, format_model, load_model, train_plda
from .synthgen import PopulationSpec, generate_population

THREADS_ENV = "XVEC_ANON_THREADS"


class UsageError(Exception):
    pass


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    if n < 0:
        raise UsageError(f"{THREADS_ENV} must be >= 0")
    return n or (os.cpu_count() or 1)


def read_config(path: str) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _write_text(path, text):
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


def _require(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"the following argument is required: --{name.replace('_', '-')}")


def _bool(v):
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {v!r}")


# --- synth -------------------------------------------------------------------

def cmd_synth(args):
    _require(args, "dim", "speakers", "utts")
    spec = PopulationSpec(args.dim, args.speakers, args.utts, args.between_scale,
                          args.within_scale, args.gender_balance, args.seed, args.prefix)
    ds = generate_population(spec)
    if args.pool_out:
        save_dataset(build_speaker_pool(ds).as_dataset(), args.pool_out)
    if args.enroll_utts:
        enroll, trial = split_enroll_trial(ds, args.enroll_utts)
        if not (args.enroll_out and args.trial_out):
            raise UsageError("--enroll-utts needs --enroll-out and --trial-out")
        save_dataset(enroll, args.enroll_out)
        save_dataset(trial, args.trial_out)
        if args.trials_out:
            save_trials(full_trials(enroll, trial), args.trials_out)
    if args.out or not (args.pool_out or args.enroll_utts):
        _write_text(args.out, format_dataset(ds))
    return 0


# --- train-plda ----------------------------------------------------------------

def cmd_train_plda(args):
    _require(args, "train")
    ds = load_dataset(args.train)
    for flag, val in (("--rank-q", args.rank_q), ("--rank-r", args.rank_r)):
        if val is not None and not 1 <= val <= ds.dim:
            raise UsageError(f"argument {flag}: {val} must be between 1 and the embedding dimension {ds.dim}")
    opts = TrainingOptions(args.rank_q, args.rank_r, args.max_iterations, args.tolerance,
                           _bool(args.center), _bool(args.length_normalize), args.seed, args.sigma_floor)
    model = train_plda(ds.embeddings, ds.speaker_ids, opts)
    _write_text(args.out, format_model(model))
    print(f"final_log_likelihood={model.history[-1]:.10g} iterations={len(model.history) - 1}",
          file=sys.stderr if args.out in (None, "-") else sys.stdout)
    return 0


# --- shared anonymization flags ----------------------------------------------------

def _add_anon_flags(p, prefix="", help_suffix=""):
    dest = prefix.replace("-", "_")
    p.add_argument(f"--{prefix}distance", dest=f"{dest}distance", choices=("cosine", "plda"),
                   default=None if prefix else "plda", help="distance metric" + help_suffix)
    p.add_argument(f"--{prefix}proximity", dest=f"{dest}proximity", choices=PROXIMITIES,
                   default=None if prefix else "far")
    p.add_argument(f"--{prefix}gender", dest=f"{dest}gender", choices=GENDER_SELECTIONS,
                   default=None if prefix else "same")
    p.add_argument(f"--{prefix}N", dest=f"{dest}N", type=int, default=None if prefix else 200,
                   help="rank window size for near/far")
    p.add_argument(f"--{prefix}n-star", dest=f"{dest}n_star", type=int,
                   default=None if prefix else 100, help="number of averaged candidates")
    p.add_argument(f"--{prefix}top-k", dest=f"{dest}top_k", type=int, default=None if prefix else 10)
    p.add_argument(f"--{prefix}fraction", dest=f"{dest}fraction", type=float,
                   default=None if prefix else 0.5)
    p.add_argument(f"--{prefix}seed", dest=f"{dest}seed", type=int, default=None if prefix else 0)


def _add_cluster_flags(p):
    p.add_argument("--preference", default="median", help="'median' or a number")
    p.add_argument("--damping", type=float, default=0.5)
    p.add_argument("--ap-max-iter", type=int, default=200)
    p.add_argument("--ap-conv-iter", type=int, default=15)
    p.add_argument("--cluster-seed", type=int, default=0)


def _user_config(args):
    return AnonymizationConfig(args.distance, args.proximity, args.gender, args.N, args.n_star,
                               args.top_k, args.fraction, args.seed)


def _attacker_config(args):
    def pick(name):
        v = getattr(args, "attacker_" + name)
        return getattr(args, name) if v is None else v

    seed = args.attacker_seed if args.attacker_seed is not None else args.seed + 1
    return AnonymizationConfig(pick("distance"), pick("proximity"), pick("gender"), pick("N"),
                               pick("n_star"), pick("top_k"), pick("fraction"), seed)


def _cluster_params(args):
    pref = args.preference
    if pref != "median":
        try:
            pref = float(pref)
        except ValueError:
            raise UsageError(f"argument --preference: expected 'median' or a number, got {pref!r}") from None
    return ClusteringParams(pref, args.damping, args.ap_max_iter, args.ap_conv_iter)


def _load_model_if(args, needed):
    if args.model:
        return load_model(args.model)
    if needed:
        raise UsageError("--distance plda needs --model")
    return None


def _assignment_for(config, pool, model, args):
    if not config.uses_clusters:
        return None
    if args.clusters:
        return load_clusters(args.clusters, pool)
    return cluster_pool(pool, make_metric(config, model), _cluster_params(args), args.cluster_seed)


# --- cluster ---------------------------------------------------------------------

def cmd_cluster(args):
    _require(args, "pool")
    pool = load_pool(args.pool)
    model = _load_model_if(args, args.distance == "plda")
    cfg = AnonymizationConfig(metric=args.distance)
    asg = cluster_pool(pool, make_metric(cfg, model), _cluster_params(args), args.cluster_seed)
    _write_text(args.out, format_clusters(asg))
    print(f"clusters={asg.n_clusters} converged={int(asg.converged)} iterations={asg.iterations_run}",
          file=sys.stderr)
    return 0


# --- anonymize -------------------------------------------------------------------

def cmd_anonymize(args):
    if args.pool is None:
        raise UsageError(f"--proximity {args.proximity} needs --pool")
    _require(args, "input")
    cfg = _user_config(args)
    pool = load_pool(args.pool)
    ds = load_dataset(args.input)
    model = _load_model_if(args, cfg.metric == "plda")
    asg = _assignment_for(cfg, pool, model, args)
    anon, results = anonymize_dataset(ds, pool, cfg, asg, model, thread_count())
    _write_text(args.out, format_dataset(anon))
    if args.mapping_out:
        save_mapping(results, args.mapping_out)
    return 0


# --- evaluate ----------------------------------------------------------------------

def cmd_evaluate(args):
    _require(args, "model", "enroll", "trial")
    model = load_model(args.model)
    enroll, trial = load_dataset(args.enroll), load_dataset(args.trial)
    trials = load_trials(args.trials) if args.trials else full_trials(enroll, trial)
    kinds = args.scenario or list(SCENARIOS)
    needs_pool = any(k != "baseline" for k in kinds)
    if needs_pool and args.pool is None:
        raise UsageError("scenarios other than baseline need --pool")
    pool = load_pool(args.pool) if args.pool else None
    workers = thread_count()
    records = []
    user = _user_config(args) if needs_pool else None
    att = _attacker_config(args) if "semi_ignorant" in kinds else None
    asg = _assignment_for(user, pool, model, args) if user else None
    att_asg = None
    if att is not None and att.uses_clusters:
        att_asg = asg if (asg is not None and att.metric == user.metric) else _assignment_for(att, pool, model, args)
    for kind in kinds:
        scenario = AttackScenario(kind, user if kind != "baseline" else None,
                                  att if kind == "semi_ignorant" else None)
        rec = run_scenario(scenario, enroll, trial, trials, pool, model, asg, att_asg, workers,
                           with_hull=bool(args.hull_out))
        records.append(rec)
    if args.hull_out:
        with open(args.hull_out, "w", encoding="utf-8", newline="\n") as fh:
            for rec in records:
                fh.write(json.dumps({"scenario": rec["scenario"], "rocch": rec.pop("rocch")}) + "\n")
    _write_text(args.out, format_report(records))
    return 0


# --- report --------------------------------------------------------------------------

def cmd_report(args):
    rows = []
    for path in args.reports:
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if line.strip():
                    try:
                        rows.append(json.loads(line))
                    except json.JSONDecodeError as exc:
                        raise ValueError(f"{path}:{lineno}: {exc}") from None
    header = f"{'scenario':<14} {'EER(%)':>8} {'Cllr':>10} {'minCllr':>8} {'avgPLDA':>12} {'tar':>6} {'non':>7}"
    out = [header]
    for r in rows:
        out.append(f"{r['scenario']:<14} {100 * r['eer']:8.2f} {r['cllr']:10.4f} {r['min_cllr']:8.4f} "
                   f"{r['avg_plda_distance']:12.4f} {r['n_target_trials']:6d} {r['n_nontarget_trials']:7d}")
    _write_text(args.out, "\n".join(out) + "\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="xvec-anon", description="x-vector pseudo-speaker anonymization")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.commands = {}

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key = value defaults file")
        p.set_defaults(func=func)
        parser.commands[name] = p
        return p

    p = add("synth", cmd_synth, "generate a synthetic speaker population")
    p.add_argument("--dim", type=int)
    p.add_argument("--speakers", type=int)
    p.add_argument("--utts", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--between-scale", type=float, default=1.0)
    p.add_argument("--within-scale", type=float, default=0.1)
    p.add_argument("--gender-balance", type=float, default=0.5)
    p.add_argument("--prefix", default="spk")
    p.add_argument("--out", help="utterance-level x-vector file (default stdout)")
    p.add_argument("--pool-out", help="also write speaker-level means as a pool file")
    p.add_argument("--enroll-utts", type=int, default=0, help="split: utterances per speaker for enrollment")
    p.add_argument("--enroll-out")
    p.add_argument("--trial-out")
    p.add_argument("--trials-out", help="full trial list for the split")

    p = add("train-plda", cmd_train_plda, "train a PLDA model")
    p.add_argument("--train")
    p.add_argument("--out", help="model file (default stdout)")
    p.add_argument("--rank-q", type=int)
    p.add_argument("--rank-r", type=int)
    p.add_argument("--max-iterations", type=int, default=100)
    p.add_argument("--tolerance", type=float, default=1e-6)
    p.add_argument("--center", type=_bool, default=True)
    p.add_argument("--length-normalize", type=_bool, default=True)
    p.add_argument("--sigma-floor", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)

    p = add("cluster", cmd_cluster, "affinity propagation over a pool")
    p.add_argument("--pool")
    p.add_argument("--distance", choices=("cosine", "plda"), default="plda")
    p.add_argument("--model")
    p.add_argument("--out", help="cluster file (default stdout)")
    _add_cluster_flags(p)

    p = add("anonymize", cmd_anonymize, "map each speaker to a pseudo-speaker")
    p.add_argument("--input")
    p.add_argument("--pool")
    p.add_argument("--model")
    p.add_argument("--clusters", help="precomputed cluster file for sparse/dense")
    p.add_argument("--out", help="anonymized x-vector file (default stdout)")
    p.add_argument("--mapping-out")
    _add_anon_flags(p)
    _add_cluster_flags(p)

    p = add("evaluate", cmd_evaluate, "run attack scenarios")
    p.add_argument("--model")
    p.add_argument("--enroll")
    p.add_argument("--trial")
    p.add_argument("--trials", help="trial list (default: every enrollee vs every trial utterance)")
    p.add_argument("--pool")
    p.add_argument("--clusters")
    p.add_argument("--scenario", action="append", choices=SCENARIOS)
    p.add_argument("--out", help="JSON-lines report (default stdout)")
    p.add_argument("--hull-out", help="JSON-lines ROCCH vertices per scenario")
    _add_anon_flags(p)
    _add_anon_flags(p, "attacker-", " (attacker side; defaults to the user's value)")
    _add_cluster_flags(p)

    p = add("report", cmd_report, "tabulate JSON-lines reports")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out")
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` when one is given."""
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    values = read_config(args.config)
    sub = parser.commands[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, raw in values.items():
        action = known.get(key)
        if action is None or key in ("help", "config"):
            raise UsageError(f"{args.config}: unknown key {key!r} for {args.command}")
        if action.nargs == 0:
            defaults[key] = _bool(raw)
            continue
        conv = action.type or str
        val = [conv(v) for v in raw.split(",")] if isinstance(action, argparse._AppendAction) else conv(raw)
        if action.choices is not None and any(v not in action.choices for v in (val if isinstance(val, list) else [val])):
            raise UsageError(f"{args.config}: invalid value {raw!r} for {key}")
        defaults[key] = val
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        parser.exit(2, f"xvec-anon: error: {exc}\n")
    except (OSError, argparse.ArgumentTypeError, ValueError) as exc:
        parser.exit(2, f"xvec-anon: error: {exc}\n")
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"xvec-anon {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"xvec-anon {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
