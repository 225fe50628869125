"""Attack scenarios against anonymized embeddings.

* baseline: original enrollment, original trials
* ignorant: original enrollment, trials anonymized with the user's config
* semi_ignorant: enrollment anonymized with the attacker's config, trials with the user's

Every scenario is scored with a PLDA verifier and summarized by ROCCH-EER,
Cllr, min-Cllr and the average PLDA distance between original and published
trial embeddings.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .anonymizer import AnonymizationConfig, anonymize_dataset
from .clustering import ClusterAssignment
from .dataset import Dataset, SpeakerPool
from .metrics import MetricError, ScoreSet, cllr, min_cllr, rocch, rocch_eer
from .plda import PldaModel, llr_matrix, llr_rows

SCENARIOS = ("baseline", "ignorant", "semi_ignorant")


class EvaluationError(ValueError):
    pass


class Trial(NamedTuple):
    enroll_speaker_id: str
    test_utterance_id: str
    is_target: bool


@dataclass(frozen=True)
class AttackScenario:
    kind: str
    user_config: AnonymizationConfig | None = None
    attacker_config: AnonymizationConfig | None = None

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise EvaluationError(f"unknown scenario {self.kind!r}")
        has_user, has_att = self.user_config is not None, self.attacker_config is not None
        ok = {
            "baseline": not has_user and not has_att,
            "ignorant": has_user and not has_att,
            "semi_ignorant": has_user and has_att,
        }[self.kind]
        if not ok:
            raise EvaluationError(f"invalid configs for scenario {self.kind}")


def enrollment_models(dataset: Dataset, model: PldaModel | None = None) -> dict[str, np.ndarray]:
    """Per-speaker mean of the (model-conditioned) enrollment embeddings."""
    X = dataset.embeddings if model is None else model.transform(dataset.embeddings)
    return {s: X[ix].mean(axis=0) for s, ix in dataset.speaker_indices().items()}


def score_trials(model: PldaModel, enrollments: dict[str, np.ndarray], trials, test_data: Dataset) -> ScoreSet:
    trials = list(trials)
    if not trials:
        raise EvaluationError("empty trial list")
    utt_index = test_data.index_of()
    spk = sorted({t.enroll_speaker_id for t in trials})
    spk_pos = {s: i for i, s in enumerate(spk)}
    for t in trials:
        if t.enroll_speaker_id not in enrollments:
            raise EvaluationError(f"unknown enrollment speaker {t.enroll_speaker_id!r}")
        if t.test_utterance_id not in utt_index:
            raise EvaluationError(f"unknown test utterance {t.test_utterance_id!r}")
    E = np.vstack([enrollments[s] for s in spk])
    T = model.transform(test_data.embeddings)
    S = llr_matrix(model, E, T)
    rows = np.array([spk_pos[t.enroll_speaker_id] for t in trials])
    cols = np.array([utt_index[t.test_utterance_id] for t in trials])
    vals = S[rows, cols]
    mask = np.array([t.is_target for t in trials], dtype=bool)
    return ScoreSet(vals[mask], vals[~mask])


def average_plda_distance(model: PldaModel, original: Dataset, anonymized: Dataset) -> float:
    """Mean minus-LLR between each utterance and its anonymized version."""
    anon_index = anonymized.index_of()
    if set(anon_index) != set(original.utterance_ids):
        raise EvaluationError("original and anonymized utterance ids differ")
    rows = [anon_index[u] for u in original.utterance_ids]
    X = model.transform(original.embeddings)
    Y = model.transform(anonymized.embeddings[rows])
    return float(np.mean(-llr_rows(model, X, Y)))


def full_trials(enroll: Dataset, test: Dataset, same_gender_only: bool = False) -> list[Trial]:
    """Every enrolled speaker against every test utterance."""
    egender = enroll.speaker_gender()
    out = []
    for s in enroll.speakers():
        for u, ts, g in zip(test.utterance_ids, test.speaker_ids, test.genders):
            if same_gender_only and g != egender[s]:
                continue
            out.append(Trial(s, u, ts == s))
    return out


def split_enroll_trial(dataset: Dataset, n_enroll: int) -> tuple[Dataset, Dataset]:
    """First ``n_enroll`` utterances of each speaker enroll, the rest are trials."""
    seen: dict[str, int] = {}
    is_enroll = []
    for s in dataset.speaker_ids:
        is_enroll.append(seen.get(s, 0) < n_enroll)
        seen[s] = seen.get(s, 0) + 1
    mask = np.array(is_enroll)
    if mask.all() or not mask.any():
        raise EvaluationError("split leaves enrollment or trial side empty")
    return _subset(dataset, mask), _subset(dataset, ~mask)


def _subset(ds: Dataset, mask) -> Dataset:
    keep = np.flatnonzero(mask)
    return Dataset([ds.utterance_ids[i] for i in keep], [ds.speaker_ids[i] for i in keep],
                   [ds.genders[i] for i in keep], ds.embeddings[keep])


def format_trials(trials) -> str:
    return "".join(f"{t.enroll_speaker_id} {t.test_utterance_id} "
                   f"{'target' if t.is_target else 'nontarget'}\n" for t in trials)


def save_trials(trials, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_trials(trials))


def load_trials(path: str | os.PathLike) -> list[Trial]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3 or parts[2] not in ("target", "nontarget"):
                raise EvaluationError(f"line {lineno}: expected '<enroll> <utt> target|nontarget'")
            out.append(Trial(parts[0], parts[1], parts[2] == "target"))
    if not out:
        raise EvaluationError("empty trial list")
    return out


def scenario_data(scenario: AttackScenario, enroll: Dataset, trial: Dataset, pool: SpeakerPool,
                  model: PldaModel, assignment: ClusterAssignment | None = None,
                  attacker_assignment: ClusterAssignment | None = None,
                  workers: int = 1) -> tuple[Dataset, Dataset]:
    """The (enrollment, trial) datasets the attacker ends up comparing."""
    if scenario.kind == "baseline":
        return enroll, trial
    published, _ = anonymize_dataset(trial, pool, scenario.user_config, assignment, model, workers)
    if scenario.kind == "ignorant":
        return enroll, published
    att = attacker_assignment if attacker_assignment is not None else assignment
    enrolled, _ = anonymize_dataset(enroll, pool, scenario.attacker_config, att, model, workers)
    return enrolled, published


def run_scenario(scenario: AttackScenario, enroll: Dataset, trial: Dataset, trials,
                 pool: SpeakerPool, model: PldaModel, assignment: ClusterAssignment | None = None,
                 attacker_assignment: ClusterAssignment | None = None, workers: int = 1,
                 with_hull: bool = False) -> dict:
    """Run one attack and return its report record."""
    enroll_x, trial_x = scenario_data(scenario, enroll, trial, pool, model, assignment,
                                      attacker_assignment, workers)
    scores = score_trials(model, enrollment_models(enroll_x, model), trials, trial_x)
    try:
        scores.check()
    except MetricError as exc:
        raise EvaluationError(str(exc)) from None
    rec = {
        "scenario": scenario.kind,
        "eer": rocch_eer(scores),
        "cllr": cllr(scores),
        "min_cllr": min_cllr(scores),
        "avg_plda_distance": average_plda_distance(model, trial, trial_x),
        "n_target_trials": int(scores.target_scores.size),
        "n_nontarget_trials": int(scores.nontarget_scores.size),
        "user_config": None if scenario.user_config is None else scenario.user_config.digest(),
        "attacker_config": None if scenario.attacker_config is None else scenario.attacker_config.digest(),
    }
    if with_hull:
        rec["rocch"] = [list(p) for p in rocch(scores)]
    return rec


def format_report(records) -> str:
    return "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
