"""Embedding datasets: text I/O and speaker-level pooling.

Record lines look like::

    <utterance_id> <speaker_id> <M|F> <v1> ... <vd>

Blank lines and lines starting with ``#`` are ignored on input.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np

GENDERS = ("M", "F")


class DatasetError(ValueError):
    """Raised for malformed or inconsistent embedding files and datasets."""


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def fmt_vector(v) -> str:
    return " ".join(fmt_float(x) for x in v)


def other_gender(g: str) -> str:
    return "F" if g == "M" else "M"


class UtteranceRecord(NamedTuple):
    utterance_id: str
    speaker_id: str
    gender: str
    embedding: np.ndarray


@dataclass(frozen=True, eq=False)
class Dataset:
    """Utterance-level embeddings stored column-wise.

    ``embeddings`` is an ``(n, dim)`` float64 array whose rows line up with
    ``utterance_ids``, ``speaker_ids`` and ``genders``.
    """

    utterance_ids: tuple[str, ...]
    speaker_ids: tuple[str, ...]
    genders: tuple[str, ...]
    embeddings: np.ndarray

    def __post_init__(self):
        emb = np.array(self.embeddings, dtype=np.float64)
        if emb.ndim != 2:
            raise DatasetError("embeddings must be a 2-d array")
        emb.setflags(write=False)
        object.__setattr__(self, "embeddings", emb)
        for name in ("utterance_ids", "speaker_ids", "genders"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        validate(self)

    @classmethod
    def from_records(cls, records: Sequence[UtteranceRecord]) -> "Dataset":
        if not records:
            raise DatasetError("empty dataset")
        return cls(
            [r.utterance_id for r in records],
            [r.speaker_id for r in records],
            [r.gender for r in records],
            np.vstack([np.asarray(r.embedding, dtype=np.float64) for r in records]),
        )

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def __len__(self) -> int:
        return len(self.utterance_ids)

    @property
    def records(self) -> list[UtteranceRecord]:
        return list(iter(self))

    def __iter__(self) -> Iterator[UtteranceRecord]:
        for i in range(len(self)):
            yield UtteranceRecord(
                self.utterance_ids[i], self.speaker_ids[i], self.genders[i], self.embeddings[i]
            )

    def speakers(self) -> list[str]:
        """Distinct speaker ids in order of first appearance."""
        return list(dict.fromkeys(self.speaker_ids))

    def speaker_gender(self) -> dict[str, str]:
        return dict(zip(self.speaker_ids, self.genders))

    def speaker_indices(self) -> dict[str, np.ndarray]:
        groups: dict[str, list[int]] = {}
        for i, s in enumerate(self.speaker_ids):
            groups.setdefault(s, []).append(i)
        return {s: np.asarray(ix) for s, ix in groups.items()}

    def index_of(self) -> dict[str, int]:
        return {u: i for i, u in enumerate(self.utterance_ids)}

    def replace(self, embeddings=None, genders=None) -> "Dataset":
        return Dataset(
            self.utterance_ids,
            self.speaker_ids,
            self.genders if genders is None else genders,
            self.embeddings if embeddings is None else embeddings,
        )

    def equals(self, other: "Dataset") -> bool:
        return (
            self.utterance_ids == other.utterance_ids
            and self.speaker_ids == other.speaker_ids
            and self.genders == other.genders
            and self.embeddings.shape == other.embeddings.shape
            and bool(np.array_equal(self.embeddings, other.embeddings))
        )


def validate(ds: Dataset) -> None:
    n = len(ds.utterance_ids)
    if n == 0:
        raise DatasetError("empty dataset")
    if len(ds.speaker_ids) != n or len(ds.genders) != n or ds.embeddings.shape[0] != n:
        raise DatasetError("field lengths do not match")
    if ds.embeddings.shape[1] < 1:
        raise DatasetError("embedding dimension must be >= 1")
    if not np.all(np.isfinite(ds.embeddings)):
        bad = int(np.argwhere(~np.isfinite(ds.embeddings))[0, 0])
        raise DatasetError(f"non-finite embedding value in record {bad + 1}")
    seen: dict[str, str] = {}
    uids: set[str] = set()
    for i, (u, s, g) in enumerate(zip(ds.utterance_ids, ds.speaker_ids, ds.genders)):
        if not u or not s:
            raise DatasetError(f"record {i + 1}: empty id")
        if g not in GENDERS:
            raise DatasetError(f"record {i + 1}: invalid gender {g!r}")
        if u in uids:
            raise DatasetError(f"record {i + 1}: duplicate utterance_id {u!r}")
        uids.add(u)
        if seen.setdefault(s, g) != g:
            raise DatasetError(f"record {i + 1}: inconsistent gender for speaker {s!r}")


def parse_lines(lines) -> Dataset:
    """Parse x-vector text lines. Errors name the 1-based line number."""
    uids, spks, gens, rows = [], [], [], []
    dim = None
    first_line = None
    seen_u: set[str] = set()
    spk_gender: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 4:
            raise DatasetError(f"line {lineno}: expected at least 4 fields, got {len(fields)}")
        u, s, g = fields[:3]
        if g not in GENDERS:
            raise DatasetError(f"line {lineno}: gender must be M or F, got {g!r}")
        try:
            vals = [float(x) for x in fields[3:]]
        except ValueError as exc:
            raise DatasetError(f"line {lineno}: {exc}") from None
        if not all(np.isfinite(vals)):
            raise DatasetError(f"line {lineno}: non-finite value")
        if dim is None:
            dim, first_line = len(vals), lineno
        elif len(vals) != dim:
            raise DatasetError(
                f"line {lineno}: dimension mismatch ({len(vals)} values, "
                f"expected {dim} as on line {first_line})"
            )
        if u in seen_u:
            raise DatasetError(f"line {lineno}: duplicate utterance_id {u!r}")
        seen_u.add(u)
        if spk_gender.setdefault(s, g) != g:
            raise DatasetError(f"line {lineno}: inconsistent gender for speaker {s!r}")
        uids.append(u)
        spks.append(s)
        gens.append(g)
        rows.append(vals)
    if not rows:
        raise DatasetError("empty dataset")
    return Dataset(uids, spks, gens, np.asarray(rows, dtype=np.float64))


def load_dataset(path: str | os.PathLike) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_lines(fh)


def format_dataset(ds: Dataset) -> str:
    return "".join(
        f"{u} {s} {g} {fmt_vector(v)}\n"
        for u, s, g, v in zip(ds.utterance_ids, ds.speaker_ids, ds.genders, ds.embeddings)
    )


def save_dataset(ds: Dataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_dataset(ds))


@dataclass(frozen=True, eq=False)
class SpeakerPool:
    """Speaker-level embeddings with gender labels, one row per speaker."""

    speaker_ids: tuple[str, ...]
    genders: tuple[str, ...]
    embeddings: np.ndarray

    def __post_init__(self):
        emb = np.array(self.embeddings, dtype=np.float64)
        emb.setflags(write=False)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "speaker_ids", tuple(self.speaker_ids))
        object.__setattr__(self, "genders", tuple(self.genders))
        if len(set(self.speaker_ids)) != len(self.speaker_ids):
            raise DatasetError("speaker_id must be unique within a pool")
        if emb.ndim != 2 or emb.shape[0] != len(self.speaker_ids) or emb.shape[0] == 0:
            raise DatasetError("pool embeddings must be a nonempty (n, dim) array")
        if any(g not in GENDERS for g in self.genders):
            raise DatasetError("pool genders must be M or F")

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def __len__(self) -> int:
        return len(self.speaker_ids)

    @property
    def entries(self) -> list[tuple[str, str, np.ndarray]]:
        return list(zip(self.speaker_ids, self.genders, self.embeddings))

    def index_of(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.speaker_ids)}

    def gender_indices(self, gender: str) -> np.ndarray:
        return np.flatnonzero(np.asarray(self.genders) == gender)

    def as_dataset(self) -> Dataset:
        return Dataset(self.speaker_ids, self.speaker_ids, self.genders, self.embeddings)

    @classmethod
    def from_dataset(cls, ds: Dataset) -> "SpeakerPool":
        """Read a pool file that was loaded as a dataset (utterance_id = speaker_id)."""
        if len(set(ds.speaker_ids)) != len(ds):
            return build_speaker_pool(ds)
        return cls(ds.speaker_ids, ds.genders, ds.embeddings)


def speaker_means(ds: Dataset) -> dict[str, np.ndarray]:
    return {s: ds.embeddings[ix].mean(axis=0) for s, ix in ds.speaker_indices().items()}


def build_speaker_pool(ds: Dataset) -> SpeakerPool:
    """Average each speaker's utterance embeddings into a single pool entry."""
    means = speaker_means(ds)
    gender = ds.speaker_gender()
    ids = list(means)
    return SpeakerPool(ids, [gender[s] for s in ids], np.vstack([means[s] for s in ids]))


def save_pool(pool: SpeakerPool, path: str | os.PathLike) -> None:
    save_dataset(pool.as_dataset(), path)


def load_pool(path: str | os.PathLike) -> SpeakerPool:
    return SpeakerPool.from_dataset(load_dataset(path))
