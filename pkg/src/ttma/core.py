"""Domain types, RNG streams and the histogram/entropy helpers shared by every estimator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

METHODS = ("ttma_du", "ttma_cdu", "tta", "mcdo", "single")
MODALITIES = ("vector", "image")


def as_soft_label(values: Sequence[float]) -> np.ndarray:
    """Return a float64 copy of a class-score vector."""
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("soft label must be a non-empty 1-d vector")
    return arr


def one_hot(label: int, class_count: int) -> np.ndarray:
    if not 0 <= label < class_count:
        raise ValueError("label out of range")
    out = np.zeros(class_count, dtype=np.float64)
    out[label] = 1.0
    return out


def is_probability_vector(values: np.ndarray, atol: float = 1e-6) -> bool:
    values = np.asarray(values, dtype=np.float64)
    return bool(
        np.all(values >= -atol) and np.all(values <= 1 + atol) and abs(values.sum() - 1.0) <= atol
    )


@dataclass(frozen=True)
class LabeledSample:
    id: int
    data: np.ndarray
    label: np.ndarray
    modality: str = "vector"

    @property
    def class_index(self) -> int:
        return int(np.argmax(self.label))


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of one-hot labelled samples.

    Inputs are stored stacked as ``data[i]`` so estimators can batch them; ``samples``
    yields the per-sample view.
    """

    data: np.ndarray
    labels: np.ndarray
    ids: np.ndarray
    class_count: int
    modality: str = "vector"
    per_class_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        ids = np.asarray(self.ids, dtype=np.int64)
        if self.class_count < 2:
            raise ValueError("class_count must be at least 2")
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if data.shape[0] != labels.shape[0] or labels.shape[0] != ids.shape[0]:
            raise ValueError("data, labels and ids must have the same length")
        if labels.size and (labels.min() < 0 or labels.max() >= self.class_count):
            raise ValueError("label out of range")
        if len(np.unique(ids)) != ids.size:
            raise ValueError("sample ids must be unique")
        for arr in (data, labels, ids):
            arr.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", ids)
        index = {c: ids[labels == c].copy() for c in range(self.class_count)}
        object.__setattr__(self, "per_class_index", index)

    def __len__(self) -> int:
        return int(self.ids.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.class_count == other.class_count
            and self.modality == other.modality
            and np.array_equal(self.ids, other.ids)
            and np.array_equal(self.labels, other.labels)
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )

    @property
    def sample_shape(self) -> tuple:
        return tuple(self.data.shape[1:])

    @property
    def samples(self) -> Iterator[LabeledSample]:
        for i in range(len(self)):
            yield self.sample(i)

    def sample(self, position: int) -> LabeledSample:
        return LabeledSample(
            id=int(self.ids[position]),
            data=self.data[position],
            label=one_hot(int(self.labels[position]), self.class_count),
            modality=self.modality,
        )

    def positions(self, ids: Sequence[int]) -> np.ndarray:
        """Map sample ids to row positions."""
        lookup = getattr(self, "_lookup", None)
        if lookup is None:
            lookup = {int(i): p for p, i in enumerate(self.ids)}
            object.__setattr__(self, "_lookup", lookup)
        return np.array([lookup[int(i)] for i in ids], dtype=np.int64)

    def subset(self, positions: Sequence[int]) -> "Dataset":
        positions = np.asarray(positions, dtype=np.int64)
        return Dataset(
            data=self.data[positions],
            labels=self.labels[positions],
            ids=self.ids[positions],
            class_count=self.class_count,
            modality=self.modality,
        )

    def one_hot_labels(self) -> np.ndarray:
        return np.eye(self.class_count)[self.labels]


@dataclass(frozen=True)
class MixupDraw:
    lam: float
    partner_class: int
    partner_id: int
    alpha: float


@dataclass(frozen=True)
class VoteHistogram:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("histogram needs at least one class")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(counts == np.round(counts)):
                raise ValueError("histogram counts must be integers")
        counts = counts.astype(np.int64)
        if np.any(counts < 0):
            raise ValueError("histogram counts must be non-negative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_labels(cls, hard_labels: Sequence[int], class_count: int) -> "VoteHistogram":
        hard_labels = np.asarray(hard_labels, dtype=np.int64)
        return cls(np.bincount(hard_labels, minlength=class_count)[:class_count])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def class_count(self) -> int:
        return int(self.counts.size)

    def proportions(self) -> np.ndarray:
        if self.total == 0:
            raise ValueError("empty histogram")
        return self.counts / self.total

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoteHistogram):
            return NotImplemented
        return np.array_equal(self.counts, other.counts)


@dataclass(frozen=True)
class UncertaintyRecord:
    """One estimator output for a test sample (or a sample/partner-class pair in CDU mode)."""

    sample_id: int
    method: str
    predicted_class: int
    true_class: int
    uncertainty: float
    normalized_uncertainty: float
    confidence: float
    partner_class: Optional[int] = None
    afd: Optional[float] = None
    single_class: Optional[int] = None
    single_confidence: Optional[float] = None

    @property
    def correct(self) -> bool:
        return self.predicted_class == self.true_class

    @classmethod
    def build(cls, sample_id, method, predicted_class, true_class, uncertainty, class_count,
              confidence, **extra) -> "UncertaintyRecord":
        if method not in METHODS:
            raise ValueError(f"unknown method {method!r}")
        return cls(
            sample_id=int(sample_id),
            method=method,
            predicted_class=int(predicted_class),
            true_class=int(true_class),
            uncertainty=float(uncertainty),
            normalized_uncertainty=normalize_uncertainty(uncertainty, class_count),
            confidence=float(confidence),
            **extra,
        )


class RngStream:
    """Reproducible numpy Generator keyed by a 64-bit seed and a stream id.

    The stream id may be an int or a tuple of ints, so per-sample and per-(sample, class)
    substreams never share state.
    """

    def __init__(self, seed: int, stream_id=0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        if isinstance(stream_id, (tuple, list)):
            key = tuple(int(s) for s in stream_id)
        else:
            key = (int(stream_id),)
        self.stream_id = key
        self.generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(entropy=self.seed, spawn_key=key))
        )

    def child(self, *stream_id: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + tuple(stream_id))

    def __getattr__(self, name):
        return getattr(self.generator, name)


def entropy(hist: VoteHistogram) -> float:
    """Natural-log entropy of the vote proportions; empty classes contribute zero."""
    if hist.total <= 0:
        raise ValueError("empty histogram")
    p = hist.counts[hist.counts > 0] / hist.total
    h = float(-np.sum(p * np.log(p)))
    # a single occupied class yields -0.0
    return h if h > 0 else 0.0


def normalize_uncertainty(value: float, class_count: int) -> float:
    return float(value) / math.log(class_count)


def argmax_class(label) -> int:
    """Index of the largest score, ties broken towards the lowest index."""
    values = np.asarray(label, dtype=np.float64)
    if values.size == 0:
        raise ValueError("empty score vector")
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite score")
    return int(np.argmax(values))


def majority_vote(hist: VoteHistogram) -> int:
    if hist.total <= 0:
        raise ValueError("empty histogram")
    return argmax_class(hist.counts)


def vote_fraction(hist: VoteHistogram) -> float:
    return float(hist.counts[majority_vote(hist)] / hist.total)
