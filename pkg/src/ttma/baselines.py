"""TTA (input perturbation) and MC-dropout (model perturbation) baselines.

Both use the same hard-label vote histogram and entropy as TTMA so the three
uncertainties are directly comparable.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .augmentation import AffineConfig, affine_augment
from .core import (
    Dataset,
    RngStream,
    UncertaintyRecord,
    VoteHistogram,
    argmax_class,
    entropy,
    majority_vote,
    vote_fraction,
)
from .engine import map_samples
from .predictor import Predictor

DEFAULT_PASSES = 30
_TTA_STREAM = 1
_MCDO_STREAM = 2


class VoteResult(NamedTuple):
    predicted_class: int
    uncertainty: float
    hist: VoteHistogram


def _vote(probs: np.ndarray, class_count: int) -> VoteResult:
    hard = [argmax_class(p) for p in probs]
    hist = VoteHistogram.from_labels(hard, class_count)
    return VoteResult(majority_vote(hist), entropy(hist), hist)


def tta_uncertainty(x_test, f: Predictor, cfg: AffineConfig, N: int = DEFAULT_PASSES, seed: int = 0,
                    sample_id: int = 0, modality: str = None) -> VoteResult:
    if N < 1:
        raise ValueError("N must be at least 1")
    x_test = np.asarray(x_test, dtype=np.float64)
    modality = modality or ("vector" if x_test.ndim == 1 else "image")
    rng = RngStream(seed, (_TTA_STREAM, sample_id, 0))
    batch = np.stack([affine_augment(x_test, modality, cfg, rng) for _ in range(N)])
    return _vote(f.predict(batch), f.class_count)


def mcdo_uncertainty(x_test, f: Predictor, dropout_p: float = 0.5, N: int = DEFAULT_PASSES,
                     seed: int = 0, sample_id: int = 0) -> VoteResult:
    if N < 1:
        raise ValueError("N must be at least 1")
    if not 0 <= dropout_p < 1:
        raise ValueError("dropout probability must lie in [0, 1)")
    rng = RngStream(seed, (_MCDO_STREAM, sample_id, 0))
    x_test = np.asarray(x_test, dtype=np.float64)
    batch = np.repeat(x_test[None], N, axis=0)
    return _vote(f.predict_stochastic(batch, rng, dropout_p), f.class_count)


def softmax_entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    p = p[p > 0]
    h = float(-np.sum(p * np.log(p)))
    return h if h > 0 else 0.0


def batch_baseline(test: Dataset, f: Predictor, method: str, *, affine: AffineConfig = None,
                   dropout_p: float = 0.5, N: int = DEFAULT_PASSES, seed: int = 0,
                   workers: int = 1) -> list[UncertaintyRecord]:
    """Per-sample records for ``method`` in {"tta", "mcdo", "single"}.

    "single" is one deterministic pass: max softmax as confidence, softmax entropy as
    uncertainty.
    """
    if method not in ("tta", "mcdo", "single"):
        raise ValueError(f"unknown baseline {method!r}")
    affine = affine or AffineConfig()
    M = f.class_count

    def one(position):
        sample_id = int(test.ids[position])
        x = test.data[position]
        true_class = int(test.labels[position])
        p = f.predict(x)
        single_class = argmax_class(p)
        extra = dict(single_class=single_class, single_confidence=float(p[single_class]))
        if method == "single":
            return UncertaintyRecord.build(sample_id, "single", single_class, true_class,
                                           softmax_entropy(p), M, float(p[single_class]), **extra)
        if method == "tta":
            res = tta_uncertainty(x, f, affine, N, seed, sample_id, test.modality)
        else:
            res = mcdo_uncertainty(x, f, dropout_p, N, seed, sample_id)
        return UncertaintyRecord.build(sample_id, method, res.predicted_class, true_class,
                                       res.uncertainty, M, vote_fraction(res.hist), **extra)

    return map_samples(one, len(test), workers)
