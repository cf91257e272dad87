"""Test-time mixup augmentation: data uncertainty (all classes) and class-dependent uncertainty.

Both pipelines share one draw schedule.  The partners and mixing coefficients used for
test sample ``s`` and partner class ``j`` come from the RNG substream ``(seed, s, j)``,
so the all-class run is exactly the union of the per-class runs and results do not
depend on iteration order or worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from .augmentation import LAMBDA_MIN, mixup_pair, sample_lambda
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
from .predictor import Predictor

log = logging.getLogger(__name__)


@dataclass
class TtmaConfig:
    alpha: float = 0.2
    K: int = 30
    lambda_min: float = LAMBDA_MIN
    seed: int = 0
    allow_replacement: bool = True
    # forces every λ to this value (e.g. 1.0 for the identity check); None samples Beta(α, α)
    fixed_lambda: Optional[float] = None

    def validate(self) -> None:
        if self.K < 1:
            raise ValueError("K must be at least 1")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        if not 0 < self.lambda_min <= 1:
            raise ValueError("lambda_min must lie in (0, 1]")
        if self.fixed_lambda is not None and not self.lambda_min <= self.fixed_lambda <= 1:
            raise ValueError("fixed_lambda must lie in [lambda_min, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class InferredLabelSet:
    """All mixup draws for one test sample with their inferred soft and hard labels."""

    partner_class: np.ndarray
    draw: np.ndarray
    partner_id: np.ndarray
    lam: np.ndarray
    soft: np.ndarray
    hard: np.ndarray

    def __len__(self) -> int:
        return int(self.hard.size)

    @classmethod
    def concat(cls, parts) -> "InferredLabelSet":
        return cls(*(np.concatenate([getattr(p, f) for p in parts]) for f in
                     ("partner_class", "draw", "partner_id", "lam", "soft", "hard")))

    def records(self) -> list[tuple]:
        return [
            (int(c), int(k), int(i), float(l), int(h))
            for c, k, i, l, h in zip(self.partner_class, self.draw, self.partner_id, self.lam, self.hard)
        ]


class DuResult(NamedTuple):
    predicted_class: int
    du: float
    hist: VoteHistogram
    labels: InferredLabelSet


class CduResult(NamedTuple):
    predicted_class: int
    cdu: float
    hist: VoteHistogram
    labels: InferredLabelSet


def infer_test_label(pred_mixup, y_train, lam: float, lambda_min: float = LAMBDA_MIN) -> np.ndarray:
    """Undo the label mix: (f(x_mix) - (1-λ)·y_train) / λ.

    The result is only used through its argmax and may leave the simplex.
    """
    if not lam >= lambda_min:
        raise ValueError("lambda underflow")
    pred_mixup = np.asarray(pred_mixup, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=np.float64)
    if pred_mixup.shape != y_train.shape:
        raise ValueError("prediction and training label must have the same length")
    return (pred_mixup - (1.0 - lam) * y_train) / lam


def draw_partners(sample_id: int, class_j: int, train: Dataset, cfg: TtmaConfig):
    """Partner ids and λ values for (sample_id, class_j); same inputs give the same draws."""
    pool = train.per_class_index[class_j]
    if pool.size == 0:
        raise ValueError(f"class {class_j} has no training samples")
    rng = RngStream(cfg.seed, (sample_id, class_j))
    if pool.size >= cfg.K:
        partners = rng.choice(pool, size=cfg.K, replace=False)
    elif cfg.allow_replacement:
        log.warning("class %d has %d samples < K=%d; sampling partners with replacement",
                    class_j, pool.size, cfg.K)
        partners = rng.choice(pool, size=cfg.K, replace=True)
    else:
        raise ValueError(f"class {class_j} has {pool.size} samples, fewer than K={cfg.K}")
    if cfg.fixed_lambda is not None:
        lams = np.full(cfg.K, float(cfg.fixed_lambda))
    else:
        lams = np.array([sample_lambda(cfg.alpha, rng, cfg.lambda_min) for _ in range(cfg.K)])
    return partners, lams


def _class_labels(x_test, class_j, train, f, cfg, sample_id) -> InferredLabelSet:
    partners, lams = draw_partners(sample_id, class_j, train, cfg)
    x_partners = train.data[train.positions(partners)]
    mixed = np.stack([mixup_pair(x_test, xp, lam) for xp, lam in zip(x_partners, lams)])
    preds = f.predict(mixed)
    y_train = np.zeros(train.class_count)
    y_train[class_j] = 1.0
    soft = np.stack([infer_test_label(p, y_train, lam, cfg.lambda_min) for p, lam in zip(preds, lams)])
    hard = np.array([argmax_class(s) for s in soft], dtype=np.int64)
    return InferredLabelSet(
        partner_class=np.full(cfg.K, class_j, dtype=np.int64),
        draw=np.arange(cfg.K, dtype=np.int64),
        partner_id=np.asarray(partners, dtype=np.int64),
        lam=lams,
        soft=soft,
        hard=hard,
    )


def run_cdu(x_test, class_j: int, train: Dataset, f: Predictor, cfg: TtmaConfig,
            sample_id: int = 0) -> CduResult:
    """Class-dependent uncertainty of ``x_test`` against partners of class ``class_j``."""
    cfg.validate()
    if not 0 <= class_j < train.class_count:
        raise ValueError(f"class {class_j} out of range")
    labels = _class_labels(x_test, class_j, train, f, cfg, sample_id)
    hist = VoteHistogram.from_labels(labels.hard, train.class_count)
    return CduResult(majority_vote(hist), entropy(hist), hist, labels)


def run_du(x_test, train: Dataset, f: Predictor, cfg: TtmaConfig, sample_id: int = 0) -> DuResult:
    """Data uncertainty of ``x_test``: entropy of the vote over M·K mixup draws."""
    cfg.validate()
    parts = [_class_labels(x_test, m, train, f, cfg, sample_id) for m in range(train.class_count)]
    labels = InferredLabelSet.concat(parts)
    hist = VoteHistogram.from_labels(labels.hard, train.class_count)
    return DuResult(majority_vote(hist), entropy(hist), hist, labels)


def _single(f: Predictor, x) -> tuple[int, float]:
    p = f.predict(x)
    c = argmax_class(p)
    return c, float(p[c])


def _estimate_sample(position, test, train, f, cfg, mode, with_afd):
    sample_id = int(test.ids[position])
    x = test.data[position]
    true_class = int(test.labels[position])
    single_class, single_conf = _single(f, x)
    M = train.class_count
    extra = dict(single_class=single_class, single_confidence=single_conf)
    if mode == "du":
        res = run_du(x, train, f, cfg, sample_id)
        return [UncertaintyRecord.build(sample_id, "ttma_du", res.predicted_class, true_class,
                                        res.du, M, vote_fraction(res.hist), **extra)]
    out = []
    if with_afd:
        from .class_analysis import average_feature_distance
        v_test = f.features(x)
    for j in range(M):
        res = run_cdu(x, j, train, f, cfg, sample_id)
        afd = None
        if with_afd:
            v_train = f.features(train.data[train.positions(res.labels.partner_id)])
            afd = average_feature_distance(v_test, v_train)
        out.append(UncertaintyRecord.build(sample_id, "ttma_cdu", res.predicted_class, true_class,
                                           res.cdu, M, vote_fraction(res.hist), partner_class=j,
                                           afd=afd, **extra))
    return out


def map_samples(fn, n: int, workers: int = 1) -> list:
    """Apply ``fn`` to positions 0..n-1 and return results in position order."""
    if workers <= 1 or n <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n)))


def batch_estimate(test: Dataset, train: Dataset, f: Predictor, cfg: TtmaConfig,
                   mode: str = "du", workers: int = 1, with_afd: bool = True) -> list[UncertaintyRecord]:
    """Run TTMA over every test sample.

    ``mode="du"`` yields one record per sample; ``mode="cdu"`` yields one per
    (sample, partner class), sample-major, each carrying the AFD of the same partners.
    """
    if mode not in ("du", "cdu"):
        raise ValueError(f"unknown mode {mode!r}")
    cfg.validate()
    if test.class_count != train.class_count:
        raise ValueError("test and train disagree on the number of classes")
    results = map_samples(lambda p: _estimate_sample(p, test, train, f, cfg, mode, with_afd),
                          len(test), workers)
    return [r for rs in results for r in rs]
