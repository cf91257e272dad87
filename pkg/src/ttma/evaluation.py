"""Accuracy-rejection curves, expected calibration error and uncertainty histograms."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_RATES = tuple(round(0.05 * i, 2) for i in range(20))  # 0, 0.05, ..., 0.95
DEFAULT_BINS = 10


@dataclass
class RejectionCurve:
    rates: np.ndarray
    accuracy: np.ndarray
    retained: np.ndarray

    def at(self, rate: float) -> float:
        idx = np.flatnonzero(np.isclose(self.rates, rate, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise KeyError(f"rate {rate} not on the curve")
        return float(self.accuracy[idx[0]])

    def rows(self):
        return [(float(t), float(a), int(n)) for t, a, n in zip(self.rates, self.accuracy, self.retained)]

    def write_csv(self, path) -> None:
        _write_rows(path, ["rate", "accuracy", "retained"], self.rows())


@dataclass
class CalibrationReport:
    edges: np.ndarray
    confidence: np.ndarray  # per-bin mean confidence (nan for empty bins)
    accuracy: np.ndarray
    counts: np.ndarray
    ece: float

    def rows(self):
        return [
            (i, float(self.edges[i]), float(self.edges[i + 1]), _nan_to_none(c), _nan_to_none(a), int(n))
            for i, (c, a, n) in enumerate(zip(self.confidence, self.accuracy, self.counts))
        ]

    def to_json(self) -> dict:
        return {
            "ece": self.ece,
            "bins": [
                {"bin": i, "lo": lo, "hi": hi, "confidence": c, "accuracy": a, "count": n}
                for i, lo, hi, c, a, n in self.rows()
            ],
        }

    def write_csv(self, path) -> None:
        _write_rows(path, ["bin", "lo", "hi", "confidence", "accuracy", "count"], self.rows())


@dataclass
class UncertaintyHistograms:
    edges: np.ndarray
    correct: np.ndarray
    incorrect: np.ndarray

    def overlap(self) -> float:
        """Overlap coefficient of the two normalized histograms, sum of bin-wise minima."""
        if self.correct.sum() == 0 or self.incorrect.sum() == 0:
            return 0.0
        p = self.correct / self.correct.sum()
        q = self.incorrect / self.incorrect.sum()
        return float(np.minimum(p, q).sum())

    def rows(self):
        return [(float(lo), float(hi), int(c), int(i)) for lo, hi, c, i in
                zip(self.edges[:-1], self.edges[1:], self.correct, self.incorrect)]

    def write_csv(self, path) -> None:
        _write_rows(path, ["bin_lo", "bin_hi", "correct_count", "incorrect_count"], self.rows())


def _nan_to_none(v):
    v = float(v)
    return None if math.isnan(v) else v


def _write_rows(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in row])


def _arrays(records, confidence_field="confidence"):
    ids = np.array([r.sample_id for r in records], dtype=np.int64)
    unc = np.array([r.uncertainty for r in records], dtype=np.float64)
    correct = np.array([r.correct for r in records], dtype=bool)
    conf = np.array([getattr(r, confidence_field) for r in records], dtype=np.float64)
    return ids, unc, correct, conf


def accuracy_rejection_curve(records, rates=DEFAULT_RATES) -> RejectionCurve:
    """Accuracy after discarding the floor(T·N) most uncertain records, for each T.

    Ties in uncertainty are broken by sample id so the curve is reproducible.
    """
    records = list(records)
    if not records:
        raise ValueError("no records")
    rates = np.asarray(rates, dtype=np.float64)
    if rates.size == 0 or np.any(np.diff(rates) <= 0) or rates[0] < 0 or rates[-1] >= 1:
        raise ValueError("rates must be strictly increasing within [0, 1)")
    ids, unc, correct, _ = _arrays(records)
    order = np.lexsort((ids, -unc))  # most uncertain first
    ranked = correct[order]
    n = len(records)
    acc, kept = [], []
    for t in rates:
        drop = min(int(math.floor(t * n + 1e-9)), n - 1)
        acc.append(float(ranked[drop:].mean()))
        kept.append(n - drop)
    return RejectionCurve(rates, np.array(acc), np.array(kept, dtype=np.int64))


def ece(records, bins: int = DEFAULT_BINS, confidence_field: str = "confidence") -> CalibrationReport:
    """Expected calibration error over equal-width confidence bins on [0, 1].

    Bins are half-open [lo, hi) except the last, which includes 1.
    """
    records = list(records)
    if not records:
        raise ValueError("no records")
    if bins < 1:
        raise ValueError("bins must be at least 1")
    _, _, correct, conf = _arrays(records, confidence_field)
    if np.any(conf < 0) or np.any(conf > 1) or not np.all(np.isfinite(conf)):
        raise ValueError("confidences must lie in [0, 1]")
    edges = np.linspace(0.0, 1.0, bins + 1)
    which = np.minimum((conf * bins).astype(np.int64), bins - 1)
    counts = np.bincount(which, minlength=bins)
    conf_sum = np.bincount(which, weights=conf, minlength=bins)
    acc_sum = np.bincount(which, weights=correct.astype(np.float64), minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_conf = conf_sum / counts
        mean_acc = acc_sum / counts
    n = len(records)
    occupied = counts > 0
    value = float(np.sum(counts[occupied] / n * np.abs(mean_acc[occupied] - mean_conf[occupied])))
    return CalibrationReport(edges, mean_conf, mean_acc, counts, value)


def uncertainty_histograms(records, bin_width: float = 0.1) -> UncertaintyHistograms:
    """Histograms of normalized uncertainty for correct and incorrect records."""
    if bin_width <= 0:
        raise ValueError("bin_width must be positive")
    records = list(records)
    n_bins = max(1, int(math.ceil(1.0 / bin_width - 1e-9)))
    edges = np.minimum(np.arange(n_bins + 1) * bin_width, 1.0)
    values = np.array([r.normalized_uncertainty for r in records], dtype=np.float64)
    correct = np.array([r.correct for r in records], dtype=bool)
    which = np.clip(np.floor(values / bin_width + 1e-12).astype(np.int64), 0, n_bins - 1)
    return UncertaintyHistograms(
        edges=edges,
        correct=np.bincount(which[correct], minlength=n_bins),
        incorrect=np.bincount(which[~correct], minlength=n_bins),
    )


def overall_accuracy(records) -> float:
    records = list(records)
    return float(np.mean([r.correct for r in records])) if records else float("nan")


def single_pass_accuracy(records) -> float:
    """Accuracy of the deterministic single-pass prediction carried on each record."""
    values = [r.single_class == r.true_class for r in records if r.single_class is not None]
    return float(np.mean(values)) if values else float("nan")
