"""Average feature distance and the class confusion / similarity analysis built on CDU."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset
from .engine import TtmaConfig, batch_estimate, draw_partners
from .predictor import Predictor

CONFUSION = "confusion"
SIMILARITY = "similarity"
UNRELATED = "unrelated"


def cosine_distance(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("degenerate feature")
    return float(1.0 - np.dot(u, v) / (nu * nv))


def average_feature_distance(v_test, v_partners) -> float:
    """Mean cosine distance between one feature vector and each row of ``v_partners``."""
    v_test = np.asarray(v_test, dtype=np.float64)
    v_partners = np.atleast_2d(np.asarray(v_partners, dtype=np.float64))
    norms = np.linalg.norm(v_partners, axis=1)
    n_test = np.linalg.norm(v_test)
    if n_test == 0 or np.any(norms == 0):
        raise ValueError("degenerate feature")
    d = 1.0 - (v_partners @ v_test) / (norms * n_test)
    return float(np.mean(d))


def afd(x_test, class_j: int, train: Dataset, f: Predictor, K: int, seed: int,
        sample_id: int = 0, allow_replacement: bool = True) -> float:
    """AFD of ``x_test`` to class ``class_j`` over the K partners CDU would draw."""
    cfg = TtmaConfig(K=K, seed=seed, allow_replacement=allow_replacement, fixed_lambda=1.0)
    partners, _ = draw_partners(sample_id, class_j, train, cfg)
    v_train = f.features(train.data[train.positions(partners)])
    return average_feature_distance(f.features(x_test), v_train)


def _stats(values) -> dict:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return {"count": 0, "mean": None, "median": None, "q1": None, "q3": None}
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    return {"count": int(values.size), "mean": float(values.mean()), "median": float(med),
            "q1": float(q1), "q3": float(q3)}


@dataclass
class ClassRelationshipMatrix:
    """CDU and AFD samples grouped by (true test class, partner class)."""

    class_count: int
    cdu: dict  # (test_class, partner_class) -> list of values
    afd: dict

    @classmethod
    def from_records(cls, records, class_count: int) -> "ClassRelationshipMatrix":
        cdu = {(i, j): [] for i in range(class_count) for j in range(class_count)}
        dist = {(i, j): [] for i in range(class_count) for j in range(class_count)}
        for r in records:
            if r.partner_class is None:
                continue
            key = (r.true_class, r.partner_class)
            cdu[key].append(r.uncertainty)
            if r.afd is not None:
                dist[key].append(r.afd)
        return cls(class_count, cdu, dist)

    def stats(self, test_class: int, partner_class: int) -> dict:
        return {
            "cdu": _stats(self.cdu[(test_class, partner_class)]),
            "afd": _stats(self.afd[(test_class, partner_class)]),
        }

    def median_cdu(self, test_class: int, partner_class: int) -> float:
        return self.stats(test_class, partner_class)["cdu"]["median"]

    def median_afd(self, test_class: int, partner_class: int) -> float:
        return self.stats(test_class, partner_class)["afd"]["median"]

    def row(self, test_class: int) -> list[dict]:
        return [self.stats(test_class, j) for j in range(self.class_count)]

    def default_thresholds(self) -> tuple[float, float]:
        """(afd_low, cdu_high): 25th percentile of off-diagonal AFD medians, and ln(M)/2."""
        medians = [self.median_afd(i, j) for i in range(self.class_count)
                   for j in range(self.class_count) if i != j]
        medians = [m for m in medians if m is not None]
        afd_low = float(np.percentile(medians, 25)) if medians else 0.0
        return afd_low, 0.5 * math.log(self.class_count)

    def relationships(self, afd_low=None, cdu_high=None) -> dict:
        default_afd, default_cdu = self.default_thresholds()
        afd_low = default_afd if afd_low is None else afd_low
        cdu_high = default_cdu if cdu_high is None else cdu_high
        out = {}
        for i in range(self.class_count):
            for j in range(self.class_count):
                if i == j or not self.cdu[(i, j)] or not self.afd[(i, j)]:
                    continue
                out[(i, j)] = classify_relationship(self.median_cdu(i, j), self.median_afd(i, j),
                                                    afd_low, cdu_high, self.class_count)
        return out

    def to_json(self) -> dict:
        afd_low, cdu_high = self.default_thresholds()
        rel = self.relationships(afd_low, cdu_high)
        return {
            "class_count": self.class_count,
            "thresholds": {"afd_low": afd_low, "cdu_high": cdu_high},
            "cells": [
                {"test_class": i, "partner_class": j, **self.stats(i, j),
                 "relationship": rel.get((i, j))}
                for i in range(self.class_count) for j in range(self.class_count)
            ],
        }

    def write_csv(self, path) -> None:
        """Rows: test class; columns: partner class; cells: 'median CDU | median AFD'."""
        def fmt(v):
            return "" if v is None else f"{v:.6f}"

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["test_class"] + [f"partner_{j}" for j in range(self.class_count)])
            for i in range(self.class_count):
                writer.writerow([i] + [f"{fmt(self.median_cdu(i, j))} | {fmt(self.median_afd(i, j))}"
                                       for j in range(self.class_count)])

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def build_relationship_matrix(test: Dataset, train: Dataset, f: Predictor, cfg: TtmaConfig,
                              workers: int = 1) -> ClassRelationshipMatrix:
    records = batch_estimate(test, train, f, cfg, mode="cdu", workers=workers, with_afd=True)
    return ClassRelationshipMatrix.from_records(records, train.class_count)


def classify_relationship(cdu_median: float, afd_median: float, afd_low_threshold: float,
                          cdu_high_threshold: float, class_count: int = None) -> str:
    """Close in feature space with unstable votes -> confusion; close and stable ->
    similarity; far -> unrelated."""
    if not 0 <= afd_low_threshold <= 2:
        raise ValueError("afd threshold must lie in [0, 2]")
    upper = math.log(class_count) if class_count else math.inf
    if not 0 <= cdu_high_threshold <= upper:
        raise ValueError("cdu threshold must lie in [0, ln M]")
    if afd_median > afd_low_threshold:
        return UNRELATED
    return CONFUSION if cdu_median >= cdu_high_threshold else SIMILARITY

