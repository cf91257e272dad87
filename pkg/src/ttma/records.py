"""CSV (de)serialization of uncertainty records.

One row per record::

    sample_id,method,partner_class,predicted_class,true_class,correct,uncertainty,
    normalized_uncertainty,confidence,afd,single_class,single_confidence

``partner_class`` and ``afd`` are empty except for ``ttma_cdu`` rows.  Floats are written
with ``repr`` so a read/write round trip is exact.
"""

from __future__ import annotations

import csv
from collections import OrderedDict

from .core import METHODS, UncertaintyRecord

COLUMNS = (
    "sample_id", "method", "partner_class", "predicted_class", "true_class", "correct",
    "uncertainty", "normalized_uncertainty", "confidence", "afd", "single_class",
    "single_confidence",
)


class RecordFormatError(ValueError):
    pass


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_records_csv(records, path) -> int:
    n = 0
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in records:
            writer.writerow([_fmt(r.correct if c == "correct" else getattr(r, c)) for c in COLUMNS])
            n += 1
    return n


def _opt(value, cast):
    return None if value in ("", None) else cast(value)


def read_records_csv(path) -> list[UncertaintyRecord]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != COLUMNS:
            raise RecordFormatError(f"{path}: expected columns {','.join(COLUMNS)}")
        out = []
        for line, row in enumerate(reader, start=2):
            try:
                if row["method"] not in METHODS:
                    raise ValueError(f"unknown method {row['method']!r}")
                out.append(UncertaintyRecord(
                    sample_id=int(row["sample_id"]),
                    method=row["method"],
                    predicted_class=int(row["predicted_class"]),
                    true_class=int(row["true_class"]),
                    uncertainty=float(row["uncertainty"]),
                    normalized_uncertainty=float(row["normalized_uncertainty"]),
                    confidence=float(row["confidence"]),
                    partner_class=_opt(row["partner_class"], int),
                    afd=_opt(row["afd"], float),
                    single_class=_opt(row["single_class"], int),
                    single_confidence=_opt(row["single_confidence"], float),
                ))
            except (TypeError, ValueError) as exc:
                raise RecordFormatError(f"{path}:{line}: {exc}") from exc
    return out


def group_by_method(records) -> "OrderedDict[str, list]":
    groups = OrderedDict()
    for r in records:
        groups.setdefault(r.method, []).append(r)
    return groups


def single_pass_view(records) -> list[UncertaintyRecord]:
    """Re-express voted records by their single-pass prediction (max-softmax confidence).

    Uncertainty is not carried for the single pass, so it is set to 0; use these only
    for accuracy and calibration.
    """
    seen, out = set(), []
    for r in records:
        if r.single_class is None or r.sample_id in seen:
            continue
        seen.add(r.sample_id)
        out.append(UncertaintyRecord(
            sample_id=r.sample_id, method="single", predicted_class=r.single_class,
            true_class=r.true_class, uncertainty=0.0, normalized_uncertainty=0.0,
            confidence=r.single_confidence,
        ))
    return out
