"""``uq``: generate data, train the reference model, estimate uncertainty, write reports.

Commands (each echoes the fully resolved config as one JSON line on stdout first)::

    uq gen      [--config FILE] [--seed N] [--out DIR]
    uq train    [--config FILE] [--seed N] [--out DIR]
    uq estimate {ttma-du,ttma-cdu,tta,mcdo,single} [--config FILE] [--workers N] ...
    uq report   {curve,ece,hist,matrix,summary} RECORDS.csv [RECORDS.csv ...] [--out DIR]

Settings are resolved as defaults < config file < ``UQ_<SECTION>_<KEY>`` environment
variables < command-line flags.

Files written under ``run.out``:

* ``dataset.manifest`` / ``dataset.bin``: the full synthetic dataset (``gen``).  ``train``
  and ``estimate`` split it with the run seed, so both see the same train/test halves.
* ``weights.bin``: reference classifier (``train``).
* ``records_<method>.csv``: one row per record (``estimate``).  Columns are
  ``sample_id, method, partner_class, predicted_class, true_class, correct, uncertainty,
  normalized_uncertainty, confidence, afd, single_class, single_confidence``;
  ``partner_class`` and ``afd`` are filled only for ``ttma_cdu``.  ``confidence`` is the
  vote fraction of the predicted class for voted methods and the max softmax for
  ``single``; ``single_*`` carry the deterministic one-pass prediction.
* ``curve_<method>.csv``, ``ece_<method>.json`` + ``.csv``, ``hist_<method>.csv``,
  ``matrix.csv`` + ``matrix.json``, ``summary.json`` (``report``).

Exit codes: 0 ok, 2 usage or config error, 3 I/O error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .baselines import batch_baseline
from .class_analysis import ClassRelationshipMatrix
from .config import Config, ConfigError
from .core import Dataset
from .dataset import (
    DatasetError,
    ensure_dir,
    generate_synthetic,
    load_dataset,
    preset,
    save_dataset,
    split,
)
from .engine import batch_estimate
from .predictor import MLPClassifier, TrainingDiverged, WeightFileError, train_reference
from .records import (
    RecordFormatError,
    group_by_method,
    read_records_csv,
    single_pass_view,
    write_records_csv,
)

log = logging.getLogger("ttma")

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4
ESTIMATE_METHODS = ("ttma-du", "ttma-cdu", "tta", "mcdo", "single")
REPORT_KINDS = ("curve", "ece", "hist", "matrix", "summary")
CONFIDENCE_NOTE = {
    "single": "max softmax of one deterministic pass",
    "default": "vote fraction of the majority class",
}


class UsageError(ValueError):
    pass


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True, allow_nan=False, default=_json_default))
    sys.stdout.flush()


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, Path):
        return str(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _clean(v):
    """Replace NaN with None so the summary stays strict JSON."""
    if isinstance(v, float) and math.isnan(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    return v


def _load_config(args) -> Config:
    overrides = {
        ("run", "seed"): args.seed,
        ("run", "workers"): args.workers,
        ("run", "out"): args.out,
    }
    cfg = Config.load(args.config, overrides=overrides)
    _emit({"command": args.command, "config": cfg.resolved()})
    return cfg


def _split(cfg: Config) -> tuple[Dataset, Dataset]:
    ds = load_dataset(cfg.manifest_path)
    return split(ds, cfg.float("dataset", "test_fraction"), cfg.seed)


def cap_test(test: Dataset, n: int) -> Dataset:
    """Keep ``n`` test samples, taken round-robin over classes, in original order."""
    if n <= 0 or n >= len(test):
        return test
    rank = np.zeros(len(test), dtype=np.int64)
    for c in range(test.class_count):
        where = np.flatnonzero(test.labels == c)
        rank[where] = np.arange(where.size)
    order = np.lexsort((test.labels, rank))
    return test.subset(np.sort(order[:n]))


def cmd_gen(cfg: Config) -> dict:
    out = ensure_dir(cfg.out)
    spec = preset(cfg.get("dataset", "preset"), cfg.int("dataset", "samples_per_class"), cfg.seed)
    ds = generate_synthetic(spec)
    manifest = out / "dataset.manifest"
    blob = save_dataset(ds, manifest)
    return {"spec": spec.to_dict(), "manifest": str(manifest), "blob": str(blob),
            "count": len(ds), "classes": ds.class_count}


def cmd_train(cfg: Config) -> dict:
    out = ensure_dir(cfg.out)
    train, test = _split(cfg)
    tcfg = cfg.train_config()
    model = train_reference(train, tcfg)
    path = cfg.weights_path if cfg.get("train", "weights") else out / "weights.bin"
    model.save(path)
    return {"weights": str(path), "train_accuracy": model.accuracy(train),
            "test_accuracy": model.accuracy(test), "final_loss": model.history[-1],
            "train_size": len(train), "test_size": len(test)}


def cmd_estimate(cfg: Config, method: str) -> dict:
    if method not in ESTIMATE_METHODS:
        raise UsageError(f"unknown method {method!r}; choose from {', '.join(ESTIMATE_METHODS)}")
    out = ensure_dir(cfg.out)
    train, test = _split(cfg)
    test = cap_test(test, cfg.int("dataset", "max_test"))
    model = MLPClassifier.load(cfg.weights_path)
    if model.class_count != train.class_count or model.input_shape != train.sample_shape:
        raise DatasetError("weights do not match the dataset shape or class count")
    workers = cfg.workers
    if method in ("ttma-du", "ttma-cdu"):
        records = batch_estimate(test, train, model, cfg.ttma_config(),
                                 mode=method.split("-")[1], workers=workers)
    else:
        records = batch_baseline(test, model, method, affine=cfg.affine_config(),
                                 dropout_p=cfg.float("baselines", "dropout"),
                                 N=cfg.int("baselines", "passes"), seed=cfg.seed, workers=workers)
    path = out / f"records_{method.replace('-', '_')}.csv"
    n = write_records_csv(records, path)
    return {"records": str(path), "rows": n, "test_samples": len(test),
            "accuracy": evaluation.overall_accuracy(records),
            "single_pass_accuracy": evaluation.single_pass_accuracy(records)}


def _per_sample_groups(records) -> tuple[dict, set]:
    """Per-sample record groups by method, plus the names derived from ``single_*`` columns.

    When no explicit ``single`` records are present, the one-pass prediction carried on
    the voted records is reported as ``single`` (accuracy and calibration only).
    """
    groups = group_by_method(records)
    groups.pop("ttma_cdu", None)
    derived = set()
    if "single" not in groups:
        view = single_pass_view([r for rs in groups.values() for r in rs])
        if view:
            groups["single"] = view
            derived.add("single")
    return groups, derived


def _method_summary(method, records, cfg: Config, has_uncertainty: bool) -> dict:
    cal = evaluation.ece(records, cfg.int("eval", "bins"))
    out = {
        "n": len(records),
        "accuracy": evaluation.overall_accuracy(records),
        "single_pass_accuracy": evaluation.single_pass_accuracy(records),
        "ece": cal.ece,
        "confidence": CONFIDENCE_NOTE.get(method, CONFIDENCE_NOTE["default"]),
        "calibration": cal.to_json()["bins"],
    }
    if has_uncertainty:
        curve = evaluation.accuracy_rejection_curve(records, cfg.rates())
        hist = evaluation.uncertainty_histograms(records, cfg.float("eval", "bin_width"))
        out.update({
            "mean_uncertainty": float(np.mean([r.uncertainty for r in records])),
            "mean_normalized_uncertainty": float(np.mean([r.normalized_uncertainty for r in records])),
            "mean_uncertainty_correct": _mean([r.uncertainty for r in records if r.correct]),
            "mean_uncertainty_incorrect": _mean([r.uncertainty for r in records if not r.correct]),
            "curve": [{"rate": t, "accuracy": a, "retained": n} for t, a, n in curve.rows()],
            "histograms": [{"bin_lo": lo, "bin_hi": hi, "correct_count": c, "incorrect_count": i}
                           for lo, hi, c, i in hist.rows()],
        })
    return out


def _mean(values) -> float:
    return float(np.mean(values)) if values else float("nan")


def cmd_report(cfg: Config, kind: str, paths) -> dict:
    if kind not in REPORT_KINDS:
        raise UsageError(f"unknown report kind {kind!r}; choose from {', '.join(REPORT_KINDS)}")
    out = ensure_dir(cfg.out)
    records = []
    for p in paths:
        records += read_records_csv(p)
    if not records:
        raise UsageError("records file is empty")
    written = []
    if kind == "matrix":
        cdu = [r for r in records if r.method == "ttma_cdu"]
        if not cdu:
            raise UsageError("matrix needs ttma_cdu records")
        M = max(max(r.partner_class, r.true_class, r.predicted_class) for r in cdu) + 1
        matrix = ClassRelationshipMatrix.from_records(cdu, M)
        matrix.write_csv(out / "matrix.csv")
        matrix.write_json(out / "matrix.json")
        return {"written": [str(out / "matrix.csv"), str(out / "matrix.json")],
                "relationships": {f"{i}->{j}": v for (i, j), v in matrix.relationships().items()}}
    groups, derived = _per_sample_groups(records)
    if not groups:
        raise UsageError("no per-sample records (only ttma_cdu rows found)")
    if kind == "summary":
        summary = {"config": cfg.resolved(),
                   "methods": {m: _method_summary(m, rs, cfg, m not in derived)
                               for m, rs in groups.items()}}
        path = out / "summary.json"
        with open(path, "w") as fh:
            json.dump(_clean(summary), fh, indent=2, sort_keys=True, allow_nan=False)
            fh.write("\n")
        return {"written": [str(path)],
                "ece": {m: s["ece"] for m, s in summary["methods"].items()}}
    result = {}
    for method, rs in groups.items():
        if kind == "curve":
            if method in derived:
                continue
            curve = evaluation.accuracy_rejection_curve(rs, cfg.rates())
            path = out / f"curve_{method}.csv"
            curve.write_csv(path)
            result[method] = {"accuracy_T0": float(curve.accuracy[0]),
                              "accuracy_T_last": float(curve.accuracy[-1])}
        elif kind == "ece":
            cal = evaluation.ece(rs, cfg.int("eval", "bins"))
            path = out / f"ece_{method}.json"
            doc = {"method": method, "confidence": CONFIDENCE_NOTE.get(method, CONFIDENCE_NOTE["default"]),
                   **cal.to_json()}
            with open(path, "w") as fh:
                json.dump(_clean(doc), fh, indent=2, sort_keys=True, allow_nan=False)
                fh.write("\n")
            cal.write_csv(out / f"ece_{method}.csv")
            written.append(str(out / f"ece_{method}.csv"))
            result[method] = {"ece": cal.ece}
        else:
            if method in derived:
                continue
            hist = evaluation.uncertainty_histograms(rs, cfg.float("eval", "bin_width"))
            path = out / f"hist_{method}.csv"
            hist.write_csv(path)
            result[method] = {"overlap": hist.overlap()}
        written.append(str(path))
    return {"written": written, "methods": result}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--seed", type=int, help="overrides run.seed")
    common.add_argument("--workers", type=int, help="overrides run.workers")
    common.add_argument("--out", help="output directory, overrides run.out")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="uq", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gen", parents=[common], help="write the synthetic dataset")
    sub.add_parser("train", parents=[common], help="train the reference classifier")
    est = sub.add_parser("estimate", parents=[common], help="write uncertainty records")
    est.add_argument("method", choices=ESTIMATE_METHODS)
    rep = sub.add_parser("report", parents=[common], help="write evaluation reports")
    rep.add_argument("kind", choices=REPORT_KINDS)
    rep.add_argument("records", nargs="+", help="records CSV file(s)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _load_config(args)
        if args.command == "gen":
            result = cmd_gen(cfg)
        elif args.command == "train":
            result = cmd_train(cfg)
        elif args.command == "estimate":
            result = cmd_estimate(cfg, args.method)
        else:
            result = cmd_report(cfg, args.kind, args.records)
    except (ConfigError, UsageError, RecordFormatError) as exc:
        print(f"uq: error: {exc}", file=sys.stderr)
        if isinstance(exc, UsageError):
            parser.print_usage(sys.stderr)
        return EXIT_USAGE
    except (DatasetError, WeightFileError, OSError) as exc:
        print(f"uq: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (TrainingDiverged, FloatingPointError) as exc:
        print(f"uq: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"uq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _emit({"command": args.command, "result": _clean(result)})
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
