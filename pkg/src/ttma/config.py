"""Experiment config: one INI file with sections, defaults for every key, ``UQ_*`` overrides.

An environment variable ``UQ_<SECTION>_<KEY>`` (e.g. ``UQ_TTMA_K=10``) overrides the file.
"""

from __future__ import annotations

import configparser
import os
from pathlib import Path

from .augmentation import LAMBDA_MIN, AffineConfig
from .engine import TtmaConfig
from .predictor import TrainConfig


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "run": {
        "seed": "7",
        "workers": "1",
        "out": ".",
    },
    "dataset": {
        "preset": "confusion-similarity",
        "samples_per_class": "300",
        # an existing manifest to use instead of <out>/dataset.manifest
        "manifest": "",
        "test_fraction": "0.3333333333333333",
        # 0 keeps every test sample
        "max_test": "0",
    },
    "train": {
        "epochs": "100",
        "batch_size": "32",
        "learning_rate": "0.01",
        "lr_milestones": "0.5,0.75",
        "lr_decay": "0.1",
        "momentum": "0.9",
        "mixup_alpha": "0.2",
        "mixup_per_sample": "false",
        "dropout": "0.5",
        "hidden": "64,64",
        "weights": "",
    },
    "ttma": {
        "alpha": "0.2",
        "k": "30",
        "lambda_min": str(LAMBDA_MIN),
        "allow_replacement": "true",
    },
    "baselines": {
        "passes": "30",
        "dropout": "0.5",
        "hflip": "true",
        "vflip": "true",
        "rotation_deg": "45",
        "translate": "0.1,0.1",
        "scale": "1.0,1.2",
        "jitter_sigma": "0.1",
    },
    "eval": {
        "bins": "10",
        "bin_width": "0.1",
        "rates": ",".join(f"{0.05 * i:.2f}" for i in range(20)),
    },
}


def _floats(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v.strip())


class Config:
    def __init__(self, parser: configparser.ConfigParser):
        self.parser = parser

    @classmethod
    def load(cls, path=None, environ=None, overrides=None) -> "Config":
        parser = configparser.ConfigParser(interpolation=None)
        parser.read_dict(DEFAULTS)
        if path is not None:
            path = Path(path)
            if not path.is_file():
                raise ConfigError(f"config file {path} not found")
            try:
                with open(path) as fh:
                    parser.read_file(fh)
            except configparser.Error as exc:
                raise ConfigError(str(exc)) from exc
        for section in parser.sections():
            if section not in DEFAULTS:
                raise ConfigError(f"unknown config section [{section}]")
            for key in parser[section]:
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
        environ = os.environ if environ is None else environ
        for name, value in environ.items():
            if not name.startswith("UQ_"):
                continue
            section, _, key = name[3:].lower().partition("_")
            if section in DEFAULTS and key in DEFAULTS[section]:
                parser[section][key] = value
        for (section, key), value in (overrides or {}).items():
            if value is not None:
                parser[section][key] = str(value)
        cfg = cls(parser)
        cfg.validate()
        return cfg

    def get(self, section, key) -> str:
        return self.parser[section][key]

    def _typed(self, fn, section, key):
        try:
            return fn(self.get(section, key))
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}") from exc

    def int(self, section, key) -> int:
        return self._typed(int, section, key)

    def float(self, section, key) -> float:
        return self._typed(float, section, key)

    def bool(self, section, key) -> bool:
        try:
            return self.parser.getboolean(section, key)
        except ValueError as exc:
            raise ConfigError(f"bad value for {section}.{key}: {exc}") from exc

    @property
    def seed(self) -> int:
        return self.int("run", "seed")

    @property
    def workers(self) -> int:
        return self.int("run", "workers")

    @property
    def out(self) -> Path:
        return Path(self.get("run", "out"))

    @property
    def manifest_path(self) -> Path:
        return Path(self.get("dataset", "manifest") or self.out / "dataset.manifest")

    @property
    def weights_path(self) -> Path:
        return Path(self.get("train", "weights") or self.out / "weights.bin")

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.int("train", "epochs"),
            batch_size=self.int("train", "batch_size"),
            learning_rate=self.float("train", "learning_rate"),
            lr_milestones=self._typed(_floats, "train", "lr_milestones"),
            lr_decay=self.float("train", "lr_decay"),
            momentum=self.float("train", "momentum"),
            mixup_alpha=self.float("train", "mixup_alpha"),
            mixup_per_sample=self.bool("train", "mixup_per_sample"),
            dropout=self.float("train", "dropout"),
            hidden=self._typed(_ints, "train", "hidden"),
            seed=self.seed,
        )

    def ttma_config(self) -> TtmaConfig:
        return TtmaConfig(
            alpha=self.float("ttma", "alpha"),
            K=self.int("ttma", "k"),
            lambda_min=self.float("ttma", "lambda_min"),
            seed=self.seed,
            allow_replacement=self.bool("ttma", "allow_replacement"),
        )

    def affine_config(self) -> AffineConfig:
        try:
            return AffineConfig(
                hflip=self.bool("baselines", "hflip"),
                vflip=self.bool("baselines", "vflip"),
                rotation_deg=self.float("baselines", "rotation_deg"),
                translate=self._typed(_floats, "baselines", "translate"),
                scale=self._typed(_floats, "baselines", "scale"),
                jitter_sigma=self.float("baselines", "jitter_sigma"),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def rates(self) -> tuple:
        return self._typed(_floats, "eval", "rates")

    def validate(self) -> None:
        try:
            self.train_config().validate()
            self.ttma_config().validate()
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        self.affine_config()
        if self.workers < 1:
            raise ConfigError("run.workers must be at least 1")
        fraction = self.float("dataset", "test_fraction")
        if not 0 < fraction < 1:
            raise ConfigError("dataset.test_fraction must lie in (0, 1)")
        if self.int("baselines", "passes") < 1:
            raise ConfigError("baselines.passes must be at least 1")
        if not 0 <= self.float("baselines", "dropout") < 1:
            raise ConfigError("baselines.dropout must lie in [0, 1)")
        if self.int("eval", "bins") < 1 or self.float("eval", "bin_width") <= 0:
            raise ConfigError("eval.bins and eval.bin_width must be positive")
        self.rates()

    def resolved(self) -> dict:
        """Every key with defaults applied, as plain strings."""
        return {s: dict(self.parser[s]) for s in DEFAULTS}
