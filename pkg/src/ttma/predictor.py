"""Classifier interface plus the mixup-trained reference MLP.

Reference network: input -> dense(h1) -> ReLU -> dropout -> dense(h2) -> ReLU -> dropout
-> dense(M) -> softmax.  Inputs are standardized with the training mean/std, which is
stored with the weights.
"""

from __future__ import annotations

import logging
import struct
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import Dataset, RngStream

log = logging.getLogger(__name__)

WEIGHTS_MAGIC = b"TTMAW\x00"
WEIGHTS_VERSION = 1


class TrainingDiverged(ArithmeticError):
    pass


class WeightFileError(ValueError):
    """A weight file is missing its header, truncated or inconsistent."""


class Predictor(ABC):
    """A classifier f mapping one input (or a batch) to class probabilities.

    Implementations must be read-only after construction: ``predict`` and ``features``
    are deterministic, and ``predict_stochastic`` draws only from the generator passed in.
    """

    class_count: int
    input_shape: tuple

    def _as_batch(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        if x.shape == tuple(self.input_shape):
            return x.reshape((1,) + x.shape), True
        if x.shape[1:] == tuple(self.input_shape):
            return x, False
        raise ValueError(f"input shape {x.shape} does not match predictor shape {self.input_shape}")

    @abstractmethod
    def predict(self, x) -> np.ndarray:
        """Class probabilities, shape (M,) for one input or (N, M) for a batch."""

    @abstractmethod
    def features(self, x) -> np.ndarray:
        """Penultimate-layer activations for one input or a batch."""

    @abstractmethod
    def predict_stochastic(self, x, rng, dropout_p: float) -> np.ndarray:
        """``predict`` with fresh Bernoulli(1-p) masks on hidden units."""


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    learning_rate: float = 0.01
    # fractions of `epochs` at which the rate is multiplied by `lr_decay`
    lr_milestones: tuple = (0.5, 0.75)
    lr_decay: float = 0.1
    momentum: float = 0.9
    mixup_alpha: float = 0.2
    # one λ per example instead of one per minibatch
    mixup_per_sample: bool = False
    dropout: float = 0.5
    hidden: tuple = (64, 64)
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0 or not 0 < self.lr_decay <= 1:
            raise ValueError("learning rate must be positive and decay in (0, 1]")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.mixup_alpha < 0:
            raise ValueError("mixup alpha must be non-negative")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout probability must lie in [0, 1)")
        if len(self.hidden) != 2 or min(self.hidden) < 1:
            raise ValueError("reference network needs two positive hidden widths")

    def milestone_epochs(self) -> list[int]:
        return sorted({int(round(f * self.epochs)) for f in self.lr_milestones})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lr_milestones"] = list(self.lr_milestones)
        d["hidden"] = list(self.hidden)
        return d


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


@dataclass(eq=False)
class MLPClassifier(Predictor):
    input_shape: tuple
    class_count: int
    weights: list  # [W1, b1, W2, b2, W3, b3]
    mean: np.ndarray
    std: np.ndarray
    dropout: float = 0.5
    seed: int = 0
    history: list = field(default_factory=list, compare=False, repr=False)

    PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")

    @classmethod
    def initialize(cls, input_shape, class_count, hidden=(64, 64), seed=0, dropout=0.5,
                   mean=None, std=None) -> "MLPClassifier":
        """He-initialized weights, zero biases."""
        rng = RngStream(seed, 2)
        d = int(np.prod(input_shape))
        sizes = [d, hidden[0], hidden[1], class_count]
        weights = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            weights.append(rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in))
            weights.append(np.zeros(fan_out))
        return cls(
            input_shape=tuple(input_shape),
            class_count=class_count,
            weights=weights,
            mean=np.zeros(d) if mean is None else np.asarray(mean, dtype=np.float64),
            std=np.ones(d) if std is None else np.asarray(std, dtype=np.float64),
            dropout=dropout,
            seed=seed,
        )

    @property
    def hidden(self) -> tuple:
        return (self.weights[0].shape[1], self.weights[2].shape[1])

    def _standardize(self, X: np.ndarray) -> np.ndarray:
        return (X.reshape(X.shape[0], -1) - self.mean) / self.std

    def _forward(self, Z0, masks=None):
        W1, b1, W2, b2, W3, b3 = self.weights
        a1 = Z0 @ W1 + b1
        h1 = np.maximum(a1, 0.0)
        if masks is not None:
            h1 = h1 * masks[0]
        a2 = h1 @ W2 + b2
        r2 = np.maximum(a2, 0.0)
        h2 = r2 * masks[1] if masks is not None else r2
        logits = h2 @ W3 + b3
        return a1, h1, a2, r2, h2, logits

    def loss_and_grads(self, Z0, targets, masks=None):
        """Mean soft-target cross-entropy and its gradients w.r.t. every parameter.

        ``Z0`` is already standardized and flattened; ``masks`` are the (scaled) dropout
        masks for the two hidden layers, or None.
        """
        W1, b1, W2, b2, W3, b3 = self.weights
        n = Z0.shape[0]
        a1, h1, a2, r2, h2, logits = self._forward(Z0, masks)
        loss = float(-np.sum(targets * log_softmax(logits)) / n)
        d_logits = (softmax(logits) - targets) / n
        gW3 = h2.T @ d_logits
        gb3 = d_logits.sum(axis=0)
        d_h2 = d_logits @ W3.T
        if masks is not None:
            d_h2 = d_h2 * masks[1]
        d_a2 = d_h2 * (a2 > 0)
        gW2 = h1.T @ d_a2
        gb2 = d_a2.sum(axis=0)
        d_h1 = d_a2 @ W2.T
        if masks is not None:
            d_h1 = d_h1 * masks[0]
        d_a1 = d_h1 * (a1 > 0)
        gW1 = Z0.T @ d_a1
        gb1 = d_a1.sum(axis=0)
        return loss, [gW1, gb1, gW2, gb2, gW3, gb3]

    def dropout_masks(self, n: int, rng, p: float):
        if p <= 0:
            return None
        keep = 1.0 - p
        h1, h2 = self.hidden
        return (
            (rng.random((n, h1)) < keep) / keep,
            (rng.random((n, h2)) < keep) / keep,
        )

    def predict(self, x) -> np.ndarray:
        X, single = self._as_batch(x)
        probs = softmax(self._forward(self._standardize(X))[-1])
        return probs[0] if single else probs

    def features(self, x) -> np.ndarray:
        X, single = self._as_batch(x)
        feats = self._forward(self._standardize(X))[4]
        return feats[0] if single else feats

    def predict_stochastic(self, x, rng, dropout_p: float = None) -> np.ndarray:
        p = self.dropout if dropout_p is None else dropout_p
        if not 0 <= p < 1:
            raise ValueError("dropout probability must lie in [0, 1)")
        X, single = self._as_batch(x)
        masks = self.dropout_masks(X.shape[0], rng, p)
        probs = softmax(self._forward(self._standardize(X), masks)[-1])
        return probs[0] if single else probs

    def accuracy(self, ds: Dataset) -> float:
        if len(ds) == 0:
            return float("nan")
        return float(np.mean(np.argmax(self.predict(ds.data), axis=1) == ds.labels))

    def save(self, path) -> None:
        """Versioned weight file: packed header of dims + seed, then little-endian float64s."""
        header = WEIGHTS_MAGIC + struct.pack("<I", WEIGHTS_VERSION)
        header += struct.pack("<Q", self.seed & 0xFFFFFFFFFFFFFFFF)
        header += struct.pack("<I", len(self.input_shape))
        header += struct.pack(f"<{len(self.input_shape)}I", *self.input_shape)
        header += struct.pack("<3I", self.hidden[0], self.hidden[1], self.class_count)
        body = [np.array([self.dropout]), self.mean, self.std] + [w.ravel() for w in self.weights]
        payload = np.concatenate(body).astype("<f8").tobytes()
        Path(path).write_bytes(header + payload)

    @classmethod
    def load(cls, path) -> "MLPClassifier":
        raw = Path(path).read_bytes()
        if not raw.startswith(WEIGHTS_MAGIC):
            raise WeightFileError(f"{path} is not a weight file")
        pos = len(WEIGHTS_MAGIC)
        try:
            (version,) = struct.unpack_from("<I", raw, pos)
            if version != WEIGHTS_VERSION:
                raise WeightFileError(f"unsupported weight file version {version}")
            (seed,) = struct.unpack_from("<Q", raw, pos + 4)
            (ndim,) = struct.unpack_from("<I", raw, pos + 12)
            pos += 16
            input_shape = struct.unpack_from(f"<{ndim}I", raw, pos)
            pos += 4 * ndim
            h1, h2, m = struct.unpack_from("<3I", raw, pos)
            pos += 12
        except struct.error as exc:
            raise WeightFileError(f"truncated weight file header: {exc}") from exc
        d = int(np.prod(input_shape))
        shapes = [(1,), (d,), (d,), (d, h1), (h1,), (h1, h2), (h2,), (h2, m), (m,)]
        sizes = [int(np.prod(s)) for s in shapes]
        if len(raw) - pos != 8 * sum(sizes):
            raise WeightFileError("weight file body does not match header dims")
        values = np.frombuffer(raw, dtype="<f8", offset=pos)
        parts, start = [], 0
        for shape, size in zip(shapes, sizes):
            parts.append(values[start:start + size].reshape(shape).astype(np.float64))
            start += size
        return cls(input_shape=tuple(input_shape), class_count=m, weights=parts[3:],
                   mean=parts[1], std=parts[2], dropout=float(parts[0][0]), seed=seed)


def train_reference(train: Dataset, cfg: TrainConfig) -> MLPClassifier:
    """Train the reference MLP with minibatch mixup and SGD + momentum.

    Each minibatch is mixed with a shuffled copy of itself using one λ ~ Beta(α, α);
    α == 0 disables mixing.  The learning rate is multiplied by ``cfg.lr_decay`` at the
    configured fractions of training.
    """
    cfg.validate()
    if len(train) == 0:
        raise ValueError("training set is empty")
    X = train.data.reshape(len(train), -1)
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std[std < 1e-12] = 1.0
    model = MLPClassifier.initialize(train.sample_shape, train.class_count, cfg.hidden,
                                     seed=cfg.seed, dropout=cfg.dropout, mean=mean, std=std)
    Z = model._standardize(train.data)
    Y = train.one_hot_labels()
    rng = RngStream(cfg.seed, 3)
    velocity = [np.zeros_like(w) for w in model.weights]
    milestones = cfg.milestone_epochs()
    lr = cfg.learning_rate
    n = Z.shape[0]
    for epoch in range(cfg.epochs):
        if epoch in milestones:
            lr *= cfg.lr_decay
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            zb, yb = Z[idx], Y[idx]
            if cfg.mixup_alpha > 0:
                if cfg.mixup_per_sample:
                    lam = rng.beta(cfg.mixup_alpha, cfg.mixup_alpha, size=(idx.size, 1))
                else:
                    lam = rng.beta(cfg.mixup_alpha, cfg.mixup_alpha)
                perm = rng.permutation(idx.size)
                zb = lam * zb + (1 - lam) * zb[perm]
                yb = lam * yb + (1 - lam) * yb[perm]
            masks = model.dropout_masks(idx.size, rng, cfg.dropout)
            # overflow here is caught by the finiteness check just below
            with np.errstate(over="ignore", invalid="ignore"):
                loss, grads = model.loss_and_grads(zb, yb, masks)
            if not np.isfinite(loss):
                raise TrainingDiverged("training diverged")
            for w, v, g in zip(model.weights, velocity, grads):
                v *= cfg.momentum
                v -= lr * g
                w += v
            epoch_loss += loss * idx.size
        model.history.append(epoch_loss / n)
    log.info("trained reference MLP: %d epochs, final loss %.4f", cfg.epochs, model.history[-1])
    return model
