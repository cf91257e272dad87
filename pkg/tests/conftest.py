import math

import numpy as np
import pytest

from ttma.core import Dataset
from ttma.dataset import generate_synthetic, preset, split
from ttma.predictor import Predictor, TrainConfig, train_reference

# PASS/FAIL lines recorded by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def entropy_oracle(counts):
    """Independent direct summation of -sum p ln p using plain Python floats."""
    total = sum(int(c) for c in counts)
    h = 0.0
    for c in counts:
        c = int(c)
        if c:
            p = c / total
            h -= p * math.log(p)
    return h


class LinearSoftmax(Predictor):
    """Tiny deterministic predictor for engine tests: softmax(x @ W + b), features = tanh(x @ W)."""

    def __init__(self, W, b, input_shape=None):
        self.W = np.asarray(W, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        self.input_shape = tuple(input_shape or (self.W.shape[0],))
        self.class_count = self.W.shape[1]

    def _logits(self, X):
        return X.reshape(X.shape[0], -1) @ self.W + self.b

    def predict(self, x):
        X, single = self._as_batch(x)
        z = self._logits(X)
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        return p[0] if single else p

    def features(self, x):
        X, single = self._as_batch(x)
        v = np.tanh(self._logits(X)) + 1.5
        return v[0] if single else v

    def predict_stochastic(self, x, rng, dropout_p=0.5):
        X, single = self._as_batch(x)
        if dropout_p > 0:
            X = X * (rng.random(X.shape) >= dropout_p) / (1 - dropout_p)
        z = self._logits(X)
        z = z - z.max(axis=1, keepdims=True)
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        return p[0] if single else p


def gaussian_dataset(means, n_per_class, scale=0.5, seed=0, id_offset=0):
    rng = np.random.default_rng(seed)
    means = np.asarray(means, dtype=np.float64)
    data = np.concatenate([m + scale * rng.standard_normal((n_per_class, means.shape[1])) for m in means])
    labels = np.repeat(np.arange(len(means)), n_per_class)
    return Dataset(data=data, labels=labels, ids=np.arange(labels.size) + id_offset,
                   class_count=len(means))


@pytest.fixture
def linear_model():
    # three classes in 2-D, decision regions around the three means below
    W = np.array([[3.0, -3.0, 0.0], [0.0, 0.0, 3.0]])
    return LinearSoftmax(W, np.zeros(3))


@pytest.fixture
def three_class_train():
    return gaussian_dataset([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.5]], 20, seed=1, id_offset=1000)


@pytest.fixture(scope="session")
def blobs_split():
    ds = generate_synthetic(preset("blobs", samples_per_class=100, seed=7))
    return split(ds, 0.2, seed=7)


@pytest.fixture(scope="session")
def blobs_model(blobs_split):
    train, _ = blobs_split
    return train_reference(train, TrainConfig(epochs=50, seed=3))


def gradient_check_error(seed, step=1e-5):
    """Worst relative gap between analytic and central-difference gradients on a random small MLP.

    Relative error per parameter tensor is ||g_a - g_n|| / max(||g_a|| + ||g_n||, 1e-12).
    """
    from ttma.core import RngStream
    from ttma.predictor import MLPClassifier

    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 5))
    h1, h2 = int(rng.integers(2, 6)), int(rng.integers(2, 6))
    m = int(rng.integers(2, 5))
    n = int(rng.integers(2, 6))
    model = MLPClassifier.initialize((d,), m, (h1, h2), seed=seed)
    # random biases keep ReLU pre-activations away from the kink
    for i in (1, 3, 5):
        model.weights[i] = rng.normal(0, 0.5, model.weights[i].shape)
    Z = rng.standard_normal((n, d))
    T = rng.dirichlet(np.ones(m), size=n)
    masks = model.dropout_masks(n, RngStream(seed, 9), 0.3) if seed % 2 else None
    _, grads = model.loss_and_grads(Z, T, masks)
    worst = 0.0
    for w, g in zip(model.weights, grads):
        numeric = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + step
            up, _ = model.loss_and_grads(Z, T, masks)
            w[idx] = orig - step
            down, _ = model.loss_and_grads(Z, T, masks)
            w[idx] = orig
            numeric[idx] = (up - down) / (2 * step)
        denom = max(np.linalg.norm(g) + np.linalg.norm(numeric), 1e-12)
        worst = max(worst, float(np.linalg.norm(g - numeric) / denom))
    return worst
