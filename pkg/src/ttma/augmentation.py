"""Mixup coefficient sampling, sample mixing, and the affine/jitter augmenter used by TTA."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage, special

LAMBDA_MIN = 0.05


def sample_lambda(alpha: float, rng, lambda_min: float = LAMBDA_MIN) -> float:
    """Draw λ ~ Beta(α, α) conditioned on λ >= lambda_min.

    Sampled by inverting the truncated Beta CDF with one uniform draw, so the cost does not
    depend on how much mass lies below the floor.  Beta(0, 0) is degenerate; for α == 0 we
    put equal mass on the two ends of the admissible range, {lambda_min, 1}.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    if not 0 < lambda_min <= 1:
        raise ValueError("lambda_min must lie in (0, 1]")
    u = float(rng.random())
    if alpha == 0:
        return lambda_min if u < 0.5 else 1.0
    lower = float(special.betainc(alpha, alpha, lambda_min))
    lam = float(special.betaincinv(alpha, alpha, lower + u * (1.0 - lower)))
    # guard against the inverse landing a hair outside the interval
    return min(max(lam, lambda_min), 1.0)


def mixup_pair(x_a, x_b, lam: float) -> np.ndarray:
    x_a = np.asarray(x_a, dtype=np.float64)
    x_b = np.asarray(x_b, dtype=np.float64)
    if x_a.shape != x_b.shape:
        raise ValueError(f"shape mismatch: {x_a.shape} vs {x_b.shape}")
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    return lam * x_a + (1 - lam) * x_b


@dataclass
class AffineConfig:
    hflip: bool = True
    vflip: bool = True
    rotation_deg: float = 45.0  # uniform in [-rotation_deg, rotation_deg]
    translate: tuple = (0.1, 0.1)  # max shift as a fraction of (height, width)
    scale: tuple = (1.0, 1.2)
    jitter_sigma: float = 0.1  # vector modality only

    def __post_init__(self):
        self.translate = tuple(float(t) for t in self.translate)
        self.scale = tuple(float(s) for s in self.scale)
        if self.rotation_deg < 0:
            raise ValueError("rotation range must be given as a non-negative half-width")
        if len(self.translate) != 2 or min(self.translate) < 0:
            raise ValueError("translate needs two non-negative fractions")
        if len(self.scale) != 2 or self.scale[0] < 1 or self.scale[1] < self.scale[0]:
            raise ValueError("scale range must satisfy 1 <= low <= high")
        if self.jitter_sigma < 0:
            raise ValueError("jitter sigma must be non-negative")

    @classmethod
    def identity(cls) -> "AffineConfig":
        return cls(hflip=False, vflip=False, rotation_deg=0.0, translate=(0.0, 0.0),
                   scale=(1.0, 1.0), jitter_sigma=0.0)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["translate"] = list(self.translate)
        d["scale"] = list(self.scale)
        return d


def _image_transform(x: np.ndarray, cfg: AffineConfig, rng) -> np.ndarray:
    h, w = x.shape[:2]
    flip_h = cfg.hflip and rng.random() < 0.5
    flip_v = cfg.vflip and rng.random() < 0.5
    angle = math.radians(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg))
    shift = np.array([rng.uniform(-cfg.translate[0], cfg.translate[0]) * h,
                      rng.uniform(-cfg.translate[1], cfg.translate[1]) * w])
    zoom = rng.uniform(cfg.scale[0], cfg.scale[1])

    # forward map in (row, col) about the image centre: out = R·S·F·(in - c) + c + shift
    flip = np.diag([-1.0 if flip_v else 1.0, -1.0 if flip_h else 1.0])
    cos, sin = math.cos(angle), math.sin(angle)
    forward = np.array([[cos, -sin], [sin, cos]]) @ (zoom * flip)
    if np.allclose(forward, np.eye(2), rtol=0, atol=0) and not shift.any():
        return x.copy()
    centre = np.array([(h - 1) / 2.0, (w - 1) / 2.0])
    inverse = np.linalg.inv(forward)
    offset = centre - inverse @ (centre + shift)

    def warp(channel):
        return ndimage.affine_transform(channel, inverse, offset=offset, order=1,
                                        mode="constant", cval=0.0)

    if x.ndim == 2:
        return warp(x)
    return np.stack([warp(x[..., c]) for c in range(x.shape[-1])], axis=-1)


def affine_augment(x, modality: str, cfg: AffineConfig, rng) -> np.ndarray:
    """One random TTA perturbation of ``x``.

    Images (HxW or HxWxC) get random flips, rotation, translation and scaling with
    bilinear resampling and zero fill; vectors get additive Gaussian jitter.
    """
    x = np.asarray(x, dtype=np.float64)
    if modality == "vector":
        if x.ndim != 1:
            raise ValueError("vector modality expects a 1-d input")
        noise = rng.standard_normal(x.shape)
        if cfg.jitter_sigma == 0:
            return x.copy()
        return x + cfg.jitter_sigma * noise
    if modality == "image":
        if x.ndim not in (2, 3):
            raise ValueError("image modality expects an HxW or HxWxC input")
        return _image_transform(x, cfg, rng)
    raise ValueError(f"unknown modality {modality!r}")
