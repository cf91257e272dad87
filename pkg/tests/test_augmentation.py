import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ttma.augmentation import LAMBDA_MIN, AffineConfig, affine_augment, mixup_pair, sample_lambda
from ttma.core import RngStream

vec = st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6)


def test_lambda_clamped_at_default_alpha():
    rng = RngStream(0, 0)
    draws = np.array([sample_lambda(0.2, rng) for _ in range(100_000)])
    assert draws.min() >= LAMBDA_MIN
    assert draws.max() <= 1.0


def test_lambda_uniform_mean():
    rng = RngStream(1, 0)
    draws = np.array([sample_lambda(1.0, rng) for _ in range(100_000)])
    # Beta(1,1) conditioned on λ >= 0.05 has mean 0.525; the symmetric check below allows for that
    assert abs(draws.mean() - 0.5) < 0.03
    assert abs(draws.mean() - 0.525) < 0.005


def test_lambda_alpha_zero_convention():
    rng = RngStream(2, 0)
    draws = {sample_lambda(0.0, rng) for _ in range(1000)}
    assert draws == {LAMBDA_MIN, 1.0}


def test_lambda_invalid():
    with pytest.raises(ValueError):
        sample_lambda(-1, RngStream(0, 0))
    with pytest.raises(ValueError):
        sample_lambda(0.2, RngStream(0, 0), lambda_min=0.0)


@given(st.floats(0.01, 5), st.floats(0.01, 1), st.integers(0, 2**32))
def test_lambda_never_below_floor(alpha, floor, seed):
    lam = sample_lambda(alpha, RngStream(seed, 0), floor)
    assert floor <= lam <= 1
    assert 1 / lam <= 1 / floor


def test_mixup_examples():
    assert list(mixup_pair([2.0, 4.0], [0.0, 0.0], 0.5)) == [1.0, 2.0]
    a = np.array([1.5, -2.0])
    assert np.array_equal(mixup_pair(a, [9.0, 9.0], 1.0), a)
    with pytest.raises(ValueError):
        mixup_pair([1.0], [1.0, 2.0], 0.5)
    with pytest.raises(ValueError):
        mixup_pair([1.0], [2.0], 1.5)


@given(vec, st.floats(0, 1))
def test_mixup_symmetry_and_convexity(a, lam):
    b = [x * 0.5 - 3 for x in a]
    out = mixup_pair(a, b, lam)
    assert np.allclose(out, mixup_pair(b, a, 1 - lam), rtol=1e-12, atol=1e-9)
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    assert np.all(out >= lo - 1e-9) and np.all(out <= hi + 1e-9)


@given(vec, st.floats(0, 1), st.floats(-3, 3))
def test_mixup_linear(a, lam, c):
    b = [1.0] * len(a)
    assert np.allclose(mixup_pair(np.multiply(a, c), np.multiply(b, c), lam),
                       c * mixup_pair(a, b, lam), atol=1e-9)


def test_identity_config_image_and_vector():
    cfg = AffineConfig.identity()
    img = np.random.default_rng(0).random((8, 8, 3))
    assert np.array_equal(affine_augment(img, "image", cfg, RngStream(0, 0)), img)
    v = np.array([0.3, -1.0])
    assert np.array_equal(affine_augment(v, "vector", cfg, RngStream(0, 0)), v)


def test_vector_jitter_scale():
    cfg = AffineConfig(jitter_sigma=0.5)
    rng = RngStream(4, 0)
    out = np.stack([affine_augment(np.zeros(3), "vector", cfg, rng) for _ in range(4000)])
    assert abs(out.std() - 0.5) < 0.02


def _blob_image(size=32):
    yy, xx = np.mgrid[:size, :size]
    c = (size - 1) / 2
    return np.exp(-((yy - c) ** 2 + (xx - c) ** 2) / (2 * 3.0 ** 2))


def test_translation_preserves_mean_intensity():
    img = _blob_image()
    cfg = AffineConfig(hflip=False, vflip=False, rotation_deg=0, translate=(0.1, 0.1), scale=(1, 1))
    rng = RngStream(5, 0)
    for _ in range(20):
        out = affine_augment(img, "image", cfg, rng)
        assert abs(out.mean() - img.mean()) <= 0.1 * img.mean()


def test_flip_only_is_exact_mirror():
    img = np.random.default_rng(1).random((6, 7))
    cfg = AffineConfig(hflip=True, vflip=False, rotation_deg=0, translate=(0, 0), scale=(1, 1))
    rng = RngStream(6, 0)
    outs = [affine_augment(img, "image", cfg, rng) for _ in range(20)]
    for out in outs:
        assert np.allclose(out, img) or np.allclose(out, img[:, ::-1])
    assert any(np.allclose(o, img[:, ::-1]) for o in outs)


def test_rotation_keeps_centered_blob():
    img = _blob_image()
    cfg = AffineConfig(hflip=False, vflip=False, rotation_deg=45, translate=(0, 0), scale=(1, 1))
    out = affine_augment(img, "image", cfg, RngStream(7, 0))
    assert out.shape == img.shape
    assert abs(out.sum() - img.sum()) < 0.02 * img.sum()


def test_augment_shape_errors():
    cfg = AffineConfig()
    with pytest.raises(ValueError):
        affine_augment(np.zeros((2, 2)), "vector", cfg, RngStream(0, 0))
    with pytest.raises(ValueError):
        affine_augment(np.zeros(3), "image", cfg, RngStream(0, 0))
    with pytest.raises(ValueError):
        affine_augment(np.zeros(3), "audio", cfg, RngStream(0, 0))


def test_affine_config_validation():
    with pytest.raises(ValueError):
        AffineConfig(scale=(0.5, 1.0))
    with pytest.raises(ValueError):
        AffineConfig(rotation_deg=-1)
    assert AffineConfig().to_dict()["rotation_deg"] == 45.0


@pytest.mark.parametrize("alpha", [0.2, 1.0, 2.0])
def test_lambda_follows_truncated_beta(alpha):
    from scipy import stats
    rng = RngStream(8, 0)
    draws = np.array([sample_lambda(alpha, rng) for _ in range(5000)])
    lower = stats.beta.cdf(LAMBDA_MIN, alpha, alpha)
    result = stats.kstest(draws, lambda x: (stats.beta.cdf(x, alpha, alpha) - lower) / (1 - lower))
    assert result.pvalue > 0.01


def test_lambda_floor_one_is_exactly_one():
    assert sample_lambda(0.2, RngStream(0, 0), lambda_min=1.0) == 1.0
