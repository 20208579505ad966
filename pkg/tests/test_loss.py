import numpy as np
import pytest

from evos_inr.laplacian import laplacian
from evos_inr.loss import LossConfig, cross_frequency_loss, merged_field, mse_loss
from evos_inr.selector import FitnessCache
from evos_inr.signal import Signal


def setup(ext=(5, 5), channels=1, zsize=6, seed=0):
    rng = np.random.default_rng(seed)
    truth = Signal.from_array(rng.random((*ext, channels)), rank=len(ext))
    n = truth.size
    cache = FitnessCache(rng.random((n, channels)), np.zeros(n), np.zeros(n), 1)
    z = np.sort(rng.choice(n, zsize, replace=False))
    pred = rng.random((zsize, channels))
    return truth, cache, z, pred


def fd_gradient(fn, pred, h=1e-6):
    g = np.zeros_like(pred)
    for idx in np.ndindex(pred.shape):
        p = pred.copy()
        p[idx] += h
        up = fn(p)
        p[idx] -= 2 * h
        g[idx] = (up - fn(p)) / (2 * h)
    return g


def test_merged_field():
    truth, cache, z, pred = setup(ext=(4, 4))
    merged = merged_field(pred, z, cache)
    for i in range(16):
        row = pred[list(z).index(i)] if i in z else cache.predictions[i]
        assert np.array_equal(merged[i], row)
    full = np.arange(16.0)[:, None]
    assert np.array_equal(merged_field(full, np.arange(16), cache), full)
    one = merged_field(np.array([[9.0]]), np.array([0]), cache)
    assert one[0, 0] == 9.0 and np.array_equal(one[1:], cache.predictions[1:])
    with pytest.raises(ValueError):
        merged_field(pred, z, None)
    with pytest.raises(ValueError):
        merged_field(pred[:-1], z, cache)


def test_perfect_prediction_zero_loss():
    truth, _, z, _ = setup()
    cache = FitnessCache(truth.attrs.copy(), np.zeros(25), np.zeros(25), 1)
    report, grad = cross_frequency_loss(truth.attrs[z], z, cache, truth, LossConfig())
    assert report.total == report.low == report.high == 0.0
    assert np.all(grad == 0.0)


def test_without_high_term_is_plain_mse():
    truth, _, z, pred = setup(channels=3)
    report, grad = cross_frequency_loss(pred, z, None, truth, LossConfig(1.0, 0.0))
    assert np.allclose(grad, 2 * (pred - truth.attrs[z]) / pred.size)
    assert report.high == 0.0 and report.total == pytest.approx(report.low)


@pytest.mark.parametrize("reduction", ["mean", "sum"])
@pytest.mark.parametrize("kernel", [4, 8])
def test_gradient_matches_finite_differences(reduction, kernel):
    for seed in range(5):
        truth, cache, z, pred = setup(channels=2, seed=seed)
        cfg = LossConfig(lambda_low=0.7, lambda_high=0.3, reduction=reduction, laplacian_kernel=kernel)
        report, grad = cross_frequency_loss(pred, z, cache, truth, cfg)
        num = fd_gradient(lambda p: cross_frequency_loss(p, z, cache, truth, cfg)[0].total, pred)
        assert np.max(np.abs(num - grad)) / np.max(np.abs(num)) < 1e-3


def test_high_loss_explicit_formula():
    truth, cache, z, pred = setup(ext=(6, 4), channels=3)
    cfg = LossConfig(1.0, 1e-5)
    report, _ = cross_frequency_loss(pred, z, cache, truth, cfg)
    merged = merged_field(pred, z, cache)
    resid = laplacian(merged, truth.grid) - laplacian(truth.attrs, truth.grid)
    assert report.high == pytest.approx(np.mean(resid ** 2), rel=1e-12)
    assert report.low == pytest.approx(np.mean((pred - truth.attrs[z]) ** 2), rel=1e-12)
    assert report.total == pytest.approx(report.low + 1e-5 * report.high, rel=1e-14)


def test_high_loss_invariant_to_constant_shift():
    truth, cache, z, pred = setup(ext=(5, 7))
    cfg = LossConfig(1.0, 1.0)
    base, _ = cross_frequency_loss(pred, z, cache, truth, cfg)
    shifted_truth = Signal.from_array(truth.field() + 0.25, rank=2)
    shifted_cache = FitnessCache(cache.predictions + 0.25, cache.low_fitness, cache.high_fitness, 1)
    moved, _ = cross_frequency_loss(pred + 0.25, z, shifted_cache, shifted_truth, cfg)
    assert moved.high == pytest.approx(base.high, rel=1e-9, abs=1e-15)


def test_errors_and_config_validation():
    truth, cache, z, pred = setup()
    with pytest.raises(ValueError):
        cross_frequency_loss(pred, z, None, truth, LossConfig(1.0, 1e-5))
    with pytest.raises(ValueError):
        cross_frequency_loss(pred[:, :0], z, cache, truth, LossConfig())
    with pytest.raises(ValueError):
        LossConfig(lambda_low=-1.0)
    with pytest.raises(ValueError):
        LossConfig(reduction="median")
    loss, grad = mse_loss(np.array([[1.0], [3.0]]), np.zeros((2, 1)), "sum")
    assert loss == 10.0 and np.array_equal(grad, [[2.0], [6.0]])
