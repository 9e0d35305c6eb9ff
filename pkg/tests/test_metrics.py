import numpy as np
import pytest
from scipy import integrate, stats

from dacpf import (
    MarginalTruth,
    ks_empirical_vs_gaussian,
    mse_of_means,
    rmse_of_means,
    w1_empirical_vs_gaussian,
)


def _w1_by_quadrature(sample, truth):
    """Trapezoid integration of |F_emp - Phi| on a wide fine grid."""
    s = np.sort(np.asarray(sample, dtype=float))
    lo = min(s[0], truth.mean - 10 * truth.std)
    hi = max(s[-1], truth.mean + 10 * truth.std)
    grid = np.linspace(lo, hi, 400001)
    f_emp = np.searchsorted(s, grid, side="right") / s.size
    f_exact = stats.norm.cdf(grid, loc=truth.mean, scale=truth.std)
    return integrate.trapezoid(np.abs(f_emp - f_exact), grid)


def test_w1_matches_quadrature():
    rng = np.random.default_rng(0)
    for _ in range(10):
        mu = rng.normal() * 3
        sd = rng.uniform(0.3, 2.5)
        truth = MarginalTruth(mu, sd * sd)
        n = int(rng.integers(5, 400))
        sample = rng.normal(loc=mu + rng.normal() * 0.5, scale=sd * rng.uniform(0.5, 2), size=n)
        got = w1_empirical_vs_gaussian(sample, truth)
        want = _w1_by_quadrature(sample, truth)
        assert got == pytest.approx(want, rel=1e-3, abs=1e-4)


def test_w1_point_mass_at_the_mean():
    truth = MarginalTruth(1.5, 4.0)
    sample = np.full(64, 1.5)
    # distance of a point mass at mu to N(mu, var) is E|X - mu|
    assert w1_empirical_vs_gaussian(sample, truth) == pytest.approx(
        truth.std * np.sqrt(2.0 / np.pi))


def test_w1_shrinks_with_sample_size():
    rng = np.random.default_rng(1)
    truth = MarginalTruth(0.0, 1.0)
    w_small = np.mean([w1_empirical_vs_gaussian(rng.normal(size=32), truth) for _ in range(40)])
    w_large = np.mean([w1_empirical_vs_gaussian(rng.normal(size=2048), truth) for _ in range(40)])
    assert w_large < w_small


def test_w1_is_nonnegative_and_translation_covariant():
    rng = np.random.default_rng(2)
    sample = rng.normal(size=100)
    truth = MarginalTruth(0.0, 1.0)
    base = w1_empirical_vs_gaussian(sample, truth)
    assert base >= 0
    shifted = w1_empirical_vs_gaussian(sample + 5.0, MarginalTruth(5.0, 1.0))
    assert shifted == pytest.approx(base, rel=1e-9)


def test_ks_matches_scipy():
    rng = np.random.default_rng(3)
    for _ in range(20):
        mu = rng.normal()
        sd = rng.uniform(0.4, 3.0)
        truth = MarginalTruth(mu, sd * sd)
        sample = rng.normal(loc=mu + 0.3, scale=sd, size=int(rng.integers(3, 200)))
        got = ks_empirical_vs_gaussian(sample, truth)
        want = stats.kstest(sample, lambda x: stats.norm.cdf(x, loc=mu, scale=sd)).statistic
        assert got == pytest.approx(want, abs=1e-12)


def test_ks_handles_ties():
    truth = MarginalTruth(0.0, 1.0)
    sample = np.array([0.0, 0.0, 0.0, 1.0])
    want = stats.kstest(sample, stats.norm.cdf).statistic
    assert ks_empirical_vs_gaussian(sample, truth) == pytest.approx(want, abs=1e-12)


def test_ks_bounds():
    truth = MarginalTruth(0.0, 1.0)
    far = np.full(10, 50.0)
    assert ks_empirical_vs_gaussian(far, truth) <= 1.0
    assert ks_empirical_vs_gaussian(far, truth) > 0.99


def test_mse_and_rmse_of_means():
    est = np.array([[1.0, 2.0], [3.0, 4.0]])
    truth = np.array([2.0, 2.0])
    mse = mse_of_means(est, truth)
    assert mse == pytest.approx([1.0, 2.0])
    rel = rmse_of_means(est, truth, np.array([0.5, 4.0]))
    assert rel == pytest.approx([2.0, 0.5])


def test_marginal_truth_rejects_bad_variance():
    with pytest.raises(ValueError):
        MarginalTruth(0.0, 0.0)
    with pytest.raises(ValueError):
        MarginalTruth(0.0, -1.0)
