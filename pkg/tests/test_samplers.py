import numpy as np
import pytest
import scipy.stats

from envtest.errors import ConfigurationError
from envtest.samplers import (
    _cross_mixture_draw,
    distorted_uniform_density,
    sample_binormal,
    sample_center_mixture,
    sample_cross_mixture,
    sample_distorted_uniform,
    sample_normal_iid,
    sample_pareto_iid,
)

N = 100_000


def _corr(sample):
    return np.corrcoef(sample.x, sample.y)[0, 1]


@pytest.fixture()
def rng():
    return np.random.default_rng(99)


class TestNormalBased:
    def test_normal_iid(self, rng):
        s = sample_normal_iid(N, rng)
        assert scipy.stats.kstest(s.x, "norm").pvalue > 0.001
        assert scipy.stats.kstest(s.y, "norm").pvalue > 0.001
        assert abs(_corr(s)) < 3 / np.sqrt(N)

    @pytest.mark.parametrize("rho", [0.0, 0.3, -0.6])
    def test_binormal_moments(self, rng, rho):
        s = sample_binormal(N, rho, rng)
        assert abs(_corr(s) - rho) < 3 * (1 - rho**2) / np.sqrt(N)
        for v in (s.x, s.y):
            assert abs(v.var() - 1.0) < 3 * np.sqrt(2 / N)
        assert scipy.stats.kstest(s.y, "norm").pvalue > 0.001

    def test_cross_mixture(self, rng):
        x, y, sign = _cross_mixture_draw(N, 0.9, rng)
        assert abs(np.corrcoef(x, y)[0, 1]) < 3 / np.sqrt(N)
        for label, target in ((1.0, 0.9), (-1.0, -0.9)):
            m = sign == label
            assert abs(np.corrcoef(x[m], y[m])[0, 1] - target) < 3 * (1 - 0.81) / np.sqrt(m.sum())
        assert abs(y.var() - 1.0) < 3 * np.sqrt(2 / N)
        s = sample_cross_mixture(1000, 0.9, np.random.default_rng(1))
        assert np.array_equal(s.y, _cross_mixture_draw(1000, 0.9, np.random.default_rng(1))[1])

    def test_center_mixture(self, rng):
        s = sample_center_mixture(N, 0.9, rng)
        # mixture variance (16 + 1) / 2 with a heavy tail
        for v in (s.x, s.y):
            assert abs(v.var() - 8.5) < 3 * np.sqrt(np.mean(v**4) / N) + 0.05
            assert scipy.stats.kurtosis(v, fisher=False) > 3
        assert abs(_corr(s) - 0.9 / 17) < 3 * 2 / np.sqrt(N)

    @pytest.mark.parametrize("rho", [1.0, -1.0, 1.5])
    def test_invalid_rho(self, rng, rho):
        with pytest.raises(ConfigurationError):
            sample_binormal(10, rho, rng)


class TestPareto:
    def test_tail_and_mean(self, rng):
        s = sample_pareto_iid(N, rng)
        assert s.x.min() >= 1.0
        p = np.mean(s.x > 2)
        assert abs(p - 0.0625) < 3 * np.sqrt(0.0625 * 0.9375 / N)
        # Pareto(4) has variance 4 / (9 * 2)
        assert abs(s.y.mean() - 4 / 3) < 3 * np.sqrt(2 / 9 / N)
        assert abs(_corr(s)) < 3 / np.sqrt(N)


class TestDistortedUniform:
    def test_density_integrates_to_one(self):
        g = (np.arange(2000) + 0.5) / 2000
        u, v = np.meshgrid(g, g)
        assert distorted_uniform_density(u, v).mean() == pytest.approx(1.0, abs=1e-9)

    def test_support_and_mass(self, rng):
        s = sample_distorted_uniform(N, rng)
        band = (s.x > 0.35) & (s.x < 0.65)
        assert s.n == N
        assert not np.any(band & (s.y > 0.85))
        p = np.mean(band & (s.y < 0.15))
        assert abs(p - 0.09) < 3 * np.sqrt(0.09 * 0.91 / N)

    def test_zero_correlation(self):
        s = sample_distorted_uniform(1_000_000, np.random.default_rng(7))
        assert abs(_corr(s)) < 3 / np.sqrt(s.n)


def test_reproducible():
    a = sample_center_mixture(50, 0.5, np.random.default_rng(3))
    b = sample_center_mixture(50, 0.5, np.random.default_rng(3))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
