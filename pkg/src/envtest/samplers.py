"""Bivariate distributions for size and power simulations."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .statistics import BivariateSample

# distorted uniform: density 0 on the top block, 2 on the bottom block
_BLOCK_X = (0.35, 0.65)
_EMPTY_Y = (0.85, 1.0)
_DOUBLE_Y = (0.0, 0.15)


def _check_n(n: int) -> int:
    if int(n) != n or n < 2:
        raise ConfigurationError(f"n must be an integer >= 2, got {n}")
    return int(n)


def _check_rho(rho: float) -> float:
    if not -1.0 < rho < 1.0:
        raise ConfigurationError(f"rho must lie in (-1, 1), got {rho}")
    return float(rho)


def _correlated(x: np.ndarray, z: np.ndarray, rho) -> np.ndarray:
    return rho * x + np.sqrt(1.0 - np.square(rho)) * z


def sample_normal_iid(n: int, rng: np.random.Generator) -> BivariateSample:
    """Independent standard normal coordinates."""
    n = _check_n(n)
    x = rng.standard_normal(n)
    y = rng.standard_normal(n)
    return BivariateSample(x, y)


def sample_pareto_iid(n: int, rng: np.random.Generator, shape: float = 4.0) -> BivariateSample:
    """Independent standard Pareto coordinates ``U ** (-1 / shape)`` on ``[1, inf)``."""
    n = _check_n(n)
    if shape <= 0:
        raise ConfigurationError(f"shape must be positive, got {shape}")
    # 1 - U lies in (0, 1], so the power is finite
    x = (1.0 - rng.random(n)) ** (-1.0 / shape)
    y = (1.0 - rng.random(n)) ** (-1.0 / shape)
    return BivariateSample(x, y)


def sample_binormal(n: int, rho: float, rng: np.random.Generator) -> BivariateSample:
    """Standard bivariate normal with correlation ``rho``."""
    n, rho = _check_n(n), _check_rho(rho)
    x = rng.standard_normal(n)
    z = rng.standard_normal(n)
    return BivariateSample(x, _correlated(x, z, rho))


def sample_cross_mixture(n: int, rho: float, rng: np.random.Generator) -> BivariateSample:
    """Equal mixture of standard bivariate normals with correlations ``rho`` and ``-rho``."""
    x, y, _ = _cross_mixture_draw(n, rho, rng)
    return BivariateSample(x, y)


def _cross_mixture_draw(n, rho, rng):
    """Cross mixture coordinates and the sign of each observation's component."""
    n, rho = _check_n(n), _check_rho(rho)
    sign = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    x = rng.standard_normal(n)
    z = rng.standard_normal(n)
    return x, _correlated(x, z, sign * rho), sign


def sample_center_mixture(
    n: int, rho: float, rng: np.random.Generator, outer_sd: float = 4.0
) -> BivariateSample:
    """Equal mixture of ``N(0, outer_sd^2 I)`` and a standard bivariate normal with correlation ``rho``."""
    n, rho = _check_n(n), _check_rho(rho)
    if outer_sd <= 0:
        raise ConfigurationError(f"outer_sd must be positive, got {outer_sd}")
    outer = rng.random(n) < 0.5
    x = rng.standard_normal(n)
    z = rng.standard_normal(n)
    y = np.where(outer, outer_sd * z, _correlated(x, z, rho))
    x = np.where(outer, outer_sd * x, x)
    return BivariateSample(x, y)


def distorted_uniform_density(x, y) -> np.ndarray:
    """Density of the distorted uniform distribution on the unit square."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = (x >= 0) & (x <= 1) & (y >= 0) & (y <= 1)
    in_band = (x > _BLOCK_X[0]) & (x < _BLOCK_X[1])
    dens = np.where(inside, 1.0, 0.0)
    dens = np.where(in_band & (y > _EMPTY_Y[0]) & (y < _EMPTY_Y[1]), 0.0, dens)
    return np.where(in_band & (y > _DOUBLE_Y[0]) & (y < _DOUBLE_Y[1]), 2.0, dens)


def sample_distorted_uniform(n: int, rng: np.random.Generator) -> BivariateSample:
    """Uniform on the unit square with one block emptied into another.

    Drawn by rejection from the uniform distribution, accepting with
    probability ``density / 2``.
    """
    n = _check_n(n)
    xs, ys = [], []
    need = n
    while need > 0:
        m = 2 * need + 16
        x = rng.random(m)
        y = rng.random(m)
        keep = rng.random(m) * 2.0 < distorted_uniform_density(x, y)
        xs.append(x[keep][:need])
        ys.append(y[keep][:need])
        need -= len(xs[-1])
    return BivariateSample(np.concatenate(xs), np.concatenate(ys))


GENERATORS = {
    "normal_iid": sample_normal_iid,
    "pareto_iid": sample_pareto_iid,
    "binormal": sample_binormal,
    "cross_mixture": sample_cross_mixture,
    "center_mixture": sample_center_mixture,
    "distorted_uniform": sample_distorted_uniform,
}
