"""Classical reference tests of independence.

Correlation coefficients (Pearson, Spearman, Kendall tau-b), the asymptotic
Pearson t-test, CDF deviation statistics and the chi-square test for
contingency tables. Each statistic also has a prepared form that evaluates
it on many y-permutations at once, used by the permutation engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateInputError, InvalidArgumentError, InvalidInputError
from .special import chi2_sf, t_sf_two_sided
from .statistics import (
    BivariateSample,
    CdfStatistic,
    ContingencyTable,
    QuantileGrid,
    TableStatistic,
    make_quantile_grid,
)

METHODS = ("Pea", "PeaP", "Spe", "Ken", "DevS", "DevI", "Chi2")

#: Permutation statistics and the tail their p-value uses.
SCALAR_STATISTICS = {
    "PeaP": "two-sided",
    "Spe": "two-sided",
    "Ken": "two-sided",
    "DevS": "upper",
    "DevI": "upper",
    "Chi2": "upper",
}


@dataclass(frozen=True)
class ScalarTestResult:
    """Outcome of a scalar test.

    ``p_value`` may be exactly 0 for the asymptotic Pearson test at
    ``|r| = 1`` and when a chi-square tail underflows double precision.
    """

    statistic: float
    p_value: float
    method: str
    df: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidArgumentError(f"unknown method {self.method!r}")
        if (self.df is not None) != (self.method == "Chi2"):
            raise InvalidArgumentError("df is set exactly for the chi-square test")
        if not 0.0 <= self.p_value <= 1.0:
            raise InvalidArgumentError(f"p-value {self.p_value} outside [0, 1]")

    def reject(self, alpha: float) -> bool:
        return self.p_value <= alpha


@dataclass(frozen=True)
class Chi2Result(ScalarTestResult):
    """Chi-square test with expected counts and Pearson residuals."""

    expected: np.ndarray = field(default=None, repr=False, compare=False)
    residuals: np.ndarray = field(default=None, repr=False, compare=False)


# --------------------------------------------------------------------- #
# correlation coefficients
# --------------------------------------------------------------------- #


def _pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 1 or x.shape != y.shape:
        raise InvalidInputError("x and y must be 1-D arrays of equal length")
    if len(x) < 3:
        raise InvalidInputError(f"need at least 3 observations, got {len(x)}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise InvalidInputError("x and y must be finite")
    return x, y


def _centered(v: np.ndarray, name: str) -> np.ndarray:
    c = v - v.mean()
    # the sum of squares can underflow for subnormal spreads
    if not np.dot(c, c) > 0.0:
        raise DegenerateInputError(f"{name} has zero variance")
    return c


def pearson_r(x, y) -> float:
    """Product-moment correlation coefficient."""
    x, y = _pair(x, y)
    xc = _centered(x, "x")
    yc = _centered(y, "y")
    r = float(np.dot(xc, yc) / math.sqrt(np.dot(xc, xc) * np.dot(yc, yc)))
    return min(1.0, max(-1.0, r))


def spearman_rho(x, y) -> float:
    """Spearman's rank correlation: Pearson's r of the mid-ranks."""
    x, y = _pair(x, y)
    return pearson_r(rankdata(x), rankdata(y))


def _tie_pairs(sorted_values: np.ndarray) -> int:
    """Number of tied pairs in a sorted array."""
    _, counts = np.unique(sorted_values, return_counts=True)
    return int(np.sum(counts * (counts - 1) // 2))


def _count_inversions(seq: list) -> int:
    """Pairs ``i < j`` with ``seq[i] > seq[j]``, by bottom-up merge sort."""
    n = len(seq)
    src = list(seq)
    dst = [None] * n
    inversions = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if src[j] < src[i]:
                    dst[k] = src[j]
                    inversions += mid - i
                    j += 1
                else:
                    dst[k] = src[i]
                    i += 1
                k += 1
            dst[k:hi] = src[i:mid] if i < mid else src[j:hi]
        src, dst = dst, src
        width *= 2
    return inversions


def kendall_tau(x, y) -> float:
    """Kendall's tau-b in O(n log n).

    Sorting by ``(x, y)`` leaves the discordant pairs as the strict
    inversions of the y sequence; tie counts give the corrections.
    """
    x, y = _pair(x, y)
    n = len(x)
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    n0 = n * (n - 1) // 2
    n1 = _tie_pairs(xs)
    n2 = _tie_pairs(np.sort(y))
    # joint ties: equal (x, y) pairs are adjacent after the lexsort
    joint = np.concatenate(([True], (xs[1:] != xs[:-1]) | (ys[1:] != ys[:-1]), [True]))
    runs = np.diff(np.flatnonzero(joint))
    n3 = int(np.sum(runs * (runs - 1) // 2))
    if n1 == n0:
        raise DegenerateInputError("x has zero variance")
    if n2 == n0:
        raise DegenerateInputError("y has zero variance")
    discordant = _count_inversions(ys.tolist())
    s = n0 - n1 - n2 + n3 - 2 * discordant
    tau = s / math.sqrt((n0 - n1) * (n0 - n2))
    return min(1.0, max(-1.0, tau))


def pearson_asymptotic_test(x, y) -> ScalarTestResult:
    """Two-sided t-test of zero Pearson correlation with ``n - 2`` degrees of freedom."""
    x, y = _pair(x, y)
    r = pearson_r(x, y)
    df = len(x) - 2
    if abs(r) >= 1.0:
        return ScalarTestResult(r, 0.0, "Pea")
    return ScalarTestResult(r, t_sf_two_sided(pearson_t(r, len(x)), df), "Pea")


def pearson_t(r: float, n: int) -> float:
    """The t statistic ``r sqrt((n - 2) / (1 - r^2))``."""
    if abs(r) >= 1.0:
        return math.copysign(math.inf, r)
    return r * math.sqrt((n - 2) / (1.0 - r * r))


# --------------------------------------------------------------------- #
# deviation statistics
# --------------------------------------------------------------------- #


def _deviation_rows(prepared: CdfStatistic, perms: np.ndarray) -> np.ndarray:
    joint = prepared.counts(perms) / prepared.n
    product = np.outer(prepared.marginal_x, prepared.marginal_y)
    return (joint - product[None]).reshape(len(perms), -1)


def deviation_statistics(sample: BivariateSample, grid: QuantileGrid | None = None) -> tuple[float, float]:
    """Supremum and sum-of-squares deviation of the joint from the product CDF.

    Parameters
    ----------
    sample : BivariateSample
    grid : QuantileGrid, optional
        Evaluation points; defaults to the 20 x 20 quantile grid.

    Returns
    -------
    dev_s, dev_i : float
        ``max |F - Fx Fy|`` and ``sum (F - Fx Fy)^2`` over the grid points.
    """
    grid = make_quantile_grid(sample) if grid is None else grid
    prepared = CdfStatistic(sample, grid)
    dev = _deviation_rows(prepared, np.arange(sample.n)[None, :])[0]
    return float(np.max(np.abs(dev))), float(np.sum(dev**2))


# --------------------------------------------------------------------- #
# chi-square test
# --------------------------------------------------------------------- #


def _expected_counts(counts: np.ndarray) -> np.ndarray:
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    if np.any(rows == 0) or np.any(cols == 0):
        raise DegenerateInputError("contingency table has an empty row or column")
    return np.outer(rows, cols) / counts.sum()


def chi2_test(table: ContingencyTable) -> Chi2Result:
    """Pearson's chi-square test of independence for a two-way table.

    The result carries the expected counts and the residuals
    ``(o - e) / sqrt(e)``.
    """
    counts = np.asarray(table.counts, dtype=float)
    expected = _expected_counts(counts)
    residuals = (counts - expected) / np.sqrt(expected)
    stat = float(np.sum(residuals**2))
    k1, k2 = counts.shape
    df = (k1 - 1) * (k2 - 1)
    return Chi2Result(stat, chi2_sf(stat, df), "Chi2", df, expected=expected, residuals=residuals)


# --------------------------------------------------------------------- #
# prepared scalar statistics
# --------------------------------------------------------------------- #


class ScalarStatistic:
    """A scalar statistic bound to one sample.

    :meth:`evaluate` maps a ``(P, n)`` permutation array to ``P`` values,
    pairing ``x[i]`` with ``y[perms[p, i]]``.
    """

    def __init__(self, sample: BivariateSample, method: str):
        self.sample = sample
        self.n = sample.n
        self.method = method
        self.alternative = SCALAR_STATISTICS[method]
        self.df: int | None = None

    def evaluate(self, perms: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def observed(self) -> float:
        return float(self.evaluate(np.arange(self.n)[None, :])[0])


class _CorrelationStatistic(ScalarStatistic):
    def __init__(self, sample, method, x, y):
        super().__init__(sample, method)
        x, y = _pair(x, y)
        xc = _centered(x, "x")
        yc = _centered(y, "y")
        self._xc = xc / math.sqrt(np.dot(xc, xc))
        self._yc = yc / math.sqrt(np.dot(yc, yc))

    def evaluate(self, perms):
        perms = np.atleast_2d(perms)
        # row-wise sums avoid BLAS so each value is independent of the batch
        return np.clip((self._yc[perms] * self._xc[None, :]).sum(axis=1), -1.0, 1.0)


class _KendallStatistic(ScalarStatistic):
    # above this size the n x n sign matrices cost more than merge sorts
    _MATRIX_MAX_N = 400

    def __init__(self, sample, method):
        super().__init__(sample, method)
        x, y = _pair(sample.x, sample.y)
        self._x, self._y = x, y
        n0 = self.n * (self.n - 1) // 2
        n1 = _tie_pairs(np.sort(x))
        n2 = _tie_pairs(np.sort(y))
        if n1 == n0 or n2 == n0:
            raise DegenerateInputError("a marginal has zero variance")
        self._scale = math.sqrt((n0 - n1) * (n0 - n2))
        if self.n <= self._MATRIX_MAX_N:
            self._sx = np.sign(x[:, None] - x[None, :]).astype(np.int8)
            self._sy = np.sign(y[:, None] - y[None, :]).astype(np.int8)

    def evaluate(self, perms):
        perms = np.atleast_2d(perms)
        if self.n > self._MATRIX_MAX_N:
            return np.array([kendall_tau(self._x, self._y[p]) for p in perms])
        out = np.empty(len(perms))
        for row, p in enumerate(perms):
            # each unordered pair is counted twice in the full matrix
            s = int(np.einsum("ij,ij->", self._sx, self._sy[np.ix_(p, p)], dtype=np.int64)) // 2
            out[row] = min(1.0, max(-1.0, s / self._scale))
        return out


class _DeviationStatistic(ScalarStatistic):
    def __init__(self, sample, method, grid):
        super().__init__(sample, method)
        self._cdf = CdfStatistic(sample, grid)

    def evaluate(self, perms):
        dev = _deviation_rows(self._cdf, np.atleast_2d(perms))
        if self.method == "DevS":
            return np.max(np.abs(dev), axis=1)
        return np.sum(dev**2, axis=1)


class _Chi2Statistic(ScalarStatistic):
    def __init__(self, sample, method):
        super().__init__(sample, method)
        self._table = TableStatistic(sample)
        k1, k2 = self._table.geometry.shape
        observed = self._table.observed().reshape(k1, k2)
        self._expected = _expected_counts(observed).ravel()
        self.df = (k1 - 1) * (k2 - 1)

    def evaluate(self, perms):
        counts = self._table.evaluate(np.atleast_2d(perms))
        return np.sum((counts - self._expected) ** 2 / self._expected, axis=1)


def prepare_scalar(method: str, sample: BivariateSample, grid: tuple[int, int] = (20, 20)) -> ScalarStatistic:
    """Prepared form of a permutation scalar statistic.

    ``method`` is one of ``PeaP``, ``Spe``, ``Ken``, ``DevS``, ``DevI``
    or ``Chi2``. ``grid`` sets the quantile grid of the deviation statistics.
    """
    if method not in SCALAR_STATISTICS:
        raise InvalidArgumentError(
            f"unknown scalar statistic {method!r}; expected one of {', '.join(SCALAR_STATISTICS)}"
        )
    if method == "Chi2":
        if not sample.is_categorical:
            raise InvalidInputError("the chi-square statistic needs categorical marginals")
        return _Chi2Statistic(sample, method)
    if sample.kind_x != "continuous" or sample.kind_y != "continuous":
        raise InvalidInputError(f"{method} needs numeric marginals")
    if method == "PeaP":
        return _CorrelationStatistic(sample, method, sample.x, sample.y)
    if method == "Spe":
        return _CorrelationStatistic(sample, method, rankdata(sample.x), rankdata(sample.y))
    if method == "Ken":
        return _KendallStatistic(sample, method)
    return _DeviationStatistic(sample, method, make_quantile_grid(sample, *grid))
