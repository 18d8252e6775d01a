"""Permutation engine.

Replicate ``k`` (``k = 1..s``) permutes the y values with a uniformly
random permutation drawn from its own generator, seeded by
``(seed, k)``. Results therefore do not depend on how replicates are
chunked or spread over threads.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from threadpoolctl import threadpool_limits

from .envelope import TAIL_CONVENTIONS, CurveSet, GlobalEnvelopeResult, global_envelope_test
from .errors import ConfigurationError, InvalidArgumentError
from .reference import SCALAR_STATISTICS, ScalarTestResult, prepare_scalar
from .statistics import BivariateSample, StatisticField, prepare_statistic

ENVELOPE_STATISTICS = ("cdf", "qq", "table")
THREADS_ENV = "ENVTEST_THREADS"

# cap on the number of permuted index entries held per chunk
_CHUNK_ENTRIES = 1 << 19


def default_workers() -> int:
    """Worker count from ``ENVTEST_THREADS``, else 1."""
    raw = os.environ.get(THREADS_ENV, "").strip()
    if not raw:
        return 1
    try:
        workers = int(raw)
    except ValueError as exc:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}") from exc
    if workers < 1:
        raise ConfigurationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return workers


@dataclass(frozen=True)
class PermutationPlan:
    """Settings of a permutation test.

    Parameters
    ----------
    s : int
        Number of random permutations.
    seed : int
        Master seed; replicate streams are derived from it.
    statistic : str
        ``cdf``, ``qq`` or ``table`` for envelope tests, or one of the
        scalar statistics ``PeaP``, ``Spe``, ``Ken``, ``DevS``, ``DevI``,
        ``Chi2``.
    grid : (int, int)
        Quantile grid of the CDF and deviation statistics.
    pixels : (int, int)
        Pixel grid of the qq intensity.
    sigma : float, optional
        Kernel bandwidth override for the qq intensity.
    tails : {"shifted", "symmetric"}
        Two-sided rank convention of the envelope test.
    workers : int, optional
        Threads evaluating replicates. ``None`` reads ``ENVTEST_THREADS``.
    """

    s: int = 999
    seed: int = 0
    statistic: str = "cdf"
    grid: tuple[int, int] = (20, 20)
    pixels: tuple[int, int] = (32, 32)
    sigma: float | None = None
    tails: str = "shifted"
    workers: int | None = None

    def __post_init__(self):
        if int(self.s) != self.s or self.s < 1:
            raise ConfigurationError(f"s must be a positive integer, got {self.s}")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ConfigurationError(f"seed must be a nonnegative integer, got {self.seed}")
        if self.statistic not in ENVELOPE_STATISTICS and self.statistic not in SCALAR_STATISTICS:
            raise ConfigurationError(f"unknown statistic {self.statistic!r}")
        if self.tails not in TAIL_CONVENTIONS:
            raise ConfigurationError(f"tails must be one of {TAIL_CONVENTIONS}, got {self.tails!r}")
        if self.workers is not None and self.workers < 1:
            raise ConfigurationError(f"workers must be positive, got {self.workers}")

    @property
    def is_envelope(self) -> bool:
        return self.statistic in ENVELOPE_STATISTICS

    def resolved_workers(self) -> int:
        return default_workers() if self.workers is None else int(self.workers)

    def check_alpha(self, alpha: float) -> None:
        """Raise unless level ``alpha`` is attainable with ``s`` permutations."""
        if not 0.0 < alpha < 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
        if (self.s + 1) * alpha < 1.0 - 1e-9:
            raise ConfigurationError(
                f"s = {self.s} permutations cannot reach level {alpha}; need (s + 1) * alpha >= 1"
            )


def permute_y(sample: BivariateSample, perm) -> BivariateSample:
    """Pair ``x[i]`` with ``y[perm[i]]``; x order is untouched."""
    perm = np.asarray(perm)
    n = sample.n
    if perm.shape != (n,) or perm.dtype.kind not in "iu":
        raise InvalidArgumentError(f"permutation must be {n} integers")
    seen = np.zeros(n, dtype=bool)
    valid = np.all((perm >= 0) & (perm < n))
    if valid:
        seen[perm] = True
    if not valid or not seen.all():
        raise InvalidArgumentError("permutation is not a bijection of 0..n-1")
    return sample.with_y(sample.y[perm])


def replicate_generator(seed: int, index: int) -> np.random.Generator:
    """Independent generator for replicate ``index`` under master ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def draw_permutations(seed: int, start: int, stop: int, n: int) -> np.ndarray:
    """Permutations of replicates ``start..stop-1``, shape ``(stop - start, n)``."""
    out = np.empty((stop - start, n), dtype=np.intp)
    for row, index in enumerate(range(start, stop)):
        out[row] = replicate_generator(seed, index).permutation(n)
    return out


def _chunk_size(n: int) -> int:
    return max(1, min(256, _CHUNK_ENTRIES // max(n, 1)))


def evaluate_permutations(prepared, perms: np.ndarray) -> np.ndarray:
    """Evaluate a prepared statistic on each row of ``perms``, chunk by chunk."""
    perms = np.atleast_2d(perms)
    size = _chunk_size(perms.shape[1])
    parts = [prepared.evaluate(perms[lo : lo + size]) for lo in range(0, len(perms), size)]
    return np.concatenate(parts)


def _evaluate_replicates(prepared, plan: PermutationPlan, n: int) -> np.ndarray:
    """Rows ``1..s`` of the statistic, in replicate order."""
    size = _chunk_size(n)
    chunks = [(lo, min(lo + size, plan.s + 1)) for lo in range(1, plan.s + 1, size)]

    def work(bounds):
        lo, hi = bounds
        return prepared.evaluate(draw_permutations(plan.seed, lo, hi, n))

    workers = min(plan.resolved_workers(), len(chunks))
    # single-threaded BLAS keeps every replicate's arithmetic identical
    with threadpool_limits(limits=1):
        if workers <= 1:
            parts = [work(c) for c in chunks]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(work, chunks))
    return np.concatenate(parts)


@dataclass(frozen=True)
class EnvelopeTestResult:
    """Global envelope test of independence on one sample.

    Attributes
    ----------
    envelope : GlobalEnvelopeResult
    field : StatisticField
        Observed statistic with its geometry and atom regions.
    plan : PermutationPlan
    n : int
    wall_time : float
        Seconds spent computing.
    curves : CurveSet or None
        All ``s + 1`` statistic vectors when requested.
    """

    envelope: GlobalEnvelopeResult
    field: StatisticField
    plan: PermutationPlan
    n: int
    wall_time: float
    curves: CurveSet | None = None

    @property
    def p_value(self) -> float:
        return self.envelope.p_erl

    @property
    def reject(self) -> bool:
        return self.envelope.reject


def envelope_curves(sample: BivariateSample, plan: PermutationPlan):
    """Prepared statistic and the ``(s + 1, d)`` curve set of a plan."""
    if not plan.is_envelope:
        raise ConfigurationError(f"{plan.statistic!r} is not an envelope statistic")
    prepared = prepare_statistic(plan.statistic, sample, plan.grid, plan.pixels, plan.sigma)
    values = np.empty((plan.s + 1, prepared.d))
    values[0] = prepared.observed()
    values[1:] = _evaluate_replicates(prepared, plan, sample.n)
    return prepared, CurveSet(values)


def run_envelope_test(
    sample: BivariateSample,
    plan: PermutationPlan,
    alpha: float = 0.05,
    keep_curves: bool = False,
) -> EnvelopeTestResult:
    """Permutation global envelope test of independence.

    Row 0 of the curve set is the observed statistic and rows ``1..s``
    come from independently permuted y values. The envelope is the
    extreme rank length envelope at level ``alpha``.
    """
    plan.check_alpha(alpha)
    start = time.perf_counter()
    prepared, curves = envelope_curves(sample, plan)
    envelope = global_envelope_test(curves, alpha=alpha, tails=plan.tails)
    elapsed = time.perf_counter() - start
    return EnvelopeTestResult(
        envelope=envelope,
        field=prepared.field(curves.observed),
        plan=plan,
        n=sample.n,
        wall_time=elapsed,
        curves=curves if keep_curves else None,
    )


def scalar_p_value(values: np.ndarray, alternative: str) -> float:
    """Monte Carlo p-value with ``values[0]`` observed.

    Counts replicates at least as extreme as the observed value, with a
    relative tolerance so that floating-point noise counts as a tie.
    """
    values = np.asarray(values, dtype=float)
    if alternative == "two-sided":
        values = np.abs(values)
    elif alternative != "upper":
        raise InvalidArgumentError(f"alternative must be 'two-sided' or 'upper', got {alternative!r}")
    t0 = values[0]
    tol = 1e-10 * max(abs(t0), 1e-300)
    return float(np.count_nonzero(values >= t0 - tol) / len(values))


def scalar_statistic_values(sample: BivariateSample, plan: PermutationPlan, prepared=None) -> np.ndarray:
    """Observed value followed by the ``s`` permuted values of a scalar statistic."""
    if prepared is None:
        prepared = prepare_scalar(plan.statistic, sample, plan.grid)
    values = np.empty(plan.s + 1)
    values[0] = prepared.observed()
    values[1:] = _evaluate_replicates(prepared, plan, sample.n)
    return values


def run_scalar_permutation_test(sample: BivariateSample, plan: PermutationPlan) -> ScalarTestResult:
    """Permutation test with a scalar statistic.

    Correlations are tested two-sided, ``|T_i| >= |T_0|``; deviation
    and chi-square statistics one-sided, ``T_i >= T_0``.
    """
    if plan.statistic not in SCALAR_STATISTICS:
        raise ConfigurationError(f"{plan.statistic!r} is not a scalar statistic")
    prepared = prepare_scalar(plan.statistic, sample, plan.grid)
    values = scalar_statistic_values(sample, plan, prepared)
    p = scalar_p_value(values, prepared.alternative)
    return ScalarTestResult(float(values[0]), p, plan.statistic, prepared.df)
