"""Monte Carlo harness for rejection rates of independence tests.

Each replication draws a sample, draws one set of ``s`` permutations and
runs every requested test on it. Replications are seeded individually, so
the table does not depend on the number of workers.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from threadpoolctl import threadpool_limits

from .envelope import TAIL_CONVENTIONS, CurveSet, global_envelope_test
from .errors import ConfigurationError
from .permutation import default_workers, draw_permutations, evaluate_permutations, scalar_p_value
from .reference import SCALAR_STATISTICS, pearson_asymptotic_test, prepare_scalar
from .samplers import GENERATORS
from .statistics import BivariateSample, CdfStatistic, QQIntensityStatistic, make_quantile_grid

TESTS = ("Pea", "PeaP", "Spe", "Ken", "DevS", "DevI", "CDF", "QQ")
CSV_COLUMNS = ("experiment", "generator-params", "n", "test", "reps", "rejections", "rate", "stderr")

#: Short experiment names and the generator each one uses.
EXPERIMENTS = {
    "null-normal": "normal_iid",
    "null-pareto": "pareto_iid",
    "exp1": "binormal",
    "exp2": "cross_mixture",
    "exp3": "center_mixture",
    "exp4": "distorted_uniform",
}

_NEEDS_RHO = ("binormal", "cross_mixture", "center_mixture")


@dataclass(frozen=True)
class ExperimentSpec:
    """One simulation setting.

    Parameters
    ----------
    generator : str
        Key of :data:`envtest.samplers.GENERATORS`.
    n : int
        Sample size.
    reps : int
        Number of simulated samples.
    tests : tuple of str
        Subset of :data:`TESTS`.
    alpha : float
        Test level.
    s : int
        Permutations per test.
    seed : int
        Master seed.
    rho : float, optional
        Correlation parameter of the normal-based generators.
    outer_sd : float
        Standard deviation of the wide component of ``center_mixture``.
    pareto_shape : float
        Shape of ``pareto_iid``.
    """

    generator: str
    n: int
    reps: int
    tests: tuple = TESTS
    alpha: float = 0.01
    s: int = 999
    seed: int = 0
    rho: float | None = None
    outer_sd: float = 4.0
    pareto_shape: float = 4.0
    grid: tuple[int, int] = (20, 20)
    pixels: tuple[int, int] = (32, 32)
    tails: str = "shifted"
    experiment: str = ""

    def __post_init__(self):
        object.__setattr__(self, "tests", tuple(self.tests))
        if self.generator not in GENERATORS:
            raise ConfigurationError(f"unknown generator {self.generator!r}")
        if int(self.reps) != self.reps or self.reps < 1:
            raise ConfigurationError(f"reps must be a positive integer, got {self.reps}")
        if int(self.n) != self.n or self.n < 3:
            raise ConfigurationError(f"n must be an integer >= 3, got {self.n}")
        if int(self.s) != self.s or self.s < 1:
            raise ConfigurationError(f"s must be a positive integer, got {self.s}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if (self.s + 1) * self.alpha < 1.0 - 1e-9:
            raise ConfigurationError(f"(s + 1) * alpha must be >= 1, got s = {self.s}, alpha = {self.alpha}")
        if not self.tests:
            raise ConfigurationError("no tests requested")
        unknown = [t for t in self.tests if t not in TESTS]
        if unknown:
            raise ConfigurationError(f"unknown tests {unknown}; expected a subset of {TESTS}")
        if self.generator in _NEEDS_RHO:
            if self.rho is None or not -1.0 < self.rho < 1.0:
                raise ConfigurationError(f"{self.generator} needs rho in (-1, 1), got {self.rho}")
        if self.outer_sd <= 0:
            raise ConfigurationError(f"outer_sd must be positive, got {self.outer_sd}")
        if self.pareto_shape <= 0:
            raise ConfigurationError(f"pareto_shape must be positive, got {self.pareto_shape}")
        if self.tails not in TAIL_CONVENTIONS:
            raise ConfigurationError(f"tails must be one of {TAIL_CONVENTIONS}, got {self.tails!r}")

    @property
    def label(self) -> str:
        return self.experiment or self.generator

    def generator_params(self) -> str:
        if self.generator in _NEEDS_RHO:
            params = f"rho={self.rho:g}"
            if self.generator == "center_mixture":
                params += f";outer_sd={self.outer_sd:g}"
            return params
        if self.generator == "pareto_iid":
            return f"shape={self.pareto_shape:g}"
        return ""

    def draw(self, rng: np.random.Generator) -> BivariateSample:
        sampler = GENERATORS[self.generator]
        if self.generator == "center_mixture":
            return sampler(self.n, self.rho, rng, outer_sd=self.outer_sd)
        if self.generator in _NEEDS_RHO:
            return sampler(self.n, self.rho, rng)
        if self.generator == "pareto_iid":
            return sampler(self.n, rng, shape=self.pareto_shape)
        return sampler(self.n, rng)


@dataclass(frozen=True)
class RateRow:
    test: str
    reps: int
    rejections: int

    @property
    def rate(self) -> float:
        return self.rejections / self.reps

    @property
    def stderr(self) -> float:
        p = self.rate
        return math.sqrt(p * (1.0 - p) / self.reps)


@dataclass(frozen=True)
class ExperimentResult:
    spec: ExperimentSpec
    rows: tuple
    decisions: np.ndarray = field(repr=False, compare=False)

    def rate(self, test: str) -> float:
        return self.row(test).rate

    def row(self, test: str) -> RateRow:
        for r in self.rows:
            if r.test == test:
                return r
        raise KeyError(test)

    def records(self) -> list[dict]:
        return [
            {
                "experiment": self.spec.label,
                "generator-params": self.spec.generator_params(),
                "n": self.spec.n,
                "test": r.test,
                "reps": r.reps,
                "rejections": r.rejections,
                "rate": f"{r.rate:.6f}",
                "stderr": f"{r.stderr:.6f}",
            }
            for r in self.rows
        ]

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        if header:
            writer.writeheader()
        writer.writerows(self.records())
        return buf.getvalue()


def replication_seed(seed: int, rep: int) -> int:
    """128-bit seed of replication ``rep``.

    Replicate stream 0 of this seed draws the sample; streams ``1..s``
    draw the permutations.
    """
    words = np.random.SeedSequence(seed, spawn_key=(rep,)).generate_state(2, np.uint64)
    return int(words[0]) | (int(words[1]) << 64)


def _envelope_reject(prepared, perms, spec: ExperimentSpec, rows=None) -> bool:
    values = np.empty((spec.s + 1, prepared.d))
    values[0] = prepared.observed()
    values[1:] = evaluate_permutations(prepared, perms) if rows is None else rows
    return global_envelope_test(CurveSet(values), alpha=spec.alpha, tails=spec.tails).reject


def run_replication(spec: ExperimentSpec, rep: int) -> dict[str, bool]:
    """Reject/accept decision of every requested test on replication ``rep``."""
    rep_seed = replication_seed(spec.seed, rep)
    sample = spec.draw(np.random.Generator(np.random.PCG64(np.random.SeedSequence(rep_seed, spawn_key=(0,)))))
    perms = None
    if any(t != "Pea" for t in spec.tests):
        perms = draw_permutations(rep_seed, 1, spec.s + 1, spec.n)
    out: dict[str, bool] = {}
    cdf = cdf_rows = None
    if {"CDF", "DevS", "DevI"} & set(spec.tests):
        # the CDF envelope and both deviation statistics share one grid
        cdf = CdfStatistic(sample, make_quantile_grid(sample, *spec.grid))
        cdf_rows = evaluate_permutations(cdf, perms)
    for test in spec.tests:
        if test == "Pea":
            out[test] = pearson_asymptotic_test(sample.x, sample.y).p_value <= spec.alpha
        elif test == "CDF":
            out[test] = _envelope_reject(cdf, perms, spec, cdf_rows)
        elif test == "QQ":
            out[test] = _envelope_reject(QQIntensityStatistic(sample, spec.pixels), perms, spec)
        else:
            prepared = prepare_scalar(test, sample, spec.grid)
            values = np.empty(spec.s + 1)
            values[0] = prepared.observed()
            if test in ("DevS", "DevI"):
                dev = cdf_rows - np.outer(cdf.marginal_x, cdf.marginal_y).ravel()[None, :]
                values[1:] = np.max(np.abs(dev), axis=1) if test == "DevS" else np.sum(dev**2, axis=1)
            else:
                values[1:] = evaluate_permutations(prepared, perms)
            out[test] = scalar_p_value(values, SCALAR_STATISTICS[test]) <= spec.alpha
    return out


def run_experiment(spec: ExperimentSpec, workers: int | None = None) -> ExperimentResult:
    """Rejection rates of the requested tests over ``spec.reps`` replications.

    Parameters
    ----------
    spec : ExperimentSpec
    workers : int, optional
        Threads running replications; defaults to ``ENVTEST_THREADS`` or 1.
    """
    workers = default_workers() if workers is None else workers
    if workers < 1:
        raise ConfigurationError(f"workers must be positive, got {workers}")
    reps = range(spec.reps)
    with threadpool_limits(limits=1):
        if workers == 1:
            results = [run_replication(spec, r) for r in reps]
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(lambda r: run_replication(spec, r), reps))
    decisions = np.array([[res[t] for t in spec.tests] for res in results], dtype=bool)
    rows = tuple(RateRow(t, spec.reps, int(decisions[:, j].sum())) for j, t in enumerate(spec.tests))
    return ExperimentResult(spec, rows, decisions)
