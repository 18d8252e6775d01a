"""Machine-readable test reports.

A report is a single JSON document. Floats are written with ``repr``
precision so that ``TestReport.from_json(report.to_json()) == report``.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .errors import InvalidInputError

SCHEMA = "envtest.report/1"


def _floats(values) -> list:
    return [float(v) for v in np.asarray(values, dtype=float).ravel()]


def _bools(values) -> list:
    return [bool(v) for v in np.asarray(values, dtype=bool).ravel()]


@dataclass
class TestReport:
    """Result of one envelope test, ready for serialization.

    Attributes
    ----------
    method : str
        Statistic name (``cdf``, ``qq`` or ``table``).
    n, s : int
        Sample size and number of permutations.
    alpha : float
    seed : int
    p_value : float
        Extreme rank length p-value.
    reject : bool
    geometry : dict
        Layout of the statistic vector; ``kind`` is ``quantile_grid``,
        ``pixel_grid`` or ``table_cells``.
    observed, lower, upper : list of float
        Observed statistic and the envelope, in the geometry's flat order.
    above, below : list of bool
        Cells where the observed value exceeds the upper envelope or falls
        below the lower one.
    atoms : list of dict
        Pixel blocks replaced by 1-D or 0-D estimates.
    wall_time : float
        Seconds spent in the test.
    tails : str
        Two-sided rank convention.
    """

    __test__ = False  # not a pytest class

    method: str
    n: int
    s: int
    alpha: float
    seed: int
    p_value: float
    reject: bool
    geometry: dict
    observed: list
    lower: list
    upper: list
    above: list
    below: list
    atoms: list = field(default_factory=list)
    wall_time: float = 0.0
    tails: str = "shifted"
    version: str = __version__

    def __post_init__(self):
        self.observed = _floats(self.observed)
        self.lower = _floats(self.lower)
        self.upper = _floats(self.upper)
        self.above = _bools(self.above)
        self.below = _bools(self.below)
        d = len(self.observed)
        if not all(len(v) == d for v in (self.lower, self.upper, self.above, self.below)):
            raise InvalidInputError("report vectors and masks must have equal length")
        for k in range(d):
            if self.above[k] != (self.observed[k] > self.upper[k]) or self.below[k] != (
                self.observed[k] < self.lower[k]
            ):
                raise InvalidInputError(f"mask disagrees with the envelope at cell {k}")

    @classmethod
    def from_result(cls, result, geometry: dict | None = None) -> "TestReport":
        """Build a report from an :class:`~envtest.permutation.EnvelopeTestResult`."""
        env = result.envelope
        plan = result.plan
        return cls(
            method=plan.statistic,
            n=result.n,
            s=plan.s,
            alpha=env.alpha,
            seed=plan.seed,
            p_value=env.p_erl,
            reject=env.reject,
            geometry=geometry if geometry is not None else result.field.geometry.to_dict(),
            observed=env.observed,
            lower=env.lower,
            upper=env.upper,
            above=env.above_mask,
            below=env.below_mask,
            atoms=[r.to_dict() for r in result.field.atom_regions],
            wall_time=result.wall_time,
            tails=plan.tails,
        )

    def to_dict(self) -> dict:
        return {"schema": SCHEMA, **asdict(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "TestReport":
        data = dict(data)
        schema = data.pop("schema", SCHEMA)
        if schema != SCHEMA:
            raise InvalidInputError(f"unsupported report schema {schema!r}")
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidInputError(f"unknown report fields {sorted(unknown)}")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TestReport":
        return cls.from_dict(json.loads(text))


def write_atomic(path, text: str | bytes) -> None:
    """Write ``text`` to ``path`` through a temporary file and a rename."""
    path = Path(path)
    data = text.encode("utf-8") if isinstance(text, str) else text
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_report(path) -> TestReport:
    return TestReport.from_json(Path(path).read_text(encoding="utf-8"))
