"""Vector test statistics for independence testing.

Three statistics are provided, each evaluated on a fixed geometry:

* the joint empirical CDF on a grid of marginal sample quantiles,
* a kernel estimate of the intensity of the 2-D qq-plot on a regular
  pixel grid over the unit square (with 1-D / 0-D replacement blocks for
  marginals that carry atoms),
* the cell counts of a contingency table.

Every statistic also has a *prepared* form that evaluates it on many
y-permuted copies of the same sample at once; the permutation engine uses
those.  The public one-shot functions run the prepared form on the
identity permutation, so observed values are bit-identical no matter
which entry point produced them.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import ndtr

from .errors import InvalidArgumentError, InvalidInputError

__all__ = [
    "BivariateSample",
    "QuantileGrid",
    "PixelGrid",
    "TableCells",
    "AtomRegion",
    "StatisticField",
    "ContingencyTable",
    "detect_atoms",
    "make_quantile_grid",
    "ecdf_statistic",
    "qq_transform",
    "intensity_bandwidth",
    "atom_bandwidth",
    "kernel_intensity",
    "qq_intensity_statistic",
    "contingency_table",
    "contingency_statistic",
    "prepare_statistic",
]

MARGINAL_KINDS = ("continuous", "categorical")


# --------------------------------------------------------------------- #
# data containers
# --------------------------------------------------------------------- #


def _coerce_marginal(values, kind, name):
    if kind == "continuous":
        try:
            arr = np.asarray(values, dtype=float)
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"{name}: continuous values must be numeric") from exc
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError(f"{name}: contains non-finite values")
        return arr
    arr = np.asarray(values)
    if arr.dtype.kind not in "iufUSO":
        arr = arr.astype(object)
    return arr


@dataclass(frozen=True)
class BivariateSample:
    """``n`` paired observations ``(x_i, y_i)``.

    Parameters
    ----------
    x, y : array_like, shape (n,)
    kind_x, kind_y : {"continuous", "categorical"}
    atoms_x, atoms_y : sequence of float
        Values of a continuous marginal that carry positive probability.
        Every declared atom must occur in the data.
    """

    x: np.ndarray
    y: np.ndarray
    kind_x: str = "continuous"
    kind_y: str = "continuous"
    atoms_x: tuple = ()
    atoms_y: tuple = ()

    def __post_init__(self):
        for kind in (self.kind_x, self.kind_y):
            if kind not in MARGINAL_KINDS:
                raise InvalidArgumentError(f"marginal kind must be one of {MARGINAL_KINDS}, got {kind!r}")
        x = _coerce_marginal(self.x, self.kind_x, "x")
        y = _coerce_marginal(self.y, self.kind_y, "y")
        if x.ndim != 1 or y.ndim != 1 or len(x) != len(y):
            raise InvalidInputError(f"x and y must be 1-D of equal length, got {x.shape} and {y.shape}")
        if len(x) < 2:
            raise InvalidInputError("need at least 2 observations")
        atoms = []
        for values, declared, kind, name in (
            (x, self.atoms_x, self.kind_x, "x"),
            (y, self.atoms_y, self.kind_y, "y"),
        ):
            declared = tuple(sorted(float(a) for a in declared))
            if declared and kind != "continuous":
                raise InvalidInputError(f"{name}: atoms can only be declared for a continuous marginal")
            for a in declared:
                if not np.any(values == a):
                    raise InvalidInputError(f"{name}: declared atom {a!r} does not occur in the data")
            atoms.append(declared)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "atoms_x", atoms[0])
        object.__setattr__(self, "atoms_y", atoms[1])

    @classmethod
    def categorical(cls, x, y) -> "BivariateSample":
        return cls(x, y, kind_x="categorical", kind_y="categorical")

    @property
    def n(self) -> int:
        return len(self.x)

    @property
    def is_categorical(self) -> bool:
        return self.kind_x == "categorical" and self.kind_y == "categorical"

    @property
    def has_atoms(self) -> bool:
        return bool(self.atoms_x or self.atoms_y)

    def with_y(self, y) -> "BivariateSample":
        return BivariateSample(self.x, y, self.kind_x, self.kind_y, self.atoms_x, self.atoms_y)


@dataclass(frozen=True)
class QuantileGrid:
    """Grid of marginal sample quantiles; point ``(a, b)`` has flat index ``a * g_y + b``."""

    levels_x: np.ndarray
    levels_y: np.ndarray
    values_x: np.ndarray
    values_y: np.ndarray

    kind = "quantile_grid"

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.values_x), len(self.values_y)

    @property
    def d(self) -> int:
        return len(self.values_x) * len(self.values_y)

    @property
    def points(self) -> np.ndarray:
        u, v = np.meshgrid(self.values_x, self.values_y, indexing="ij")
        return np.column_stack([u.ravel(), v.ravel()])

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "levels_x": self.levels_x.tolist(),
            "levels_y": self.levels_y.tolist(),
            "values_x": self.values_x.tolist(),
            "values_y": self.values_y.tolist(),
        }


@dataclass(frozen=True)
class PixelGrid:
    """``rows x cols`` pixels over the unit square; row ``i`` is ``y``, column ``j`` is ``x``.

    Pixel ``(i, j)`` has center ``((j + 0.5) / cols, (i + 0.5) / rows)``
    and flat index ``i * cols + j``.
    """

    rows: int
    cols: int

    kind = "pixel_grid"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidArgumentError(f"pixel grid must be at least 1x1, got {self.rows}x{self.cols}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.rows, self.cols

    @property
    def d(self) -> int:
        return self.rows * self.cols

    @property
    def x_centers(self) -> np.ndarray:
        return (np.arange(self.cols) + 0.5) / self.cols

    @property
    def y_centers(self) -> np.ndarray:
        return (np.arange(self.rows) + 0.5) / self.rows

    @property
    def pixel_area(self) -> float:
        return 1.0 / (self.rows * self.cols)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rows": self.rows, "cols": self.cols}


@dataclass(frozen=True)
class TableCells:
    """Cells of a ``k1 x k2`` table; cell ``(r, c)`` has flat index ``r * k2 + c``."""

    row_labels: tuple
    col_labels: tuple

    kind = "table_cells"

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.row_labels), len(self.col_labels)

    @property
    def d(self) -> int:
        return len(self.row_labels) * len(self.col_labels)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "row_labels": [_plain(v) for v in self.row_labels],
            "col_labels": [_plain(v) for v in self.col_labels],
        }


def _plain(value):
    return value.item() if isinstance(value, np.generic) else value


@dataclass(frozen=True)
class AtomRegion:
    """Block of pixels whose values come from a 1-D or 0-D estimate.

    ``rows`` and ``cols`` are half-open index ranges.
    """

    kind: str
    rows: tuple[int, int]
    cols: tuple[int, int]
    atom_x: float | None = None
    atom_y: float | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rows": list(self.rows),
            "cols": list(self.cols),
            "atom_x": self.atom_x,
            "atom_y": self.atom_y,
        }


@dataclass(frozen=True)
class StatisticField:
    """A statistic vector together with the geometry it lives on."""

    values: np.ndarray
    geometry: object
    atom_regions: tuple = field(default_factory=tuple)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.geometry.d,):
            raise InvalidInputError(
                f"field has {values.size} values but geometry has {self.geometry.d} cells"
            )
        object.__setattr__(self, "values", values)

    @property
    def d(self) -> int:
        return len(self.values)

    def as_matrix(self) -> np.ndarray:
        return self.values.reshape(self.geometry.shape)


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray
    row_labels: tuple
    col_labels: tuple

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 2 or min(counts.shape) < 2:
            raise InvalidInputError(f"contingency table must be at least 2x2, got shape {counts.shape}")
        if np.any(counts < 0) or not np.all(counts == np.round(counts)):
            raise InvalidInputError("contingency counts must be nonnegative integers")
        counts = counts.astype(np.int64)
        if counts.shape != (len(self.row_labels), len(self.col_labels)):
            raise InvalidInputError("label counts do not match the table shape")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "row_labels", tuple(self.row_labels))
        object.__setattr__(self, "col_labels", tuple(self.col_labels))

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def expand(self) -> BivariateSample:
        """Raw (row label, column label) pairs, one per counted observation."""
        rows, cols = np.nonzero(self.counts)
        reps = self.counts[rows, cols]
        row_labels = np.asarray(self.row_labels)
        col_labels = np.asarray(self.col_labels)
        return BivariateSample.categorical(
            np.repeat(row_labels[rows], reps), np.repeat(col_labels[cols], reps)
        )


# --------------------------------------------------------------------- #
# quantile grids and the empirical CDF
# --------------------------------------------------------------------- #


def detect_atoms(values, threshold: float = 0.05, min_count: int = 2) -> tuple[float, ...]:
    """Values whose relative frequency is at least ``threshold``."""
    values = np.asarray(values, dtype=float)
    uniq, counts = np.unique(values, return_counts=True)
    keep = (counts / len(values) >= threshold) & (counts >= min_count)
    return tuple(float(v) for v in uniq[keep])


def _axis_quantiles(values: np.ndarray, g: int, atoms: Sequence[float], name: str):
    n = len(values)
    srt = np.sort(values)
    k = np.arange(1, g + 1)
    # type-1 quantile: order statistic ceil(k * n / g), computed in integers
    idx = -(-k * n // g) - 1
    q = srt[idx]
    levels = k / g
    if atoms:
        atom_set = np.asarray(atoms, dtype=float)
        is_atom = np.isin(q, atom_set)
        # drop a level if the next level hits the same atom
        drop = np.zeros(g, dtype=bool)
        drop[:-1] = is_atom[:-1] & (q[:-1] == q[1:])
        q = q[~drop]
        levels = levels[~drop]
        rest = q[~np.isin(q, atom_set)]
    else:
        rest = q
    if len(np.unique(rest)) < len(rest):
        warnings.warn(
            f"{name}: quantile grid has repeated values; some statistic columns will be constant",
            RuntimeWarning,
            stacklevel=3,
        )
    return levels, q


def make_quantile_grid(sample: BivariateSample, g_x: int = 20, g_y: int = 20) -> QuantileGrid:
    """Grid of type-1 sample quantiles at levels ``k / g`` in each marginal.

    For a marginal with declared atoms, the run of levels whose quantile is
    one atom is collapsed to its last level, so each atom value appears
    once among the grid coordinates.
    """
    if sample.kind_x != "continuous" or sample.kind_y != "continuous":
        raise InvalidInputError("quantile grids need numeric marginals")
    if g_x < 2 or g_y < 2:
        raise InvalidArgumentError(f"grid must be at least 2x2, got {g_x}x{g_y}")
    lx, qx = _axis_quantiles(sample.x, g_x, sample.atoms_x, "x")
    ly, qy = _axis_quantiles(sample.y, g_y, sample.atoms_y, "y")
    return QuantileGrid(levels_x=lx, levels_y=ly, values_x=qx, values_y=qy)


class PreparedStatistic:
    """A statistic bound to one sample, evaluated on y-permuted copies.

    Subclasses implement :meth:`evaluate`, which takes a ``(P, n)`` array
    of permutations (row ``p`` pairs ``x[i]`` with ``y[perms[p, i]]``) and
    returns a ``(P, d)`` array.
    """

    name = "statistic"
    geometry = None
    atom_regions: tuple = ()

    def __init__(self, sample: BivariateSample):
        self.sample = sample
        self.n = sample.n

    def evaluate(self, perms: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def observed(self) -> np.ndarray:
        return self.evaluate(np.arange(self.n)[None, :])[0]

    def field(self, values) -> StatisticField:
        return StatisticField(values, self.geometry, self.atom_regions)

    @property
    def d(self) -> int:
        return self.geometry.d


class CdfStatistic(PreparedStatistic):
    """Joint empirical CDF on a fixed quantile grid."""

    name = "cdf"

    def __init__(self, sample: BivariateSample, grid: QuantileGrid):
        super().__init__(sample)
        self.geometry = grid
        self.ind_x = (sample.x[:, None] <= grid.values_x[None, :]).astype(float)
        self.ind_y = (sample.y[:, None] <= grid.values_y[None, :]).astype(float)

    def counts(self, perms: np.ndarray) -> np.ndarray:
        """Joint counts ``#{i : x_i <= u_a, y_perm(i) <= v_b}``, shape (P, g_x, g_y)."""
        # sums of 0/1 terms are exact in floating point
        return np.matmul(self.ind_x.T[None, :, :], self.ind_y[perms])

    def evaluate(self, perms: np.ndarray) -> np.ndarray:
        perms = np.atleast_2d(perms)
        return self.counts(perms).reshape(len(perms), -1) / self.n

    @property
    def marginal_x(self) -> np.ndarray:
        return self.ind_x.mean(axis=0)

    @property
    def marginal_y(self) -> np.ndarray:
        return self.ind_y.mean(axis=0)


def ecdf_statistic(sample: BivariateSample, grid: QuantileGrid | None = None) -> StatisticField:
    """Joint empirical CDF ``F(u, v) = #{i : x_i <= u, y_i <= v} / n`` on ``grid``.

    The grid defaults to 20 x 20 quantile levels built from ``sample``.
    """
    grid = make_quantile_grid(sample) if grid is None else grid
    prepared = CdfStatistic(sample, grid)
    return prepared.field(prepared.observed())


# --------------------------------------------------------------------- #
# 2-D qq-plot and kernel intensity
# --------------------------------------------------------------------- #


def _stable_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties broken by position."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.int64)
    ranks[order] = np.arange(1, len(values) + 1)
    return ranks


def _batched_stable_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, axis=1, kind="stable")
    ranks = np.empty_like(order)
    np.put_along_axis(ranks, order, np.broadcast_to(np.arange(1, values.shape[1] + 1), values.shape), axis=1)
    return ranks


def qq_transform(sample: BivariateSample) -> np.ndarray:
    """Map each observation to ``((rank(x_i) - 0.5) / n, (rank(y_i) - 0.5) / n)``.

    Returns an ``(n, 2)`` array of points in the open unit square.
    """
    n = sample.n
    qx = (_stable_ranks(sample.x) - 0.5) / n
    qy = (_stable_ranks(sample.y) - 0.5) / n
    return np.column_stack([qx, qy])


def intensity_bandwidth(n: int) -> float:
    """Scott/Silverman rule for the 2-D qq-plot: ``n**(-1/6) * sqrt(1/12)``."""
    if n < 1:
        raise InvalidArgumentError(f"n must be positive, got {n}")
    return n ** (-1.0 / 6.0) * math.sqrt(1.0 / 12.0)


def atom_bandwidth(m: int) -> float:
    """1-D rule used for atom rows: ``m**(-1/5) * sqrt(1/12)``."""
    if m < 1:
        raise InvalidArgumentError(f"m must be positive, got {m}")
    return m ** (-1.0 / 5.0) * math.sqrt(1.0 / 12.0)


def _gauss_matrix(coords: np.ndarray, centers: np.ndarray, sigma: float) -> np.ndarray:
    z = (centers[None, :] - coords[:, None]) / sigma
    return np.exp(-0.5 * z * z) / (sigma * math.sqrt(2.0 * math.pi))


def _edge_mass(centers: np.ndarray, sigma: float) -> np.ndarray:
    """Mass of a 1-D Gaussian centered at each point that falls inside [0, 1]."""
    return ndtr((1.0 - centers) / sigma) - ndtr((0.0 - centers) / sigma)


def kernel_intensity(points, shape: tuple[int, int] = (32, 32), sigma: float | None = None) -> StatisticField:
    """Edge-corrected Gaussian kernel intensity of a point pattern in [0, 1]^2.

    At every pixel center ``(x, y)`` the estimate is
    ``sum_i k((x, y) - p_i) / e(x, y)`` where ``k`` is the isotropic
    Gaussian density with standard deviation ``sigma`` and ``e`` is the
    kernel mass inside the unit square.  The field is not rescaled.

    Parameters
    ----------
    points : array_like, shape (n, 2)
    shape : (rows, cols)
    sigma : float, optional
        Defaults to :func:`intensity_bandwidth` of the number of points.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2 or len(points) == 0:
        raise InvalidInputError("kernel_intensity needs a non-empty (n, 2) point array")
    if sigma is None:
        sigma = intensity_bandwidth(len(points))
    if not sigma > 0:
        raise InvalidArgumentError(f"sigma must be positive, got {sigma}")
    grid = PixelGrid(*shape)
    values = _raw_intensity(points[:, 0], points[:, 1], grid.x_centers, grid.y_centers, sigma)
    return StatisticField(values.ravel(), grid)


def _raw_intensity(px, py, xc, yc, sigma):
    kx = _gauss_matrix(px, xc, sigma)
    ky = _gauss_matrix(py, yc, sigma)
    field = ky.T @ kx
    return field / np.outer(_edge_mass(yc, sigma), _edge_mass(xc, sigma))


def _raw_intensity_1d(p, centers, sigma):
    k = _gauss_matrix(p, centers, sigma).sum(axis=0)
    return k / _edge_mass(centers, sigma)


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


@dataclass(frozen=True)
class _AxisLayout:
    """How one marginal's cells are split between atoms and the continuous part."""

    n_cells: int
    atoms: tuple
    atom_cells: tuple  # (start, stop) per atom
    cont_cells: np.ndarray  # indices of cells that belong to the continuous part

    @classmethod
    def build(cls, values: np.ndarray, atoms: Sequence[float], n_cells: int, name: str) -> "_AxisLayout":
        n = len(values)
        if not atoms:
            return cls(n_cells, (), (), np.arange(n_cells))
        atom_arr = np.asarray(atoms, dtype=float)
        is_atom = np.isin(values, atom_arr)
        n_cont = int(np.count_nonzero(~is_atom))
        if n_cont == 0:
            raise InvalidInputError(f"{name}: atoms carry all of the mass; the marginal is degenerate")
        weights = [np.count_nonzero(values == a) / n for a in atoms]
        sizes = [max(1, _round_half_up(w * n_cells)) for w in weights]
        n_cont_cells = n_cells - sum(sizes)
        if n_cont_cells < 1:
            raise InvalidInputError(
                f"{name}: {n_cells} cells are too few to hold the atoms and the continuous part"
            )
        cont_values = values[~is_atom]
        inserts = [
            _round_half_up(np.count_nonzero(cont_values < a) / n_cont * n_cont_cells) for a in atoms
        ]
        atom_cells = []
        cont_cells = []
        pos = 0
        next_atom = 0
        for c in range(n_cont_cells + 1):
            while next_atom < len(atoms) and inserts[next_atom] == c:
                atom_cells.append((pos, pos + sizes[next_atom]))
                pos += sizes[next_atom]
                next_atom += 1
            if c < n_cont_cells:
                cont_cells.append(pos)
                pos += 1
        return cls(n_cells, tuple(float(a) for a in atoms), tuple(atom_cells), np.asarray(cont_cells))


class QQIntensityStatistic(PreparedStatistic):
    """Kernel intensity of the 2-D qq-plot on a regular pixel grid.

    Without atoms the field is the edge-corrected 2-D kernel estimate,
    rescaled so that ``sum(field) * pixel_area == n``.  With atoms, the
    pixel rows (columns) reserved for an atom of ``y`` (``x``) carry a 1-D
    estimate of the other coordinate of the observations sitting on that
    atom, and blocks where both coordinates sit on atoms carry a constant.
    Each block is scaled so that its mass equals the number of
    observations it represents.
    """

    name = "qq"

    def __init__(self, sample: BivariateSample, shape: tuple[int, int] = (32, 32), sigma: float | None = None):
        super().__init__(sample)
        if sample.kind_x != "continuous" or sample.kind_y != "continuous":
            raise InvalidInputError("the qq statistic needs numeric marginals")
        self.geometry = PixelGrid(*shape)
        self.sigma = sigma
        rows, cols = shape
        self.layout_x = _AxisLayout.build(sample.x, sample.atoms_x, cols, "x")
        self.layout_y = _AxisLayout.build(sample.y, sample.atoms_y, rows, "y")
        self.atom_regions = self._regions()
        if not sample.has_atoms:
            n = self.n
            sig = intensity_bandwidth(n) if sigma is None else sigma
            self._sigma_2d = sig
            xc, yc = self.geometry.x_centers, self.geometry.y_centers
            q = (np.arange(1, n + 1) - 0.5) / n
            # kernel rows indexed by rank - 1
            self._kx = _gauss_matrix(q, xc, sig)[_stable_ranks(sample.x) - 1]
            self._ky_by_rank = _gauss_matrix(q, yc, sig)
            self._edge = np.outer(_edge_mass(yc, sig), _edge_mass(xc, sig))

    def _regions(self) -> tuple:
        rows, cols = self.geometry.shape
        regions = []
        for a, (r0, r1) in zip(self.layout_y.atoms, self.layout_y.atom_cells):
            regions.append(AtomRegion("1D", (r0, r1), (0, cols), atom_y=a))
        for b, (c0, c1) in zip(self.layout_x.atoms, self.layout_x.atom_cells):
            regions.append(AtomRegion("1D", (0, rows), (c0, c1), atom_x=b))
        for a, (r0, r1) in zip(self.layout_y.atoms, self.layout_y.atom_cells):
            for b, (c0, c1) in zip(self.layout_x.atoms, self.layout_x.atom_cells):
                regions.append(AtomRegion("0D", (r0, r1), (c0, c1), atom_x=b, atom_y=a))
        return tuple(regions)

    def evaluate(self, perms: np.ndarray) -> np.ndarray:
        perms = np.atleast_2d(perms)
        if not self.sample.has_atoms:
            return self._evaluate_plain(perms)
        return np.stack([self._evaluate_atoms(self.sample.y[p]) for p in perms])

    def _evaluate_plain(self, perms):
        y_ranks = _batched_stable_ranks(self.sample.y[perms])
        ky = self._ky_by_rank[y_ranks - 1]
        field = np.matmul(ky.transpose(0, 2, 1), self._kx[None, :, :]) / self._edge
        rows, cols = self.geometry.shape
        mass = field.sum(axis=(1, 2)) / (rows * cols)
        field *= (self.n / mass)[:, None, None]
        return field.reshape(len(perms), -1)

    def _evaluate_atoms(self, y: np.ndarray) -> np.ndarray:
        x = self.sample.x
        lx, ly = self.layout_x, self.layout_y
        rows, cols = self.geometry.shape
        cells = rows * cols
        out = np.zeros((rows, cols))

        x_atom = _atom_index(x, lx.atoms)
        y_atom = _atom_index(y, ly.atoms)
        cx = _compressed_coords(x, x_atom)
        cy = _compressed_coords(y, y_atom)
        xc = (np.arange(len(lx.cont_cells)) + 0.5) / len(lx.cont_cells)
        yc = (np.arange(len(ly.cont_cells)) + 0.5) / len(ly.cont_cells)

        both = (x_atom < 0) & (y_atom < 0)
        m = int(np.count_nonzero(both))
        if m:
            sig = intensity_bandwidth(m) if self.sigma is None else self.sigma
            block = _raw_intensity(cx[both], cy[both], xc, yc, sig)
            block *= m * cells / block.sum()
            out[np.ix_(ly.cont_cells, lx.cont_cells)] = block

        for a, (r0, r1) in enumerate(ly.atom_cells):
            sel = (y_atom == a) & (x_atom < 0)
            m = int(np.count_nonzero(sel))
            if m:
                line = _raw_intensity_1d(cx[sel], xc, atom_bandwidth(m))
                line *= m * cells / (line.sum() * (r1 - r0))
                out[r0:r1, lx.cont_cells] = line[None, :]
        for b, (c0, c1) in enumerate(lx.atom_cells):
            sel = (x_atom == b) & (y_atom < 0)
            m = int(np.count_nonzero(sel))
            if m:
                line = _raw_intensity_1d(cy[sel], yc, atom_bandwidth(m))
                line *= m * cells / (line.sum() * (c1 - c0))
                out[ly.cont_cells, c0:c1] = line[:, None]
        for a, (r0, r1) in enumerate(ly.atom_cells):
            for b, (c0, c1) in enumerate(lx.atom_cells):
                m = int(np.count_nonzero((y_atom == a) & (x_atom == b)))
                out[r0:r1, c0:c1] = m * cells / ((r1 - r0) * (c1 - c0))
        return out.ravel()


def _atom_index(values: np.ndarray, atoms: tuple) -> np.ndarray:
    idx = np.full(len(values), -1, dtype=np.int64)
    for k, a in enumerate(atoms):
        idx[values == a] = k
    return idx


def _compressed_coords(values: np.ndarray, atom_idx: np.ndarray) -> np.ndarray:
    """Mid-rank quantiles of the non-atom values among themselves (NaN on atoms)."""
    out = np.full(len(values), np.nan)
    cont = atom_idx < 0
    m = int(np.count_nonzero(cont))
    if m:
        out[cont] = (_stable_ranks(values[cont]) - 0.5) / m
    return out


def qq_intensity_statistic(
    sample: BivariateSample, shape: tuple[int, int] = (32, 32), sigma: float | None = None
) -> StatisticField:
    """Kernel intensity of the 2-D qq-plot of ``sample``; see :class:`QQIntensityStatistic`."""
    prepared = QQIntensityStatistic(sample, shape, sigma)
    return prepared.field(prepared.observed())


# --------------------------------------------------------------------- #
# contingency tables
# --------------------------------------------------------------------- #


def _category_codes(values: np.ndarray):
    try:
        labels, codes = np.unique(values, return_inverse=True)
    except TypeError:
        labels, codes = np.unique(values.astype(str), return_inverse=True)
    return tuple(_plain(v) for v in labels), codes.ravel().astype(np.int64)


def contingency_table(sample: BivariateSample) -> ContingencyTable:
    """Cross-tabulate the two marginals (categories in sorted order)."""
    row_labels, cx = _category_codes(sample.x)
    col_labels, cy = _category_codes(sample.y)
    k2 = len(col_labels)
    counts = np.bincount(cx * k2 + cy, minlength=len(row_labels) * k2)
    return ContingencyTable(counts.reshape(len(row_labels), k2), row_labels, col_labels)


class TableStatistic(PreparedStatistic):
    """Flattened contingency-table cell counts."""

    name = "table"

    def __init__(self, sample: BivariateSample):
        super().__init__(sample)
        self.row_labels, self.cx = _category_codes(sample.x)
        self.col_labels, self.cy = _category_codes(sample.y)
        if len(self.row_labels) < 2 or len(self.col_labels) < 2:
            raise InvalidInputError("each marginal needs at least two categories")
        self.geometry = TableCells(self.row_labels, self.col_labels)
        k1, k2 = self.geometry.shape
        self._row_totals = np.bincount(self.cx, minlength=k1)
        self._col_totals = np.bincount(self.cy, minlength=k2)

    def evaluate(self, perms: np.ndarray) -> np.ndarray:
        perms = np.atleast_2d(perms)
        k1, k2 = self.geometry.shape
        cells = k1 * k2
        offsets = (np.arange(len(perms)) * cells)[:, None]
        flat = (offsets + self.cx[None, :] * k2 + self.cy[perms]).ravel()
        counts = np.bincount(flat, minlength=len(perms) * cells).reshape(len(perms), k1, k2)
        # permuting y cannot create categories or change the margins
        assert np.all(counts.sum(axis=2) == self._row_totals)
        assert np.all(counts.sum(axis=1) == self._col_totals)
        return counts.reshape(len(perms), cells).astype(float)


def contingency_statistic(sample: BivariateSample) -> StatisticField:
    """Cell counts of the contingency table of ``sample``, flattened row-major."""
    prepared = TableStatistic(sample)
    return prepared.field(prepared.observed())


def prepare_statistic(
    statistic: str,
    sample: BivariateSample,
    grid: tuple[int, int] = (20, 20),
    pixels: tuple[int, int] = (32, 32),
    sigma: float | None = None,
) -> PreparedStatistic:
    """Build the prepared form of ``"cdf"``, ``"qq"`` or ``"table"`` for ``sample``."""
    if statistic == "cdf":
        if sample.kind_x != "continuous" or sample.kind_y != "continuous":
            raise InvalidInputError("the cdf statistic needs numeric marginals")
        return CdfStatistic(sample, make_quantile_grid(sample, *grid))
    if statistic == "qq":
        return QQIntensityStatistic(sample, pixels, sigma)
    if statistic == "table":
        if not sample.is_categorical:
            raise InvalidInputError("the table statistic needs categorical marginals")
        return TableStatistic(sample)
    raise InvalidArgumentError(f"unknown statistic {statistic!r}; expected cdf, qq or table")
