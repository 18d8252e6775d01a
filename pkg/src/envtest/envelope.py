"""Extreme rank length (ERL) ordering and the global ERL envelope.

A set of ``s + 1`` vector statistics is stored row-wise in a
:class:`CurveSet`; row 0 is the observed statistic and rows ``1..s`` are
Monte Carlo replicates.  Each coordinate is ranked across the rows, the
two-sided ranks of every row are sorted ascending and the rows are then
ordered lexicographically.  The normalized position of a row in that
order is its ERL measure; small values mean extreme rows.

Ranks are kept as integers scaled by two (a tie-averaged rank is always a
multiple of one half), so every comparison in the ordering is exact.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, InvalidInputError

__all__ = [
    "CurveSet",
    "RankMatrix",
    "GlobalEnvelopeResult",
    "pointwise_ranks",
    "erl_measures",
    "erl_counts",
    "erl_p_value",
    "global_envelope",
    "global_envelope_test",
    "outside_envelope",
]

#: ``"symmetric"`` reflects raw ranks as ``s + 2 - r`` so the smallest and
#: the largest value of a coordinate are equally extreme.  ``"shifted"``
#: reflects as ``s + 1 - r``, which makes the largest value strictly more
#: extreme (two-sided rank 0) than the smallest one (two-sided rank 1).
TAIL_CONVENTIONS = ("shifted", "symmetric")


@dataclass(frozen=True)
class CurveSet:
    """Observed statistic plus ``s`` replicates, one per row.

    Parameters
    ----------
    values : array_like, shape (s + 1, d)
        Row 0 is the observed statistic.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise InvalidInputError(f"curve set must be 2-D, got shape {values.shape}")
        if values.shape[0] < 2 or values.shape[1] < 1:
            raise InvalidInputError(
                f"need at least 2 rows and 1 column, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidInputError("curve set contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def s(self) -> int:
        """Number of replicates."""
        return self.values.shape[0] - 1

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def observed(self) -> np.ndarray:
        return self.values[0]


@dataclass(frozen=True)
class RankMatrix:
    """Pointwise ranks of a curve set, stored doubled as exact integers.

    ``raw2[i, k]`` is twice the tie-averaged raw rank of ``T[i, k]`` and
    ``two_sided2[i, k]`` twice the two-sided rank.
    """

    raw2: np.ndarray
    two_sided2: np.ndarray
    tails: str = "shifted"

    @property
    def s(self) -> int:
        return self.raw2.shape[0] - 1

    @property
    def raw(self) -> np.ndarray:
        return self.raw2 / 2.0

    @property
    def two_sided(self) -> np.ndarray:
        return self.two_sided2 / 2.0


@dataclass(frozen=True)
class GlobalEnvelopeResult:
    """Outcome of a global ERL envelope test.

    Attributes
    ----------
    erl : ndarray, shape (s + 1,)
        Normalized ERL measures; ``erl[0]`` belongs to the observed row.
    p_erl : float
        Monte Carlo p-value, a multiple of ``1 / (s + 1)``.
    alpha : float
    lower, upper, observed : ndarray, shape (d,)
    above_mask, below_mask : ndarray of bool, shape (d,)
        Coordinates where the observed row lies strictly above ``upper``
        or strictly below ``lower``.
    critical_e : float
        The threshold ``e_alpha``; rows with ``erl < critical_e`` are
        the ones excluded from the envelope.
    index_set_size : int
        Number of rows the envelope is built from.
    """

    erl: np.ndarray
    p_erl: float
    alpha: float
    lower: np.ndarray
    upper: np.ndarray
    observed: np.ndarray
    above_mask: np.ndarray
    below_mask: np.ndarray
    critical_e: float
    index_set_size: int

    @property
    def s(self) -> int:
        return len(self.erl) - 1

    @property
    def reject(self) -> bool:
        """Whether the observed row leaves the envelope.

        Equivalent to ``erl[0] < critical_e`` and to
        ``p_erl <= alpha * s / (s + 1)``.
        """
        return bool(self.erl[0] < self.critical_e)

    @property
    def significant_mask(self) -> np.ndarray:
        return self.above_mask | self.below_mask


def _as_curve_set(curves) -> CurveSet:
    return curves if isinstance(curves, CurveSet) else CurveSet(curves)


def pointwise_ranks(curves, tails: str = "shifted") -> RankMatrix:
    """Rank every coordinate across the ``s + 1`` rows.

    The smallest value gets raw rank 1 and the largest ``s + 1``; tied
    values share the average of their ranks.  The two-sided rank is
    ``min(r, s + 2 - r)`` for ``tails="symmetric"`` and
    ``min(r, s + 1 - r)`` for ``tails="shifted"``.

    Parameters
    ----------
    curves : CurveSet or array_like, shape (s + 1, d)
    tails : {"shifted", "symmetric"}

    Returns
    -------
    RankMatrix
    """
    if tails not in TAIL_CONVENTIONS:
        raise InvalidArgumentError(f"tails must be one of {TAIL_CONVENTIONS}, got {tails!r}")
    curves = _as_curve_set(curves)
    # one row per coordinate so that sorting runs over contiguous memory
    cols = np.ascontiguousarray(curves.values.T)
    d, m = cols.shape
    order = np.argsort(cols, axis=1)
    sorted_vals = np.take_along_axis(cols, order, axis=1)

    pos = np.broadcast_to(np.arange(m), (d, m))
    starts = np.ones((d, m), dtype=bool)
    starts[:, 1:] = sorted_vals[:, 1:] != sorted_vals[:, :-1]
    ends = np.ones((d, m), dtype=bool)
    ends[:, :-1] = starts[:, 1:]
    # first and last sorted position of the tie group each entry belongs to
    first = np.maximum.accumulate(np.where(starts, pos, 0), axis=1)
    last = np.minimum.accumulate(np.where(ends, pos, m - 1)[:, ::-1], axis=1)[:, ::-1]
    # 2 * mean rank = (first + 1) + (last + 1)
    doubled_sorted = (first + last + 2).astype(np.int64)

    raw2 = np.empty((d, m), dtype=np.int64)
    np.put_along_axis(raw2, order, doubled_sorted, axis=1)
    raw2 = raw2.T.copy()

    reflect = 2 * (m + 1) if tails == "symmetric" else 2 * m
    two_sided2 = np.minimum(raw2, reflect - raw2)
    return RankMatrix(raw2=raw2, two_sided2=two_sided2, tails=tails)


def erl_counts(ranks: RankMatrix) -> np.ndarray:
    """Number of rows whose sorted rank vector strictly precedes each row's.

    This is ``(s + 1) * erl_measures(ranks)`` as exact integers.
    """
    two_sided2 = ranks.two_sided2
    rows = np.sort(two_sided2, axis=1)
    n_rows = rows.shape[0]
    lo = int(rows.min()) if rows.size else 0
    span = int(rows.max()) - lo if rows.size else 0
    shifted = rows - lo
    dtype = ">u2" if span < 2**16 else ">u4"
    # big-endian unsigned bytes compare lexicographically in the same
    # order as the integer vectors they encode
    keys = np.ascontiguousarray(shifted.astype(dtype))
    keys = keys.view(np.dtype((np.void, keys.shape[1] * keys.itemsize))).ravel()
    order = np.argsort(keys, kind="stable")
    ordered = rows[order]
    new_group = np.ones(n_rows, dtype=bool)
    new_group[1:] = np.any(ordered[1:] != ordered[:-1], axis=1)
    group_start = np.maximum.accumulate(np.where(new_group, np.arange(n_rows), 0))
    counts = np.empty(n_rows, dtype=np.int64)
    counts[order] = group_start
    return counts


def erl_measures(ranks: RankMatrix) -> np.ndarray:
    """Normalized ERL measures ``E_i`` in ``[0, s / (s + 1)]``.

    ``E_i`` is the fraction of rows whose ascending-sorted two-sided rank
    vector is lexicographically strictly smaller than that of row ``i``.
    Equal sorted vectors receive equal measures.
    """
    counts = erl_counts(ranks)
    return counts / float(len(counts))


def erl_p_value(erl, observed_index: int = 0) -> float:
    """Monte Carlo p-value: the fraction of rows with ``E_i <= E_observed``."""
    erl = np.asarray(erl, dtype=float)
    return float(np.count_nonzero(erl <= erl[observed_index])) / len(erl)


def _count_bound(alpha: float, s: int) -> int:
    # tolerance absorbs representation error in alpha (0.05 * 100 etc.)
    return int(math.floor(alpha * s + 1e-9))


def global_envelope(curves, erl, alpha: float) -> GlobalEnvelopeResult:
    """Global ERL envelope at level ``alpha``.

    The threshold ``critical_e`` is the largest ERL value such that at
    most ``alpha * s`` rows have a strictly smaller measure.  The envelope
    is the pointwise min/max over all rows with ``E_i >= critical_e``
    (rows tied at the threshold are kept).

    Parameters
    ----------
    curves : CurveSet or array_like, shape (s + 1, d)
    erl : array_like, shape (s + 1,)
        Output of :func:`erl_measures`.
    alpha : float
        Level in ``(0, 1)``.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    curves = _as_curve_set(curves)
    erl = np.asarray(erl, dtype=float)
    if erl.shape != (curves.s + 1,):
        raise InvalidInputError(
            f"erl has shape {erl.shape}, expected ({curves.s + 1},) for this curve set"
        )
    s = curves.s
    if alpha * s < 1:
        warnings.warn(
            f"alpha * s = {alpha * s:.3g} < 1: the envelope is the min/max of all curves",
            RuntimeWarning,
            stacklevel=2,
        )
    bound = _count_bound(alpha, s)
    sorted_erl = np.sort(erl)
    candidates = np.unique(sorted_erl)
    n_below = np.searchsorted(sorted_erl, candidates, side="left")
    admissible = candidates[n_below <= bound]
    # the smallest value always has n_below == 0, so this is never empty
    critical_e = float(admissible[-1])

    members = erl >= critical_e
    kept = curves.values[members]
    lower = kept.min(axis=0)
    upper = kept.max(axis=0)
    observed = curves.observed.copy()
    return GlobalEnvelopeResult(
        erl=erl,
        p_erl=erl_p_value(erl),
        alpha=float(alpha),
        lower=lower,
        upper=upper,
        observed=observed,
        above_mask=observed > upper,
        below_mask=observed < lower,
        critical_e=critical_e,
        index_set_size=int(np.count_nonzero(members)),
    )


def global_envelope_test(curves, alpha: float = 0.05, tails: str = "shifted") -> GlobalEnvelopeResult:
    """Rank, order and envelope a curve set in one call."""
    curves = _as_curve_set(curves)
    erl = erl_measures(pointwise_ranks(curves, tails=tails))
    return global_envelope(curves, erl, alpha)


def outside_envelope(curves, result: GlobalEnvelopeResult) -> np.ndarray:
    """Boolean vector: does row ``i`` leave the envelope at some coordinate?"""
    values = _as_curve_set(curves).values
    return np.any((values < result.lower) | (values > result.upper), axis=1)
