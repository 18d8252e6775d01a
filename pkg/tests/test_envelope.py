from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from envtest.envelope import (
    CurveSet,
    RankMatrix,
    erl_counts,
    erl_measures,
    erl_p_value,
    global_envelope,
    global_envelope_test,
    outside_envelope,
    pointwise_ranks,
)
from envtest.errors import InvalidArgumentError, InvalidInputError

from .oracles import envelope_oracle, erl_oracle, p_value_oracle, ranks_oracle


def _ranks_from_sorted_vectors(vectors):
    two = np.asarray(vectors, dtype=float)
    return RankMatrix(raw2=(2 * two).astype(np.int64), two_sided2=(2 * two).astype(np.int64))


class TestPointwiseRanks:
    def test_simple_column_shifted(self):
        ranks = pointwise_ranks(np.array([[3.0], [1.0], [2.0]]), tails="shifted")
        assert ranks.raw[:, 0].tolist() == [3, 1, 2]
        assert ranks.two_sided[:, 0].tolist() == [0, 1, 1]

    def test_simple_column_symmetric(self):
        ranks = pointwise_ranks(np.array([[3.0], [1.0], [2.0]]), tails="symmetric")
        assert ranks.raw[:, 0].tolist() == [3, 1, 2]
        assert ranks.two_sided[:, 0].tolist() == [1, 1, 2]

    def test_ties_are_averaged(self):
        values = np.array([[5.0], [5.0], [1.0]])
        shifted = pointwise_ranks(values, tails="shifted")
        assert shifted.raw[:, 0].tolist() == [2.5, 2.5, 1]
        assert shifted.two_sided[:, 0].tolist() == [0.5, 0.5, 1]
        symmetric = pointwise_ranks(values, tails="symmetric")
        assert symmetric.two_sided[:, 0].tolist() == [1.5, 1.5, 1]

    def test_full_tie(self):
        ranks = pointwise_ranks(np.ones((4, 2)))
        assert np.all(ranks.raw == 2.5)

    def test_ranks_are_integers_scaled_by_two(self):
        ranks = pointwise_ranks(np.random.default_rng(0).integers(0, 3, (7, 4)).astype(float))
        assert ranks.raw2.dtype == np.int64
        assert ranks.two_sided2.dtype == np.int64

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            pointwise_ranks(np.array([[1.0], [np.nan]]))

    def test_unknown_tail_convention(self):
        with pytest.raises(InvalidArgumentError):
            pointwise_ranks(np.ones((3, 1)), tails="left")

    @pytest.mark.parametrize("tails", ["symmetric", "shifted"])
    def test_matches_oracle_with_ties(self, tails):
        rng = np.random.default_rng(1)
        for _ in range(30):
            m, d = rng.integers(2, 8), rng.integers(1, 6)
            values = rng.integers(0, 4, (m, d)).astype(float)
            raw, two = ranks_oracle(values, tails)
            ranks = pointwise_ranks(values, tails=tails)
            assert [[Fraction(int(v), 2) for v in row] for row in ranks.raw2] == raw
            assert [[Fraction(int(v), 2) for v in row] for row in ranks.two_sided2] == two

    @given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 6)),
                  elements=st.integers(-3, 3).map(float)))
    def test_column_sums_are_conserved(self, values):
        ranks = pointwise_ranks(values)
        m = values.shape[0]
        assert np.all(ranks.raw2.sum(axis=0) == m * (m + 1))

    @given(arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(1, 6)),
                  elements=st.floats(-10, 10)))
    def test_two_sided_bounds(self, values):
        m = values.shape[0]
        symmetric = pointwise_ranks(values, tails="symmetric")
        assert np.all(symmetric.two_sided2 >= 2)
        assert np.all(symmetric.two_sided2 <= m + 1)
        shifted = pointwise_ranks(values, tails="shifted")
        assert np.all(shifted.two_sided2 >= 0)
        assert np.all(shifted.two_sided2 <= m)


class TestErlMeasures:
    def test_one_strict_minimum(self):
        erl = erl_measures(_ranks_from_sorted_vectors([[0, 1], [1, 1], [1, 1]]))
        assert erl.tolist() == [0, 1 / 3, 1 / 3]

    def test_all_identical(self):
        erl = erl_measures(_ranks_from_sorted_vectors([[1, 2]] * 5))
        assert np.all(erl == 0)

    def test_rows_are_sorted_before_comparison(self):
        erl = erl_measures(_ranks_from_sorted_vectors([[2, 1], [1, 3], [3, 3]]))
        # sorted: (1,2), (1,3), (3,3)
        assert erl.tolist() == [0, 1 / 3, 2 / 3]

    def test_random_5x3_against_oracle(self):
        values = np.random.default_rng(5).normal(size=(5, 3))
        ranks = pointwise_ranks(values)
        _, two = ranks_oracle(values)
        assert [Fraction(int(c), 5) for c in erl_counts(ranks)] == erl_oracle(two)

    def test_oracle_equivalence_small_instances(self):
        rng = np.random.default_rng(2024)
        for _ in range(200):
            m, d = int(rng.integers(2, 9)), int(rng.integers(1, 7))
            if rng.random() < 0.5:
                values = rng.integers(0, 3, (m, d)).astype(float)
            else:
                values = rng.normal(size=(m, d))
            ranks = pointwise_ranks(values)
            _, two = ranks_oracle(values)
            expected = erl_oracle(two)
            assert [Fraction(int(c), m) for c in erl_counts(ranks)] == expected
            assert erl_p_value(erl_measures(ranks)) == float(p_value_oracle(expected))

    @settings(max_examples=50)
    @given(arrays(np.float64, st.tuples(st.integers(3, 10), st.integers(1, 5)),
                  elements=st.floats(-5, 5)),
           st.integers(0, 4))
    def test_invariant_under_monotone_column_transform(self, values, column):
        column = column % values.shape[1]
        transformed = values.copy()
        transformed[:, column] = np.exp(transformed[:, column]) * 3 + 1
        a = erl_measures(pointwise_ranks(values))
        b = erl_measures(pointwise_ranks(transformed))
        # exp can merge values that differ by less than its resolution
        if len(np.unique(transformed[:, column])) == len(np.unique(values[:, column])):
            assert np.array_equal(a, b)

    def test_constant_column_does_not_change_ordering(self):
        values = np.random.default_rng(3).normal(size=(20, 4))
        padded = np.hstack([values, np.ones((20, 1))])
        assert np.array_equal(
            erl_measures(pointwise_ranks(values)), erl_measures(pointwise_ranks(padded))
        )


class TestErlPValue:
    def test_unique_most_extreme(self):
        assert erl_p_value([0, 1 / 3, 1 / 3]) == pytest.approx(1 / 3, abs=0)

    def test_all_equal(self):
        assert erl_p_value([0.2] * 6) == 1.0

    def test_counts_ties_at_observed(self):
        assert erl_p_value([2 / 5, 0, 1 / 5, 2 / 5, 4 / 5]) == 4 / 5
        assert p_value_oracle([Fraction(2, 5), 0, Fraction(1, 5), Fraction(2, 5), Fraction(4, 5)]) == Fraction(4, 5)


class TestGlobalEnvelope:
    def test_observed_largest_everywhere(self):
        rng = np.random.default_rng(11)
        values = rng.normal(size=(100, 7))
        values[0] = values[1:].max(axis=0) + 1.0
        for tails in ("symmetric", "shifted"):
            res = global_envelope_test(values, alpha=0.05, tails=tails)
            assert res.above_mask.all()
            assert not res.below_mask.any()
            assert res.erl[0] == res.erl.min() == 0
            assert res.p_erl == 1 / 100
            assert res.reject

    def test_observed_smallest_everywhere_symmetric(self):
        rng = np.random.default_rng(12)
        values = rng.normal(size=(100, 7))
        values[0] = values[1:].min(axis=0) - 1.0
        res = global_envelope_test(values, alpha=0.05, tails="symmetric")
        assert res.below_mask.all()
        assert res.p_erl == 1 / 100

    def test_five_curves_against_oracle(self):
        values = np.array([[0.0, 4.0], [1.0, 1.0], [2.0, 3.0], [3.0, 0.0], [4.0, 2.0]])
        ranks = pointwise_ranks(values)
        erl = erl_measures(ranks)
        _, two = ranks_oracle(values)
        exact = erl_oracle(two)
        for alpha in (0.25, 0.5, 0.75):
            res = global_envelope(values, erl, alpha)
            e, index_set, lower, upper = envelope_oracle(values, exact, alpha)
            assert res.critical_e == float(e)
            assert res.index_set_size == len(index_set)
            assert np.array_equal(res.lower, lower)
            assert np.array_equal(res.upper, upper)

    def test_oracle_on_random_instances(self):
        rng = np.random.default_rng(77)
        for _ in range(200):
            m, d = int(rng.integers(2, 9)), int(rng.integers(1, 7))
            values = rng.normal(size=(m, d)) if rng.random() < 0.5 else rng.integers(0, 3, (m, d)).astype(float)
            alpha = float(rng.choice([0.1, 0.2, 0.3, 0.5]))
            erl = erl_measures(pointwise_ranks(values))
            _, two = ranks_oracle(values)
            e, index_set, lower, upper = envelope_oracle(values, erl_oracle(two), alpha)
            with pytest.warns(RuntimeWarning) if alpha * (m - 1) < 1 else _no_warning():
                res = global_envelope(values, erl, alpha)
            assert res.critical_e == float(e)
            assert res.index_set_size == len(index_set)
            assert np.array_equal(res.lower, lower) and np.array_equal(res.upper, upper)

    def test_alpha_outside_unit_interval(self):
        values = np.random.default_rng(0).normal(size=(10, 2))
        erl = erl_measures(pointwise_ranks(values))
        for alpha in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(InvalidArgumentError):
                global_envelope(values, erl, alpha)

    def test_warns_when_alpha_s_below_one(self):
        values = np.random.default_rng(0).normal(size=(10, 2))
        erl = erl_measures(pointwise_ranks(values))
        with pytest.warns(RuntimeWarning):
            res = global_envelope(values, erl, 0.05)
        assert res.index_set_size == 10
        assert np.array_equal(res.lower, values.min(axis=0))

    def test_lower_never_exceeds_upper(self):
        rng = np.random.default_rng(8)
        res = global_envelope_test(rng.normal(size=(50, 30)), alpha=0.1)
        assert np.all(res.lower <= res.upper)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    @pytest.mark.parametrize("s", [9, 99])
    @pytest.mark.parametrize("d", [1, 5, 50])
    @pytest.mark.parametrize("tails", ["symmetric", "shifted"])
    def test_igi_every_row(self, s, d, tails):
        rng = np.random.default_rng(s * 1000 + d)
        for _ in range(20):
            values = rng.normal(size=(s + 1, d))
            for alpha in (0.1, 0.2):
                res = global_envelope_test(values, alpha=alpha, tails=tails)
                exits = outside_envelope(values, res)
                assert np.array_equal(exits, res.erl < res.critical_e)

    def test_index_set_size_bound(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            values = rng.integers(0, 5, (40, 6)).astype(float)
            res = global_envelope_test(values, alpha=0.1)
            ties = np.count_nonzero(res.erl == res.critical_e)
            assert res.index_set_size >= 0.9 * 40 - ties
            kept = values[res.erl >= res.critical_e]
            assert np.all((kept >= res.lower) & (kept <= res.upper))

    def test_larger_alpha_gives_nested_envelope(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            values = rng.normal(size=(100, 12))
            erl = erl_measures(pointwise_ranks(values))
            prev = None
            for alpha in (0.01, 0.05, 0.1, 0.3, 0.6):
                res = global_envelope(values, erl, alpha) if alpha * 99 >= 1 else None
                if res is None:
                    continue
                if prev is not None:
                    assert res.index_set_size <= prev.index_set_size
                    assert np.all(res.lower >= prev.lower) and np.all(res.upper <= prev.upper)
                prev = res

    def test_exchangeable_curves_rarely_flagged(self):
        rng = np.random.default_rng(13)
        reps, alpha, s = 1000, 0.05, 99
        flagged = 0
        for _ in range(reps):
            res = global_envelope_test(rng.normal(size=(s + 1, 10)), alpha=alpha)
            flagged += bool(res.significant_mask.any())
        assert flagged / reps <= alpha + 3 * np.sqrt(alpha * (1 - alpha) / reps)

    def test_reject_matches_p_value_relation(self):
        rng = np.random.default_rng(14)
        for _ in range(200):
            values = rng.normal(size=(40, 3))
            res = global_envelope_test(values, alpha=0.1)
            assert res.reject == (res.p_erl * 40 <= int(0.1 * 39 + 1e-9))
            assert res.reject == bool(res.significant_mask.any())

    def test_curve_set_validation(self):
        with pytest.raises(InvalidInputError):
            CurveSet(np.ones((1, 3)))
        with pytest.raises(InvalidInputError):
            CurveSet(np.ones(5))
        with pytest.raises(InvalidInputError):
            CurveSet(np.array([[1.0, np.inf], [0.0, 0.0]]))


class _no_warning:
    def __enter__(self):
        return self

    def __exit__(self, *exc):
        return False
