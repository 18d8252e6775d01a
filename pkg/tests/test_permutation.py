import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import envtest.permutation as permutation
from envtest.datasets import road_accidents
from envtest.errors import ConfigurationError, InvalidArgumentError, InvalidInputError
from envtest.permutation import (
    PermutationPlan,
    draw_permutations,
    evaluate_permutations,
    permute_y,
    replicate_generator,
    run_envelope_test,
    run_scalar_permutation_test,
    scalar_p_value,
)
from envtest.reference import spearman_rho
from envtest.statistics import (
    BivariateSample,
    contingency_statistic,
    ecdf_statistic,
    prepare_statistic,
    qq_intensity_statistic,
)


@pytest.fixture()
def normal_sample():
    rng = np.random.default_rng(3)
    return BivariateSample(rng.normal(size=80), rng.normal(size=80))


class TestPermuteY:
    def test_identity(self, normal_sample):
        same = permute_y(normal_sample, np.arange(normal_sample.n))
        assert np.array_equal(same.x, normal_sample.x)
        assert np.array_equal(same.y, normal_sample.y)
        assert np.array_equal(ecdf_statistic(same).values, ecdf_statistic(normal_sample).values)

    def test_reversal_flips_spearman(self):
        x = np.arange(20.0)
        sample = BivariateSample(x, x**3)
        flipped = permute_y(sample, np.arange(19, -1, -1))
        assert spearman_rho(sample.x, sample.y) == 1.0
        assert spearman_rho(flipped.x, flipped.y) == -1.0

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 40).flatmap(lambda n: st.permutations(list(range(n)))))
    def test_marginals_preserved(self, perm):
        n = len(perm)
        rng = np.random.default_rng(n)
        sample = BivariateSample(rng.normal(size=n), rng.normal(size=n))
        out = permute_y(sample, np.array(perm))
        assert np.array_equal(out.x, sample.x)
        assert np.array_equal(np.sort(out.y), np.sort(sample.y))

    @pytest.mark.parametrize(
        "perm", [[0, 0, 1, 2], [0, 1, 2], [0, 1, 2, 4], [0.0, 1.0, 2.0, 3.0], [-1, 0, 1, 2]]
    )
    def test_non_bijection(self, perm):
        sample = BivariateSample(np.arange(4.0), np.arange(4.0))
        with pytest.raises(InvalidArgumentError):
            permute_y(sample, np.array(perm))


class TestPlan:
    def test_defaults(self):
        plan = PermutationPlan()
        assert plan.s == 999 and plan.statistic == "cdf" and plan.tails == "shifted"

    @pytest.mark.parametrize(
        "kwargs",
        [{"s": 0}, {"seed": -1}, {"statistic": "hoeffding"}, {"tails": "left"}, {"workers": 0}],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            PermutationPlan(**kwargs)

    def test_alpha_attainability(self):
        PermutationPlan(s=19).check_alpha(0.05)
        with pytest.raises(ConfigurationError):
            PermutationPlan(s=18).check_alpha(0.05)
        with pytest.raises(ConfigurationError):
            PermutationPlan().check_alpha(1.0)

    def test_workers_from_environment(self, monkeypatch):
        monkeypatch.setenv("ENVTEST_THREADS", "3")
        assert PermutationPlan().resolved_workers() == 3
        assert PermutationPlan(workers=2).resolved_workers() == 2
        monkeypatch.setenv("ENVTEST_THREADS", "many")
        with pytest.raises(ConfigurationError):
            PermutationPlan().resolved_workers()


class TestRandomPermutations:
    def test_rows_are_permutations(self):
        perms = draw_permutations(7, 1, 51, 30)
        assert perms.shape == (50, 30)
        assert np.all(np.sort(perms, axis=1) == np.arange(30))

    def test_replicate_streams_are_fixed(self):
        a = draw_permutations(7, 1, 11, 30)
        b = draw_permutations(7, 5, 11, 30)
        assert np.array_equal(a[4:], b)
        assert np.array_equal(a[0], replicate_generator(7, 1).permutation(30))
        assert not np.array_equal(a, draw_permutations(8, 1, 11, 30))

    def test_uniform_first_position(self):
        # position 0 of a uniform permutation of 4 is uniform on {0..3}
        perms = draw_permutations(1, 1, 4001, 4)
        counts = np.bincount(perms[:, 0], minlength=4)
        assert np.all(np.abs(counts - 1000) < 4 * np.sqrt(4000 * 0.25 * 0.75))

    def test_chunked_evaluation(self, normal_sample):
        prepared = prepare_statistic("qq", normal_sample)
        perms = draw_permutations(2, 1, 40, normal_sample.n)
        whole = evaluate_permutations(prepared, perms)
        rows = np.concatenate([prepared.evaluate(p[None, :]) for p in perms])
        assert np.array_equal(whole, rows)


class TestEnvelopeTest:
    @pytest.mark.parametrize("stat", ["cdf", "qq"])
    def test_row_zero_is_observed(self, normal_sample, stat):
        res = run_envelope_test(normal_sample, PermutationPlan(s=39, statistic=stat), 0.05, keep_curves=True)
        direct = ecdf_statistic(normal_sample) if stat == "cdf" else qq_intensity_statistic(normal_sample)
        assert np.array_equal(res.curves.observed, direct.values)
        assert np.array_equal(res.field.values, direct.values)

    def test_row_zero_table(self):
        sample = road_accidents().expand()
        res = run_envelope_test(sample, PermutationPlan(s=39, statistic="table"), 0.05, keep_curves=True)
        assert np.array_equal(res.curves.observed, contingency_statistic(sample).values)
        assert np.array_equal(res.curves.values[1:].reshape(39, 5, 8).sum(axis=2)[0], road_accidents().counts.sum(axis=1))

    def test_comonotone_qq(self):
        x = np.random.default_rng(0).normal(size=50)
        sample = BivariateSample(x, x)
        for seed in range(20):
            res = run_envelope_test(sample, PermutationPlan(s=999, seed=seed, statistic="qq"), 0.05)
            assert res.p_value <= 0.005
            assert res.reject

    def test_p_value_lattice(self, normal_sample):
        res = run_envelope_test(normal_sample, PermutationPlan(s=99, seed=4), 0.05)
        assert round(res.p_value * 100) == pytest.approx(res.p_value * 100, abs=1e-9)
        assert res.reject == (res.envelope.above_mask.any() or res.envelope.below_mask.any())

    def test_independent_of_workers_and_chunks(self, normal_sample, monkeypatch):
        plan = PermutationPlan(s=199, seed=11, statistic="qq", workers=1)
        base = run_envelope_test(normal_sample, plan, 0.05, keep_curves=True)
        monkeypatch.setattr(permutation, "_CHUNK_ENTRIES", 7 * normal_sample.n)
        threaded = run_envelope_test(
            normal_sample, PermutationPlan(s=199, seed=11, statistic="qq", workers=4), 0.05, keep_curves=True
        )
        assert np.array_equal(base.curves.values, threaded.curves.values)
        assert base.p_value == threaded.p_value

    def test_size_under_independence(self):
        rng = np.random.default_rng(21)
        reps, alpha = 200, 0.1
        rejections = 0
        for r in range(reps):
            sample = BivariateSample(rng.normal(size=40), rng.exponential(size=40))
            rejections += run_envelope_test(sample, PermutationPlan(s=99, seed=r), alpha).reject
        assert rejections / reps <= alpha + 3 * np.sqrt(alpha * (1 - alpha) / reps)

    def test_incompatible(self, normal_sample):
        with pytest.raises(InvalidInputError):
            run_envelope_test(normal_sample, PermutationPlan(s=19, statistic="table"), 0.05)
        with pytest.raises(ConfigurationError):
            run_envelope_test(normal_sample, PermutationPlan(s=10), 0.05)
        with pytest.raises(ConfigurationError):
            run_envelope_test(normal_sample, PermutationPlan(s=19, statistic="PeaP"), 0.05)


class TestScalarPermutationTest:
    def test_devs_on_diagonal(self):
        x = np.random.default_rng(1).normal(size=30)
        sample = BivariateSample(x, x)
        for seed in range(20):
            res = run_scalar_permutation_test(sample, PermutationPlan(s=999, seed=seed, statistic="DevS"))
            assert res.p_value == 1 / 1000
            assert res.method == "DevS"

    def test_constant_statistic(self):
        assert scalar_p_value(np.full(100, 0.3), "upper") == 1.0
        assert scalar_p_value(np.full(100, -0.3), "two-sided") == 1.0

    def test_two_sided_uses_absolute_values(self):
        assert scalar_p_value([0.5, -0.5, 0.1, 0.6], "two-sided") == 3 / 4
        assert scalar_p_value([0.5, -0.5, 0.1, 0.6], "upper") == 2 / 4
        with pytest.raises(InvalidArgumentError):
            scalar_p_value([0.0, 1.0], "lower")

    def test_chi2_permutation(self):
        res = run_scalar_permutation_test(road_accidents().expand(), PermutationPlan(s=99, statistic="Chi2"))
        assert res.df == 28
        assert res.p_value == 1 / 100

    def test_deterministic(self, normal_sample):
        plan = PermutationPlan(s=199, seed=5, statistic="Ken")
        assert run_scalar_permutation_test(normal_sample, plan) == run_scalar_permutation_test(
            normal_sample, PermutationPlan(s=199, seed=5, statistic="Ken", workers=3)
        )

    def test_rejects_envelope_statistic(self, normal_sample):
        with pytest.raises(ConfigurationError):
            run_scalar_permutation_test(normal_sample, PermutationPlan(s=19, statistic="cdf"))
