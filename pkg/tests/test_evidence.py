import numpy as np
import pytest

from ineqmn.evidence import (
    CountResult,
    automatic_count,
    count_in_region,
    encompassing_bf,
    proportion_draws,
    stepwise_count,
)
from ineqmn.model import (
    AbPolytope,
    CountData,
    DirichletPrior,
    ItemLayout,
    VPolytope,
    posterior_shapes,
)
from ineqmn.sampler import ConstraintModel

LAYOUT3 = ItemLayout((2, 2, 2))
MONO_POLY = AbPolytope([[1.0, -1, 0], [0, 1, -1], [0, 0, 1]], [0.0, 0, 0.5])
MONO_MODEL = ConstraintModel.from_ab(LAYOUT3, MONO_POLY)
DOSAGE_POLY = AbPolytope([[-1.0, 1, 0], [0, -1, 1]], [0.0, 0])
DOSAGE_MODEL = ConstraintModel.from_ab(LAYOUT3, DOSAGE_POLY)
DOSAGE_DATA = CountData.from_free([16, 4, 2], [40, 36, 15], LAYOUT3)
UNIFORM6 = np.ones(6)

# The exact dosage Bayes factor, frozen from 1-d quadrature of
# P(t1 >= t2 >= t3) under independent Beta(17,25), Beta(5,33), Beta(3,14):
# bf_0u = 6 * 0.3507012935786054.
DOSAGE_BF_TRUE = 2.1042077614716326
DOSAGE_BF00C_TRUE = 2.700615988529326


def se_of(counts, rng=None, draws=4000):
    rng = np.random.default_rng(0) if rng is None else rng
    return float(np.std(proportion_draws(counts, draws, rng), ddof=1))


class TestCountResult:
    def test_bounds_enforced(self):
        with pytest.raises(ValueError):
            CountResult(inside=5, total=4)
        with pytest.raises(ValueError):
            CountResult(inside=-1, total=4)

    def test_product_structure(self):
        cr = CountResult(
            inside=6, total=24, per_step=((2, 4), (3, 6)), distribution="sampling"
        )
        assert cr.proportion == pytest.approx((2 / 4) * (3 / 6))
        with pytest.raises(ValueError):
            CountResult(inside=5, total=24, per_step=((2, 4), (3, 6)))

    def test_plain_proportion(self):
        assert CountResult(inside=1, total=48).proportion == pytest.approx(1 / 48)


class TestCountInRegion:
    def test_full_space_counts_everything(self):
        model = ConstraintModel.unconstrained(LAYOUT3)
        res = count_in_region(
            model, UNIFORM6, 5000, np.random.default_rng(1), threads=1
        )
        assert res.inside == res.total == 5000

    def test_monotone_volume(self):
        res = count_in_region(
            MONO_MODEL, UNIFORM6, 10**6, np.random.default_rng(2), threads=1
        )
        p = res.proportion
        se = np.sqrt(p * (1 - p) / res.total)
        assert abs(p - 1 / 48) < 3 * se

    def test_dosage_order_volume_by_symmetry(self):
        # one of 3! orderings of three uniform variables
        res = count_in_region(
            DOSAGE_MODEL, UNIFORM6, 10**6, np.random.default_rng(3), threads=1
        )
        p = res.proportion
        se = np.sqrt(p * (1 - p) / res.total)
        assert abs(p - 1 / 6) < 3 * se

    def test_thread_count_does_not_change_result(self):
        a = count_in_region(
            MONO_MODEL, UNIFORM6, 200_000, np.random.default_rng(4), threads=1
        )
        b = count_in_region(
            MONO_MODEL, UNIFORM6, 200_000, np.random.default_rng(4), threads=4
        )
        assert a.inside == b.inside

    def test_reorder_does_not_change_result(self):
        a = count_in_region(
            MONO_MODEL, UNIFORM6, 100_000, np.random.default_rng(5), threads=1
        )
        b = count_in_region(
            MONO_MODEL, UNIFORM6, 100_000, np.random.default_rng(5),
            threads=1, reorder=True,
        )
        assert a.inside == b.inside

    def test_row_permutation_does_not_change_result(self):
        perm = AbPolytope(MONO_POLY.A[[2, 0, 1]], MONO_POLY.b[[2, 0, 1]])
        a = count_in_region(
            MONO_MODEL, UNIFORM6, 100_000, np.random.default_rng(6), threads=1
        )
        b = count_in_region(
            ConstraintModel.from_ab(LAYOUT3, perm), UNIFORM6, 100_000,
            np.random.default_rng(6), threads=1,
        )
        assert a.inside == b.inside

    def test_vertex_region_counting(self):
        verts = ConstraintModel.from_vertices(
            LAYOUT3,
            VPolytope([[0, 0, 0], [0, 0, 0.5], [0, 0.5, 0.5], [0.5, 0.5, 0.5]]),
        )
        res = count_in_region(verts, UNIFORM6, 4000, np.random.default_rng(7), threads=1)
        p = res.proportion
        se = np.sqrt(p * (1 - p) / res.total)
        assert abs(p - 1 / 48) < 4 * se


class TestStepwiseCount:
    def test_per_step_conditional_volumes(self):
        res = stepwise_count(
            MONO_POLY, (1, 2, 3), UNIFORM6, LAYOUT3, 100_000,
            np.random.default_rng(8),
        )
        expected = (1 / 2, 1 / 3, 1 / 8)
        for (h, d), truth in zip(res.per_step, expected):
            p = h / d
            se = np.sqrt(p * (1 - p) / d)
            assert abs(p - truth) < 4 * se
        se_total = se_of(res)
        assert abs(res.proportion - 1 / 48) < 4 * se_total

    def test_single_step_equals_plain_counting_distribution(self):
        res = stepwise_count(
            MONO_POLY, (3,), UNIFORM6, LAYOUT3, 200_000, np.random.default_rng(9)
        )
        assert res.per_step is not None and len(res.per_step) == 1
        p = res.proportion
        se = np.sqrt(p * (1 - p) / res.total)
        assert abs(p - 1 / 48) < 4 * se

    def test_validates_steps(self):
        rng = np.random.default_rng(0)
        with pytest.raises(ValueError):
            stepwise_count(MONO_POLY, (2, 1, 3), UNIFORM6, LAYOUT3, 100, rng)
        with pytest.raises(ValueError):
            stepwise_count(MONO_POLY, (1, 2), UNIFORM6, LAYOUT3, 100, rng)

    def test_posterior_stepwise_matches_plain(self):
        shapes = posterior_shapes(DOSAGE_DATA, DirichletPrior.uniform(LAYOUT3))
        plain = count_in_region(
            DOSAGE_MODEL, shapes, 200_000, np.random.default_rng(10), threads=1
        )
        step = stepwise_count(
            DOSAGE_POLY, (1, 2), shapes, LAYOUT3, 100_000, np.random.default_rng(11)
        )
        gap = abs(plain.proportion - step.proportion)
        se = np.hypot(se_of(plain), se_of(step))
        assert gap < 4 * se


class TestAutomaticCount:
    def test_reaches_cmin_everywhere(self):
        res = automatic_count(
            MONO_POLY, (1, 2, 3), UNIFORM6, LAYOUT3, cmin=100,
            rng=np.random.default_rng(12),
        )
        assert res.distribution == "negative-binomial"
        assert all(h >= 100 for h, _ in res.per_step)
        se = se_of(res)
        assert abs(res.proportion - 1 / 48) < 4 * se

    def test_matches_stepwise_when_first_batch_suffices(self):
        auto = automatic_count(
            MONO_POLY, (1, 2, 3), UNIFORM6, LAYOUT3, cmin=10,
            rng=np.random.default_rng(13), block=50_000,
        )
        assert all(d == 50_000 or d >= 50_000 for _, d in auto.per_step)
        assert abs(auto.proportion - 1 / 48) < 5 * se_of(auto)

    def test_budget_exhaustion_returns_partial(self):
        # a region the sampler essentially never hits from one tiny batch
        tiny = AbPolytope(
            np.vstack([MONO_POLY.A, [0.0, 0, -1]]),
            np.concatenate([MONO_POLY.b, [-0.49999]]),
        )
        res = automatic_count(
            tiny, (1, 2, 3, 4), UNIFORM6, LAYOUT3, cmin=50,
            rng=np.random.default_rng(14), block=200, max_step_draws=400,
        )
        assert res.exhausted_steps != ()
        m = res.exhausted_steps[0]
        assert res.per_step[m][0] < 50

    def test_consistency_of_three_estimators(self):
        rng = np.random.default_rng(15)
        plain = count_in_region(MONO_MODEL, UNIFORM6, 300_000, rng, threads=1)
        step = stepwise_count(MONO_POLY, (1, 2, 3), UNIFORM6, LAYOUT3, 100_000, rng)
        auto = automatic_count(
            MONO_POLY, (1, 2, 3), UNIFORM6, LAYOUT3, cmin=200, rng=rng
        )
        results = [plain, step, auto]
        for i in range(3):
            for j in range(i + 1, 3):
                gap = abs(results[i].proportion - results[j].proportion)
                se = np.hypot(se_of(results[i]), se_of(results[j]))
                assert gap < 3 * se


class TestNestingMonotonicity:
    def test_paired_draws_are_monotone_over_prefixes(self):
        # with identical draws, adding rows can only shrink the count
        for seed in range(5):
            counts = [
                count_in_region(
                    ConstraintModel.from_ab(LAYOUT3, MONO_POLY.prefix(r)),
                    UNIFORM6, 50_000, np.random.default_rng(seed), threads=1,
                ).inside
                for r in (0, 1, 2, 3)
            ]
            assert counts[0] == 50_000
            assert counts[0] >= counts[1] >= counts[2] >= counts[3]


class TestEncompassingBf:
    def test_identical_counts_give_unit_bayes_factor(self):
        c = CountResult(inside=300, total=1200)
        res = encompassing_bf(c, c, R=2000, rng=np.random.default_rng(16))
        assert res.bf_0u == pytest.approx(1.0)
        assert res.bf_u0 == pytest.approx(1.0)
        assert res.bf_00c == pytest.approx(1.0)

    def test_all_posterior_inside_with_exact_prior_constant(self):
        post = CountResult(inside=1000, total=1000)
        res = encompassing_bf(1 / 48, post, R=2000, rng=np.random.default_rng(17))
        assert res.bf_0u == pytest.approx(48.0)

    def test_reciprocal_identity_exact(self):
        rng = np.random.default_rng(18)
        for _ in range(20):
            inside = int(rng.integers(1, 999))
            post = CountResult(inside=int(rng.integers(1, 999)), total=1000)
            prior = CountResult(inside=inside, total=1000)
            res = encompassing_bf(prior, post, R=500, rng=rng)
            assert res.bf_0u * res.bf_u0 == pytest.approx(1.0, abs=1e-12)

    def test_dosage_matches_quadrature_truth(self):
        rng = np.random.default_rng(19)
        prior = count_in_region(DOSAGE_MODEL, UNIFORM6, 10**5, rng, threads=1)
        shapes = posterior_shapes(DOSAGE_DATA, DirichletPrior.uniform(LAYOUT3))
        post = count_in_region(DOSAGE_MODEL, shapes, 10**5, rng, threads=1)
        res = encompassing_bf(prior, post, R=5000, rng=rng)
        assert abs(res.bf_0u - DOSAGE_BF_TRUE) < 4 * res.se
        assert res.q05 <= res.bf_0u <= res.q95
        assert abs(res.bf_00c - DOSAGE_BF00C_TRUE) < 0.1

    def test_prior_equals_posterior_without_data(self):
        rng = np.random.default_rng(20)
        prior = count_in_region(MONO_MODEL, UNIFORM6, 10**5, rng, threads=1)
        post = count_in_region(MONO_MODEL, UNIFORM6, 10**5, rng, threads=1)
        res = encompassing_bf(prior, post, R=5000, rng=rng)
        assert abs(res.bf_0u - 1.0) < 3 * res.se

    def test_zero_posterior_count_reports_bound(self):
        prior = CountResult(inside=100, total=1000)
        post = CountResult(inside=0, total=1000)
        res = encompassing_bf(prior, post, R=500, rng=np.random.default_rng(21))
        assert res.status == "zero-posterior-count"
        assert res.bf_0u == 0.0
        assert res.bound == pytest.approx((3 / 1000) / 0.1)

    def test_both_zero_indeterminate(self):
        prior = CountResult(inside=0, total=1000)
        post = CountResult(inside=0, total=1000)
        res = encompassing_bf(prior, post, R=500, rng=np.random.default_rng(22))
        assert res.status == "indeterminate"
        assert np.isnan(res.bf_0u)

    def test_stepwise_counts_multiply_in_uncertainty(self):
        rng = np.random.default_rng(23)
        step = CountResult(
            inside=50 * 30, total=100 * 100, per_step=((50, 100), (30, 100))
        )
        draws = proportion_draws(step, 20_000, rng)
        assert draws.mean() == pytest.approx(
            (51 / 102) * (31 / 102), rel=0.02
        )  # product of beta means

    def test_uncertainty_calibration(self):
        # across replications, the spread of bf_0u estimates should match
        # the reported se within a factor of two
        shapes = posterior_shapes(DOSAGE_DATA, DirichletPrior.uniform(LAYOUT3))
        estimates = []
        reported = []
        for rep in range(200):
            rng = np.random.default_rng(1000 + rep)
            prior = count_in_region(DOSAGE_MODEL, UNIFORM6, 20_000, rng, threads=1)
            post = count_in_region(DOSAGE_MODEL, shapes, 20_000, rng, threads=1)
            res = encompassing_bf(prior, post, R=800, rng=rng)
            estimates.append(res.bf_0u)
            reported.append(res.se)
        sd = np.std(estimates, ddof=1)
        mean_se = np.mean(reported)
        assert mean_se / 2 < sd < mean_se * 2
