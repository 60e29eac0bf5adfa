import numpy as np
import pytest
from scipy.stats import beta as beta_dist
from scipy.stats import kstest

from ineqmn.errors import IneqmnError, InfeasibleError
from ineqmn.model import (
    AbPolytope,
    CountData,
    DirichletPrior,
    ItemLayout,
    VPolytope,
    posterior_shapes,
    sample_unconstrained,
    satisfies_ab,
    satisfies_ab_batch,
)
from ineqmn.sampler import (
    AbGibbsBlock,
    Chain,
    ConstraintModel,
    effective_sample_size,
    gibbs_chain,
    map_estimate,
    run_parallel_chains,
    sample_truncated_beta,
)

LAYOUT3 = ItemLayout((2, 2, 2))
MONO_POLY = AbPolytope([[1.0, -1, 0], [0, 1, -1], [0, 0, 1]], [0.0, 0, 0.5])
MONO_VERTS = VPolytope([[0, 0, 0], [0, 0, 0.5], [0, 0.5, 0.5], [0.5, 0.5, 0.5]])
DOSAGE_POLY = AbPolytope([[-1.0, 1, 0], [0, -1, 1]], [0.0, 0])
DOSAGE_DATA = CountData.from_free([16, 4, 2], [40, 36, 15], LAYOUT3)
UNIFORM3 = DirichletPrior.uniform(LAYOUT3)


class TestTruncatedBeta:
    def test_uniform_passthrough(self):
        assert sample_truncated_beta(1, 1, 0, 1, 0.3) == pytest.approx(0.3)

    def test_truncated_uniform_midpoint(self):
        assert sample_truncated_beta(1, 1, 0.2, 0.4, 0.5) == pytest.approx(0.3)

    def test_square_root_inverse_exact(self):
        # Beta(2,1): F(x) = x^2, so F^-1(0.49) = 0.7
        assert abs(sample_truncated_beta(2, 1, 0, 1, 0.49) - 0.7) < 1e-12

    def test_result_within_bounds(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            a, b = rng.uniform(0.5, 30, 2)
            lo, hi = np.sort(rng.random(2))
            x = sample_truncated_beta(a, b, lo, hi, rng.random())
            assert lo <= x <= hi

    def test_vector_matches_scalar(self):
        rng = np.random.default_rng(1)
        a = rng.uniform(0.5, 20, 50)
        b = rng.uniform(0.5, 20, 50)
        lo = rng.random(50) * 0.5
        hi = lo + rng.random(50) * 0.4
        u = rng.random(50)
        vec = sample_truncated_beta(a, b, lo, hi, u)
        ref = [
            sample_truncated_beta(*(float(v[i]) for v in (a, b, lo, hi, u)))
            for i in range(50)
        ]
        assert np.allclose(vec, ref, rtol=1e-12, atol=1e-12)

    def test_ks_against_analytic_truncated_cdf(self):
        rng = np.random.default_rng(2)
        for a, b in [(1, 1), (2, 1), (17, 25)]:
            lo, hi = 0.2, 0.4
            u = rng.random(20_000)
            draws = sample_truncated_beta(a, b, lo, hi, u)
            dist = beta_dist(a, b)
            denom = dist.cdf(hi) - dist.cdf(lo)
            cdf = lambda x: np.clip((dist.cdf(x) - dist.cdf(lo)) / denom, 0, 1)
            assert kstest(draws, cdf).pvalue > 0.001

    def test_degenerate_interval_falls_back_to_uniform(self):
        lo = 0.5
        hi = 0.5 + 1e-16
        x = sample_truncated_beta(2, 2, lo, hi, 0.25)
        assert lo <= x <= hi

    def test_deep_tail_draw_stays_in_bounds(self):
        # far upper tail of a concentrated beta
        x = sample_truncated_beta(3, 40, 0.9, 0.95, 0.7)
        assert 0.9 <= x <= 0.95

    def test_invalid_bounds_rejected(self):
        with pytest.raises(ValueError):
            sample_truncated_beta(1, 1, 0.5, 0.2, 0.3)


class TestConstraintModel:
    def test_exactly_one_representation(self):
        with pytest.raises(ValueError):
            ConstraintModel(LAYOUT3, ab=MONO_POLY, vertices=MONO_VERTS)
        with pytest.raises(ValueError):
            ConstraintModel(LAYOUT3)

    def test_dimension_check(self):
        with pytest.raises(ValueError):
            ConstraintModel.from_ab(ItemLayout((2, 2)), MONO_POLY)

    def test_kind_and_contains(self):
        m = ConstraintModel.from_ab(LAYOUT3, MONO_POLY)
        assert m.kind == "ab"
        assert m.contains([0.1, 0.2, 0.3])
        v = ConstraintModel.from_vertices(LAYOUT3, MONO_VERTS)
        assert v.kind == "vertices"
        assert v.contains([0.1, 0.2, 0.3])
        assert not v.contains([0.6, 0.1, 0.1])

    def test_indicator_dispatch(self):
        m = ConstraintModel.from_indicator(LAYOUT3, lambda th: th[0] <= 0.5)
        assert m.kind == "indicator"
        assert m.contains([0.3, 0.9, 0.9])
        iv = m.conditional_interval(np.array([0.3, 0.9, 0.9]), 0)
        assert iv.hi == pytest.approx(0.5, abs=1e-7)


class TestMapEstimate:
    def test_unconstrained_mode(self):
        lay = ItemLayout((2,))
        data = CountData.from_free([16], [40], lay)
        model = ConstraintModel.unconstrained(lay)
        theta = map_estimate(model, data, DirichletPrior.uniform(lay))
        assert theta[0] == pytest.approx(0.4, abs=1e-6)

    def test_inactive_constraints_keep_unconstrained_mode(self):
        data = CountData.from_free([1, 2, 3], [10, 10, 10], LAYOUT3)
        model = ConstraintModel.from_ab(LAYOUT3, MONO_POLY)
        theta = map_estimate(model, data, UNIFORM3)
        assert np.allclose(theta, [0.1, 0.2, 0.3], atol=1e-5)

    def test_active_constraint_matches_grid_search(self):
        # unconstrained modes (0.4, 0.2, 0.3) violate theta_11 <= theta_21
        data = CountData.from_free([4, 2, 3], [10, 10, 10], LAYOUT3)
        model = ConstraintModel.from_ab(LAYOUT3, MONO_POLY)
        theta = map_estimate(model, data, UNIFORM3)
        assert theta[0] == pytest.approx(theta[1], abs=1e-5)

        def kernel(th):
            k = np.array([4, 2, 3])
            n = 10
            return float(
                np.sum(k * np.log(th) + (n - k) * np.log1p(-th))
            )

        # two-stage grid oracle over the polytope
        grid = np.linspace(1e-4, 0.5, 120)
        best, best_val = None, -np.inf
        for t1 in grid:
            for t2 in grid[grid >= t1 - 1e-12]:
                for t3 in grid[grid >= t2 - 1e-12]:
                    v = kernel(np.array([t1, t2, t3]))
                    if v > best_val:
                        best, best_val = np.array([t1, t2, t3]), v
        fine = [np.linspace(max(1e-5, b - 0.01), min(0.5, b + 0.01), 41) for b in best]
        for t1 in fine[0]:
            for t2 in fine[1]:
                if t2 < t1:
                    continue
                for t3 in fine[2]:
                    if t3 < t2:
                        continue
                    v = kernel(np.array([t1, t2, t3]))
                    if v > best_val:
                        best, best_val = np.array([t1, t2, t3]), v
        assert np.allclose(theta, best, atol=1e-3)
        assert np.allclose(theta, [0.3, 0.3, 0.3], atol=1e-3)

    def test_flat_kernel_returns_interior_point(self):
        model = ConstraintModel.from_ab(LAYOUT3, MONO_POLY)
        theta = map_estimate(model, CountData.empty(LAYOUT3), UNIFORM3)
        assert satisfies_ab(theta, MONO_POLY)
        assert np.all(theta > 0.01)

    def test_vertex_map_matches_ab_map(self):
        data = CountData.from_free([4, 2, 3], [10, 10, 10], LAYOUT3)
        ab_theta = map_estimate(
            ConstraintModel.from_ab(LAYOUT3, MONO_POLY), data, UNIFORM3
        )
        v_theta = map_estimate(
            ConstraintModel.from_vertices(LAYOUT3, MONO_VERTS), data, UNIFORM3
        )
        # the optimum sits on a face of the weight simplex, where softmax
        # parameterization converges only at first order
        assert np.allclose(v_theta, ab_theta, atol=1e-3)

    def test_infeasible_polytope_detected(self):
        poly = AbPolytope([[1.0, 0, 0], [-1.0, 0, 0]], [0.2, -0.6])
        model = ConstraintModel.from_ab(LAYOUT3, poly)
        with pytest.raises(InfeasibleError):
            map_estimate(model, DOSAGE_DATA, UNIFORM3)

    def test_indicator_map_not_defined(self):
        model = ConstraintModel.from_indicator(LAYOUT3, lambda th: True)
        with pytest.raises(IneqmnError):
            map_estimate(model, DOSAGE_DATA, UNIFORM3)


class TestGibbsChain:
    def test_unconstrained_conjugate_mean(self):
        lay = ItemLayout((2,))
        data = CountData.from_free([16], [40], lay)
        model = ConstraintModel.unconstrained(lay)
        chain = gibbs_chain(model, data, DirichletPrior.uniform(lay), 100_000, seed=5)
        assert chain.samples.mean() == pytest.approx(17 / 42, abs=0.005)

    def test_prior_sampling_matches_rejection_oracle(self):
        model = ConstraintModel.from_ab(LAYOUT3, MONO_POLY)
        chain = gibbs_chain(
            model, CountData.empty(LAYOUT3), UNIFORM3, 20_000, seed=6
        )
        assert satisfies_ab_batch(chain.samples, MONO_POLY).all()
        rng = np.random.default_rng(7)
        draws = rng.random((400_000, 3))
        keep = draws[satisfies_ab_batch(draws, MONO_POLY)]
        assert np.all(
            np.abs(chain.samples.mean(axis=0) - keep.mean(axis=0)) < 0.01
        )

    def test_vertex_chain_matches_ab_chain(self):
        ab = gibbs_chain(
            ConstraintModel.from_ab(LAYOUT3, MONO_POLY),
            DOSAGE_DATA, UNIFORM3, 4000, seed=8,
        )
        vv = gibbs_chain(
            ConstraintModel.from_vertices(LAYOUT3, MONO_VERTS),
            DOSAGE_DATA, UNIFORM3, 4000, seed=9,
        )
        assert np.all(np.abs(ab.samples.mean(axis=0) - vv.samples.mean(axis=0)) < 0.01)
        assert satisfies_ab_batch(vv.samples, MONO_POLY).all()

    def test_indicator_chain_quarter_disc(self):
        # uniform prior restricted to theta_1^2 + theta_2^2 <= 0.25;
        # the centroid of a quarter disc of radius r sits at 4r/(3pi)
        lay = ItemLayout((2, 2))
        inside = lambda th: th[0] ** 2 + th[1] ** 2 <= 0.25
        model = ConstraintModel.from_indicator(lay, inside)
        chain = gibbs_chain(
            model, CountData.empty(lay), DirichletPrior.uniform(lay),
            8000, start=np.array([0.1, 0.1]), burnin=50, seed=10,
        )
        assert np.all(chain.samples[:, 0] ** 2 + chain.samples[:, 1] ** 2 <= 0.25 + 1e-9)
        centroid = 4 * 0.5 / (3 * np.pi)
        assert np.all(np.abs(chain.samples.mean(axis=0) - centroid) < 0.01)

    def test_seed_reproducibility(self):
        model = ConstraintModel.from_ab(LAYOUT3, DOSAGE_POLY)
        c1 = gibbs_chain(model, DOSAGE_DATA, UNIFORM3, 500, seed=11)
        c2 = gibbs_chain(model, DOSAGE_DATA, UNIFORM3, 500, seed=11)
        assert np.array_equal(c1.samples, c2.samples)

    def test_random_scan(self):
        model = ConstraintModel.from_ab(LAYOUT3, DOSAGE_POLY)
        chain = gibbs_chain(
            model, DOSAGE_DATA, UNIFORM3, 3000, scan="random", seed=12
        )
        assert satisfies_ab_batch(chain.samples, DOSAGE_POLY).all()
        ref = gibbs_chain(model, DOSAGE_DATA, UNIFORM3, 3000, seed=12)
        assert np.all(
            np.abs(chain.samples.mean(axis=0) - ref.samples.mean(axis=0)) < 0.02
        )

    def test_default_burnin_depends_on_start(self):
        model = ConstraintModel.from_ab(LAYOUT3, DOSAGE_POLY)
        from_map = gibbs_chain(model, DOSAGE_DATA, UNIFORM3, 50, seed=13)
        assert from_map.burnin == 10
        explicit = gibbs_chain(
            model, DOSAGE_DATA, UNIFORM3, 50,
            start=np.array([0.4, 0.2, 0.1]), seed=13,
        )
        assert explicit.burnin == 1000

    def test_infeasible_start_rejected(self):
        model = ConstraintModel.from_ab(LAYOUT3, DOSAGE_POLY)
        with pytest.raises(InfeasibleError):
            gibbs_chain(
                model, DOSAGE_DATA, UNIFORM3, 100,
                start=np.array([0.1, 0.2, 0.3]), seed=0,
            )


class TestBlockKernel:
    def test_block_matches_rejection_oracle(self):
        rng = np.random.default_rng(14)
        start = np.tile([0.1, 0.2, 0.3], (512, 1))
        block = AbGibbsBlock(MONO_POLY, LAYOUT3, np.ones(6), start, rng)
        for _ in range(10):
            block.sweep()
        total = np.zeros(3)
        count = 0
        for _ in range(200):
            theta = block.sweep()
            total += theta.sum(axis=0)
            count += theta.shape[0]
        draws = np.random.default_rng(15).random((400_000, 3))
        keep = draws[satisfies_ab_batch(draws, MONO_POLY)]
        assert np.all(np.abs(total / count - keep.mean(axis=0)) < 0.01)

    def test_posterior_block_matches_sequential(self):
        shapes = posterior_shapes(DOSAGE_DATA, UNIFORM3)
        rng = np.random.default_rng(16)
        start = np.tile(
            map_estimate(
                ConstraintModel.from_ab(LAYOUT3, DOSAGE_POLY), DOSAGE_DATA, UNIFORM3
            ),
            (256, 1),
        )
        block = AbGibbsBlock(DOSAGE_POLY, LAYOUT3, shapes, start, rng)
        for _ in range(10):
            block.sweep()
        total = np.zeros(3)
        count = 0
        for _ in range(100):
            theta = block.sweep()
            assert satisfies_ab_batch(theta, DOSAGE_POLY).all()
            total += theta.sum(axis=0)
            count += theta.shape[0]
        chain = gibbs_chain(
            ConstraintModel.from_ab(LAYOUT3, DOSAGE_POLY),
            DOSAGE_DATA, UNIFORM3, 20_000, seed=17,
        )
        assert np.all(np.abs(total / count - chain.samples.mean(axis=0)) < 0.01)


class TestEffectiveSampleSize:
    def test_iid_ratio_near_one(self):
        rng = np.random.default_rng(18)
        x = rng.normal(size=(5000, 2))
        ratio = effective_sample_size(x) / 5000
        assert np.all((ratio > 0.9) & (ratio < 1.1))

    def test_ar1_matches_analytic(self):
        rng = np.random.default_rng(19)
        phi = 0.5
        n = 60_000
        eps = rng.normal(size=n)
        x = np.empty(n)
        x[0] = eps[0]
        for t in range(1, n):
            x[t] = phi * x[t - 1] + np.sqrt(1 - phi**2) * eps[t]
        ratio = effective_sample_size(x)[0] / n
        assert abs(ratio - 1 / 3) < 0.05

    def test_constant_chain_flagged_degenerate(self):
        x = np.full((500, 1), 0.3)
        assert effective_sample_size(x)[0] == 0.0

    def test_needs_minimum_length(self):
        with pytest.raises(ValueError):
            effective_sample_size(np.zeros((50, 1)))


class TestParallelChains:
    def test_single_chain_bit_for_bit(self):
        model = ConstraintModel.from_ab(LAYOUT3, DOSAGE_POLY)
        chains = run_parallel_chains(
            model, DOSAGE_DATA, UNIFORM3, 300, n_chains=1, master_seed=20
        )
        child = np.random.SeedSequence(20).spawn(1)[0]
        ref = gibbs_chain(model, DOSAGE_DATA, UNIFORM3, 300, seed=child)
        assert np.array_equal(chains[0].samples, ref.samples)

    def test_same_master_seed_identical(self):
        model = ConstraintModel.from_ab(LAYOUT3, DOSAGE_POLY)
        a = run_parallel_chains(
            model, DOSAGE_DATA, UNIFORM3, 200, n_chains=4, master_seed=21, threads=1
        )
        b = run_parallel_chains(
            model, DOSAGE_DATA, UNIFORM3, 200, n_chains=4, master_seed=21, threads=4
        )
        for ca, cb in zip(a, b):
            assert np.array_equal(ca.samples, cb.samples)

    def test_between_chain_consistency(self):
        model = ConstraintModel.from_ab(LAYOUT3, DOSAGE_POLY)
        chains = run_parallel_chains(
            model, DOSAGE_DATA, UNIFORM3, 4000, n_chains=8, master_seed=22, threads=2
        )
        means = np.array([c.samples.mean(axis=0) for c in chains])
        for d in range(3):
            se = np.array(
                [
                    c.samples[:, d].std()
                    / np.sqrt(max(effective_sample_size(c)[d], 1.0))
                    for c in chains
                ]
            )
            for i in range(8):
                for j in range(i + 1, 8):
                    gap = abs(means[i, d] - means[j, d])
                    assert gap < 3 * np.hypot(se[i], se[j]) + 1e-9

    def test_failure_carries_chain_index(self):
        model = ConstraintModel.from_ab(LAYOUT3, DOSAGE_POLY)
        with pytest.raises(IneqmnError, match="chain 0"):
            run_parallel_chains(
                model, DOSAGE_DATA, UNIFORM3, 100, n_chains=2, master_seed=23,
                start=np.array([0.1, 0.2, 0.3]), threads=1,
            )
