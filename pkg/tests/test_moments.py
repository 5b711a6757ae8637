import math

import numpy as np
import pytest
from scipy import stats

from cost_engine.costs import CostSpec
from cost_engine.obstacles import ConvexObstacle
from dynamics_service.models import LtvModel, make_double_integrator
from dynamics_service.rollout import sample_rollouts
from errors import RejectedInputError
from moments_engine.expectation import (
    chi2_cdf,
    chi2_sf,
    collision_probability,
    expected_cost_breakdown,
    expected_quadratic_cost,
    expected_total_cost,
    noncentral_chi2_mean,
    quadratic_cost_trace_identity,
)
from moments_engine.propagation import GaussianBelief, propagate_moments


def random_belief(rng, n=4, rank=None):
    rank = n if rank is None else rank
    M = rng.normal(size=(n, rank))
    return GaussianBelief(rng.normal(size=n), M @ M.T)


def random_spd(rng, n=4):
    M = rng.normal(size=(n, n))
    return M @ M.T + 0.5 * np.eye(n)


class TestPropagation:
    def test_identity_system_grows_linearly(self):
        model = LtvModel.time_invariant(np.eye(2), np.eye(2), horizon=5)
        traj = propagate_moments(model, np.zeros((5, 2)), np.array([1.0, -1.0]))
        assert len(traj) == 6
        for t in range(6):
            np.testing.assert_allclose(traj[t].cov, t * np.eye(2))
            np.testing.assert_allclose(traj[t].mean, [1.0, -1.0])

    def test_mean_follows_nominal(self):
        model = LtvModel.time_invariant(np.eye(1), np.eye(1), horizon=3)
        traj = propagate_moments(model, np.array([[1.0], [2.0], [3.0]]), np.zeros(1))
        np.testing.assert_allclose(traj.means()[:, 0], [0.0, 1.0, 3.0, 6.0])

    def test_initial_covariance_is_zero(self):
        traj = propagate_moments(make_double_integrator(0.2, horizon=4), np.zeros((4, 2)), np.ones(4))
        assert not traj[0].cov.any()
        assert traj.covariances().shape == (5, 4, 4)

    def test_noise_gain_scales_covariance(self):
        model = make_double_integrator(0.0, horizon=6)
        base = propagate_moments(model, np.zeros((6, 2)), np.zeros(4))
        scaled = propagate_moments(model, np.zeros((6, 2)), np.zeros(4), noise_gain=3.0)
        np.testing.assert_allclose(scaled[6].cov, 9.0 * base[6].cov)

    def test_rejects_bad_nominal(self):
        with pytest.raises(RejectedInputError):
            propagate_moments(make_double_integrator(0.0, horizon=4), np.zeros((3, 2)), np.zeros(4))

    @pytest.mark.parametrize("a", [-0.5, 0.0, 0.5])
    def test_matches_sampled_moments(self, a):
        horizon = 20
        model = make_double_integrator(a, horizon=horizon)
        nominal = np.tile([0.5, -0.2], (horizon, 1))
        x0 = np.array([1.0, 2.0, 0.0, 0.0])
        states, _ = sample_rollouts(model, nominal, x0, seed=2024, num_samples=100_000)
        traj = propagate_moments(model, nominal, x0)
        for t in (10, horizon):
            sample = states[:, t]
            P = traj[t].cov
            scale = np.sqrt(np.outer(np.diag(P), np.diag(P)))
            stderr = np.sqrt(np.diag(P) / len(sample))
            assert np.all(np.abs(sample.mean(axis=0) - traj[t].mean) <= 4.0 * stderr)
            assert np.all(np.abs(np.cov(sample.T) - P) <= 0.05 * scale)


class TestGaussianBelief:
    def test_rejects_asymmetric(self):
        with pytest.raises(RejectedInputError):
            GaussianBelief(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_rejects_indefinite(self):
        with pytest.raises(RejectedInputError):
            GaussianBelief(np.zeros(2), np.diag([1.0, -1.0]))

    def test_psd_tolerance_scales_with_magnitude(self):
        GaussianBelief(np.zeros(2), np.diag([1.0, -5e-10]))
        GaussianBelief(np.zeros(2), np.diag([1e12, -1e-6]))
        with pytest.raises(RejectedInputError):
            GaussianBelief(np.zeros(2), np.diag([1.0, -1e-6]))
        with pytest.raises(RejectedInputError):
            GaussianBelief(np.zeros(2), np.diag([1e12, -1e4]))

    def test_unstable_long_horizon_beliefs_are_valid(self):
        traj = propagate_moments(make_double_integrator(0.5, horizon=150), np.zeros((150, 2)), np.zeros(4))
        assert np.linalg.eigvalsh(traj[150].cov)[-1] > 1e20

    def test_marginal(self):
        belief = GaussianBelief(np.arange(3.0), np.diag([1.0, 2.0, 3.0]))
        marginal = belief.marginal((2, 0))
        np.testing.assert_array_equal(marginal.mean, [2.0, 0.0])
        np.testing.assert_array_equal(marginal.cov, np.diag([3.0, 1.0]))


class TestChiSquare:
    @pytest.mark.parametrize("q", [0.0, 0.1, 1.0, 5.0, 30.0])
    def test_two_degrees_closed_form(self, q):
        assert chi2_cdf(2, q) == pytest.approx(1.0 - math.exp(-q / 2.0), abs=1e-12)

    @pytest.mark.parametrize("d", [1, 2, 3, 5])
    def test_matches_scipy(self, d):
        for q in (0.2, 1.5, 7.0):
            assert chi2_cdf(d, q) == pytest.approx(stats.chi2.cdf(q, d), rel=1e-10)
            assert chi2_sf(d, q) == pytest.approx(stats.chi2.sf(q, d), rel=1e-10)

    def test_far_tail_is_positive(self):
        assert 0.0 < chi2_sf(2, 1400.0) < 1e-300

    @pytest.mark.parametrize("d,q", [(0, 1.0), (1.5, 1.0), (2, -1.0)])
    def test_rejects_bad_arguments(self, d, q):
        with pytest.raises(RejectedInputError):
            chi2_cdf(d, q)

    @pytest.mark.parametrize("K,ell", [(1, 0.0), (3, 2.5), (7, 10.0)])
    def test_noncentral_mean_matches_scipy(self, K, ell):
        expected = stats.chi2.mean(K) if ell == 0 else stats.ncx2.mean(K, ell)
        assert noncentral_chi2_mean(K, ell) == pytest.approx(expected)


class TestExpectedQuadraticCost:
    def test_isotropic_closed_form(self):
        belief = GaussianBelief(np.array([1.0, 2.0, 0.0]), 0.5 * np.eye(3))
        assert expected_quadratic_cost(belief, np.eye(3), np.zeros(3)) == pytest.approx(1.5 + 5.0)

    def test_agrees_with_trace_identity(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            belief = random_belief(rng)
            Q = random_spd(rng)
            x_tgt = rng.normal(size=4)
            assert expected_quadratic_cost(belief, Q, x_tgt) == pytest.approx(
                quadratic_cost_trace_identity(belief, Q, x_tgt), rel=1e-8
            )

    def test_singular_covariance_uses_trace_identity(self):
        rng = np.random.default_rng(8)
        belief = random_belief(rng, rank=2)
        Q = random_spd(rng)
        assert expected_quadratic_cost(belief, Q, np.zeros(4)) == pytest.approx(
            quadratic_cost_trace_identity(belief, Q, np.zeros(4)), rel=1e-10
        )

    def test_point_mass(self):
        belief = GaussianBelief(np.array([3.0, 4.0]), np.zeros((2, 2)))
        assert expected_quadratic_cost(belief, np.eye(2), np.zeros(2)) == pytest.approx(25.0)

    def test_monte_carlo(self):
        rng = np.random.default_rng(9)
        belief = random_belief(rng)
        Q = random_spd(rng)
        x = rng.multivariate_normal(belief.mean, belief.cov, size=400_000)
        d = x - 0.3
        values = np.einsum("ni,ij,nj->n", d, Q, d)
        exact = expected_quadratic_cost(belief, Q, np.full(4, 0.3))
        assert abs(values.mean() - exact) <= 4.0 * values.std() / math.sqrt(len(values))

    def test_rejects_indefinite_weight(self):
        belief = GaussianBelief(np.zeros(2), np.eye(2))
        with pytest.raises(RejectedInputError):
            expected_quadratic_cost(belief, np.diag([1.0, 0.0]), np.zeros(2))


class TestCollisionProbability:
    def test_point_mass_at_vertex(self):
        belief = GaussianBelief(np.array([1.0, 1.0, 0.0, 0.0]), np.zeros((4, 4)))
        assert collision_probability(belief, np.array([1.0, 1.0]), (0, 1)) == 1.0
        assert collision_probability(belief, np.array([2.0, 1.0]), (0, 1)) == 0.0

    def test_vertex_at_mean_is_certain(self):
        belief = GaussianBelief(np.zeros(2), np.eye(2))
        assert collision_probability(belief, np.zeros(2), (0, 1)) == pytest.approx(1.0)

    def test_isotropic_closed_form(self):
        belief = GaussianBelief(np.zeros(2), 4.0 * np.eye(2))
        # quadratic form 25 / 4
        assert collision_probability(belief, np.array([3.0, 4.0]), (0, 1)) == pytest.approx(math.exp(-25.0 / 8.0))

    def test_uses_marginal_of_projection(self):
        cov = np.diag([1.0, 1.0, 0.0, 0.0])
        belief = GaussianBelief(np.zeros(4), cov)
        assert collision_probability(belief, np.array([1.0, 0.0]), (0, 1)) == pytest.approx(math.exp(-0.5))

    def test_monte_carlo(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            belief = random_belief(rng, n=2)
            c_star = belief.mean + rng.normal(scale=1.5, size=2)
            p = collision_probability(belief, c_star, (0, 1))
            x = rng.multivariate_normal(belief.mean, belief.cov, size=200_000)
            inv = np.linalg.inv(belief.cov)
            threshold = (c_star - belief.mean) @ inv @ (c_star - belief.mean)
            d = x - belief.mean
            hits = np.einsum("ni,ij,nj->n", d, inv, d) >= threshold
            stderr = math.sqrt(max(p * (1.0 - p), 1e-6) / len(x))
            assert abs(hits.mean() - p) <= 4.0 * stderr + 1e-4


class TestExpectedTotalCost:
    def test_zero_offset_is_pure_covariance(self):
        model = make_double_integrator(-0.5, horizon=10)
        spec = CostSpec(Q=np.eye(4), Q_T=np.eye(4), x_tgt=np.zeros(4), dt=0.1, lam=1.0)
        traj = propagate_moments(model, np.zeros((10, 2)), np.zeros(4))
        traces = [np.trace(traj[t].cov) for t in range(11)]
        expected = 0.1 * sum(traces[:10]) + traces[10]
        assert expected_total_cost(model, spec, np.zeros((10, 2)), np.zeros(4)) == pytest.approx(expected)

    def test_indicator_is_charged(self):
        model = make_double_integrator(0.0, horizon=20)
        obstacle = ConvexObstacle.box((3.0, 3.0), (5.0, 5.0), margin=0.2)
        x0 = np.array([6.0, 6.0, 0.0, 0.0])
        common = dict(Q=np.eye(4), Q_T=np.eye(4), x_tgt=x0, dt=0.1, lam=10.0, omega_c=100.0, obstacles=(obstacle,))
        charged = expected_cost_breakdown(model, CostSpec(**common), np.zeros((20, 2)), x0)
        skipped = expected_cost_breakdown(model, CostSpec(**common, analytic_indicator=False), np.zeros((20, 2)), x0)
        assert not skipped.indicator.any()
        # the point mass at t = 0 never touches the obstacle
        assert charged.indicator[0] == 0.0
        assert np.all(charged.indicator >= 0.0)
        assert charged.indicator[-1] > 0.1
        assert charged.total > skipped.total
        np.testing.assert_allclose(charged.quadratic, skipped.quadratic)

    def test_diffusion_gain_raises_cost(self):
        model = make_double_integrator(0.0, horizon=10)
        spec = CostSpec(Q=np.eye(4), Q_T=np.eye(4), x_tgt=np.zeros(4), dt=0.1, lam=1.0)
        folded = expected_total_cost(model, spec, np.zeros((10, 2)), np.zeros(4))
        diffusion = expected_total_cost(model, spec, np.zeros((10, 2)), np.zeros(4), noise_gain=1.0 / math.sqrt(0.1))
        assert diffusion == pytest.approx(10.0 * folded)


@pytest.mark.slow
def test_expected_quadratic_cost_monte_carlo_grid():
    rng = np.random.default_rng(99)
    for _ in range(20):
        n = int(rng.integers(1, 5))
        rank = int(rng.integers(1, n + 1))
        belief = random_belief(rng, n=n, rank=rank)
        Q = random_spd(rng, n)
        x_tgt = rng.normal(size=n)
        x = rng.multivariate_normal(belief.mean, belief.cov, size=1_000_000)
        d = x - x_tgt
        sampled = np.einsum("ni,ij,nj->n", d, Q, d).mean()
        assert expected_quadratic_cost(belief, Q, x_tgt) == pytest.approx(sampled, rel=0.01)


class TestWorkedExamples:
    def test_unit_offset_unit_covariance(self):
        belief = GaussianBelief(np.array([1.0, 0.0]), np.eye(2))
        assert expected_quadratic_cost(belief, np.eye(2), np.zeros(2)) == pytest.approx(3.0)

    def test_chi2_quantiles(self):
        assert chi2_cdf(2, 2.0 * math.log(2.0)) == pytest.approx(0.5)
        assert chi2_cdf(1, 3.841459) == pytest.approx(0.95, abs=1e-6)

    def test_two_step_random_walk(self):
        model = LtvModel.time_invariant(np.eye(2), np.eye(2), horizon=2)
        spec = CostSpec(Q=np.eye(2), Q_T=np.eye(2), x_tgt=np.zeros(2), dt=1.0, lam=1.0)
        assert expected_total_cost(model, spec, np.zeros((2, 2)), np.zeros(2)) == pytest.approx(6.0)
