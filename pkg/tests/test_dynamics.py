import math

import numpy as np
import pytest

from dynamics_service.models import (
    NARROW_STEERING,
    WIDE_STEERING,
    DeltaMode,
    LtvModel,
    SimpleCar,
    make_double_integrator,
    noise_gain,
    step_ltv,
    step_simple_car,
)
from dynamics_service.rollout import CHUNK_SIZE, sample_rollout, sample_rollouts
from dynamics_service.streams import actuation_noise, derive_seed, noise_block, noise_blocks
from errors import RejectedInputError


class TestStepLtv:
    def test_identity_system_adds_control_and_noise(self):
        model = LtvModel.time_invariant(np.eye(2), np.eye(2), horizon=3)
        out = step_ltv(model, 0, np.array([1.0, 2.0]), np.array([0.5, 0.0]), np.array([0.0, -1.0]))
        np.testing.assert_array_equal(out, [1.5, 1.0])

    def test_batch_axis(self):
        model = make_double_integrator(0.0, horizon=2)
        x = np.zeros((5, 4))
        delta = np.ones((5, 2))
        out = model.step(0, x, np.zeros(2), delta)
        assert out.shape == (5, 4)
        np.testing.assert_allclose(out[:, 2:], 0.1)

    def test_step_index_outside_horizon(self):
        model = make_double_integrator(0.0, horizon=2)
        with pytest.raises(RejectedInputError):
            step_ltv(model, 2, np.zeros(4), np.zeros(2), np.zeros(2))

    def test_dimension_mismatch(self):
        model = make_double_integrator(0.0, horizon=2)
        with pytest.raises(RejectedInputError):
            step_ltv(model, 0, np.zeros(3), np.zeros(2), np.zeros(2))

    def test_time_varying_matrices_are_indexed(self):
        A = np.stack([np.eye(1), 2.0 * np.eye(1)])
        model = LtvModel(horizon=2, A=A, B=np.ones((2, 1, 1)))
        x1 = model.step(0, np.array([1.0]), np.zeros(1), np.zeros(1))
        x2 = model.step(1, x1, np.zeros(1), np.zeros(1))
        assert x2[0] == 2.0


class TestDoubleIntegrator:
    @pytest.mark.parametrize("a", [-0.5, 0.0, 0.5])
    def test_velocity_damping(self, a):
        model = make_double_integrator(a)
        assert model.A[0, 2, 2] == 1.0 + a
        assert model.A[0, 0, 2] == 0.1

    @pytest.mark.parametrize("a", [-0.6, 0.51])
    def test_rejects_out_of_range(self, a):
        with pytest.raises(RejectedInputError):
            make_double_integrator(a)

    def test_with_horizon(self):
        model = make_double_integrator(0.1, horizon=3).with_horizon(7)
        assert model.horizon == 7
        np.testing.assert_array_equal(model.A[6], make_double_integrator(0.1).A[0])


class TestSimpleCar:
    def test_straight_line(self):
        out = step_simple_car(np.zeros(4), np.array([1.0, 0.0]), np.zeros(2), 0.5, 0.1, NARROW_STEERING)
        np.testing.assert_allclose(out, [0.1, 0.0, 0.0, 0.0])

    def test_steering_is_saturated(self):
        out = step_simple_car(np.zeros(4), np.array([0.0, 100.0]), np.zeros(2), 0.5, 0.1, NARROW_STEERING)
        assert out[3] == pytest.approx(math.pi / 12)

    def test_wide_limits_avoid_tan_singularity(self):
        car = SimpleCar(steer_limits=WIDE_STEERING)
        out = car.step(0, np.zeros(4), np.array([0.0, -1e6]), np.zeros(2))
        assert out[3] == pytest.approx(-math.pi / 2 + 0.01)
        assert np.isfinite(np.tan(out[3]))

    def test_noise_perturbs_both_inputs(self):
        car = SimpleCar()
        quiet = car.step(0, np.zeros(4), np.array([1.0, 0.0]), np.zeros(2))
        noisy = car.step(0, np.zeros(4), np.array([1.0, 0.0]), np.array([1.0, 0.5]))
        assert noisy[0] == pytest.approx(2 * quiet[0])
        assert noisy[3] == pytest.approx(0.05)

    def test_rejects_bad_wheelbase(self):
        with pytest.raises(RejectedInputError):
            SimpleCar(wheelbase=0.0)


class TestNoiseGain:
    def test_folded(self):
        assert noise_gain(DeltaMode.FOLDED, 0.1) == 1.0

    def test_diffusion(self):
        assert noise_gain("diffusion", 0.04) == pytest.approx(5.0)


class TestStreams:
    def test_noise_block_is_reproducible(self):
        np.testing.assert_array_equal(noise_block(42, 7, 10, 2), noise_block(42, 7, 10, 2))

    def test_indices_are_independent_streams(self):
        assert not np.array_equal(noise_block(42, 0, 10, 2), noise_block(42, 1, 10, 2))

    def test_blocks_match_single_draws(self):
        blocks = noise_blocks(3, [5, 2, 9], 4, 2)
        np.testing.assert_array_equal(blocks[1], noise_block(3, 2, 4, 2))

    def test_derive_seed(self):
        assert derive_seed(1, 5) == derive_seed(1, 5)
        assert derive_seed(1, 5) != derive_seed(1, 6)
        assert 0 <= derive_seed(2**64 - 1, 0) < 2**64

    def test_actuation_noise_reproducible(self):
        np.testing.assert_array_equal(actuation_noise(9, 3, 2), actuation_noise(9, 3, 2))
        assert actuation_noise(9, 3, 2).shape == (2,)


class TestSampleRollouts:
    def test_thread_count_does_not_change_results(self):
        model = make_double_integrator(0.0, horizon=5)
        nominal = np.zeros((5, 2))
        n = CHUNK_SIZE + 300
        s1, d1 = sample_rollouts(model, nominal, np.zeros(4), 11, n, threads=1)
        s4, d4 = sample_rollouts(model, nominal, np.zeros(4), 11, n, threads=4)
        np.testing.assert_array_equal(s1, s4)
        np.testing.assert_array_equal(d1, d4)

    def test_single_rollout_matches_batch_row(self):
        model = make_double_integrator(-0.1, horizon=6)
        nominal = np.full((6, 2), 0.3)
        states, noises = sample_rollouts(model, nominal, np.ones(4), 5, 20)
        one = sample_rollout(model, nominal, np.ones(4), 5, 13)
        np.testing.assert_array_equal(one.states, states[13])
        np.testing.assert_array_equal(one.noises, noises[13])
        assert one.horizon == 6

    def test_zero_noise_mode(self):
        model = make_double_integrator(0.0, horizon=4)
        states, noises = sample_rollouts(model, np.ones((4, 2)), np.zeros(4), 1, 8, noise_enabled=False)
        assert not noises.any()
        np.testing.assert_array_equal(states, np.broadcast_to(states[0], states.shape))

    def test_noise_gain_scales_perturbation(self):
        model = make_double_integrator(0.0, horizon=3)
        s1, _ = sample_rollouts(model, np.zeros((3, 2)), np.zeros(4), 1, 4)
        s2, _ = sample_rollouts(model, np.zeros((3, 2)), np.zeros(4), 1, 4, noise_gain=2.0)
        np.testing.assert_allclose(s2, 2.0 * s1)

    def test_rejects_wrong_nominal_length(self):
        model = make_double_integrator(0.0, horizon=3)
        with pytest.raises(RejectedInputError):
            sample_rollouts(model, np.zeros((4, 2)), np.zeros(4), 1, 4)
