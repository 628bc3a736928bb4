import dataclasses
import math

import numpy as np
import pytest

from hfo import hybrid
from hfo.model import HybridFOModel, JumpPolicy, make_state, strict_initial_state
from hfo.robustness import (
    Perturbation,
    closeness,
    iota_magnitude,
    perturbed_model,
    robustness_sweep,
)
from conftest import s1_params


def s1_perturbation():
    return Perturbation(
        a_hat=np.array([[0.05]]),
        b_hat=np.array([[0.02]]),
        h_hat=np.array([[0.02]]),
        kappa_c=0.1,
        kappa_g=0.05,
        theta_g_comp=0.02,
        theta_c_min=0.02,
        theta_c_max=0.02,
    )


def run_s1(model, horizon=(5.0, 200), sample_dt=0.01, seed=1):
    params = s1_params()
    policy = JumpPolicy(tau_c_reset="min", case3_order="g1_first", seed=seed)
    zeta0 = strict_initial_state(params)
    return hybrid.simulate(model, zeta0, policy, horizon, sample_dt)


class TestIotaMagnitude:
    def test_zero_perturbation(self):
        state = make_state([1.0, -2.0], 0.5, 0.3, 0.5, 1.0, 0.25)
        assert iota_magnitude(Perturbation.zero(2, 1, 1), state) == 0.0

    def test_matrix_term_dominates(self):
        pert = Perturbation(0.1 * np.eye(2), np.zeros((2, 1)),
                            np.zeros((1, 1)))
        state = make_state([2.0, 0.0], 0.0, 0.0, 0.0, 1.0, 0.25)
        assert iota_magnitude(pert, state) == pytest.approx(0.2)

    def test_timer_offsets(self):
        pert = Perturbation(np.zeros((1, 1)), np.zeros((1, 1)),
                            np.zeros((1, 1)), theta_g_comp=0.01,
                            theta_c_min=0.01, theta_c_max=0.01)
        state = make_state(0.0, 0.0, 0.0, 0.0, 1.0, 0.25)
        assert iota_magnitude(pert, state) == pytest.approx(0.01)


class TestPerturbedModel:
    def test_zero_delta_bit_identical(self):
        params = s1_params()
        arc_nom = run_s1(HybridFOModel.nominal(params))
        arc_zero = run_s1(perturbed_model(params, s1_perturbation(), 0.0))
        assert len(arc_nom.segments) == len(arc_zero.segments)
        for a, b in zip(arc_nom.segments, arc_zero.segments):
            assert np.array_equal(a.matrix(), b.matrix())

    def test_slowed_control_timer(self):
        params = s1_params()
        pert = Perturbation(np.zeros((1, 1)), np.zeros((1, 1)),
                            np.zeros((1, 1)), kappa_c=0.5)
        arc = run_s1(perturbed_model(params, pert, 1.0), horizon=(2.5, 200))
        # gradient steps still fire every 0.25 s, but the input applies at
        # t = 2.0 instead of 1.0 (rate -0.5)
        g2_times = [j.time.t for j in arc.jumps if j.applied == "g2"]
        assert g2_times[0] == pytest.approx(2.0, abs=1e-9)

    def test_gain_error_diverges_after_first_sample(self):
        params = s1_params()
        pert = Perturbation(np.zeros((1, 1)), np.zeros((1, 1)),
                            np.array([[0.5]]))
        arc_nom = run_s1(HybridFOModel.nominal(params), horizon=(3.0, 200))
        arc_pert = run_s1(perturbed_model(params, pert, 1.0),
                          horizon=(3.0, 200))
        # x identical until the first input application at t = 1 (the gain
        # error reaches the optimizer iterate z earlier, at the first
        # gradient step, but not the plant)
        for j in (0, 1, 2, 3):
            a = arc_nom.segment_for(j)
            b = arc_pert.segment_for(j)
            np.testing.assert_array_equal(a.matrix()[:, 0], b.matrix()[:, 0])
        # in S1 the first applied input saturates at the box edge either way;
        # the corrupted samples steer the second period's iterates apart, so
        # x diverges once that input is applied (second sampling jump, j = 10)
        x_after = np.concatenate(
            [seg.matrix()[:, 0] for seg in arc_nom.segments if seg.j >= 10])
        x_after_pert = np.concatenate(
            [seg.matrix()[:, 0] for seg in arc_pert.segments if seg.j >= 10])
        assert np.max(np.abs(x_after - x_after_pert)) > 1e-3
        # sampled output differs from the first sampling jump onward
        g2_nom = next(j for j in arc_nom.jumps if j.applied == "g2")
        g2_pert = next(j for j in arc_pert.jumps if j.applied == "g2")
        assert abs(g2_nom.state_after.y_s[0]
                   - g2_pert.state_after.y_s[0]) > 0.1

    def test_invalid_scaled_rate_rejected(self):
        pert = Perturbation(np.zeros((1, 1)), np.zeros((1, 1)),
                            np.zeros((1, 1)), kappa_g=0.5)
        with pytest.raises(ValueError):
            perturbed_model(s1_params(), pert, 2.0)

    def test_negative_delta_rejected(self):
        with pytest.raises(ValueError):
            perturbed_model(s1_params(), s1_perturbation(), -0.1)


class TestCloseness:
    def test_identity(self):
        arc = run_s1(HybridFOModel.nominal(s1_params()))
        result = closeness(arc, arc, tau=4.0)
        assert result.epsilon == 0.0
        assert not result.truncated

    def test_constant_offset(self):
        arc = run_s1(HybridFOModel.nominal(s1_params()))
        shifted = dataclasses.replace(
            arc,
            segments=[
                dataclasses.replace(
                    seg,
                    states=[dataclasses.replace(s, x=s.x + 0.01)
                            for s in seg.states],
                )
                for seg in arc.segments
            ],
        )
        result = closeness(arc, shifted, tau=4.0)
        assert result.epsilon == pytest.approx(0.01, abs=1e-9)

    def test_symmetric(self):
        params = s1_params()
        arc1 = run_s1(HybridFOModel.nominal(params))
        arc2 = run_s1(perturbed_model(params, s1_perturbation(), 1e-2))
        e12 = closeness(arc1, arc2, tau=4.0).epsilon
        e21 = closeness(arc2, arc1, tau=4.0).epsilon
        assert e12 == pytest.approx(e21, abs=1e-12)

    def test_missing_jump_index_is_infinite(self):
        arc = run_s1(HybridFOModel.nominal(s1_params()))
        shorter = dataclasses.replace(arc, segments=arc.segments[:2])
        result = closeness(arc, shorter, tau=4.0)
        assert math.isinf(result.epsilon)
        assert result.truncated

    def test_truncation_reported(self):
        arc = run_s1(HybridFOModel.nominal(s1_params()), horizon=(2.0, 200))
        result = closeness(arc, arc, tau=100.0)
        assert result.truncated


class TestRobustnessSweep:
    def test_s1_trend(self):
        sweep = robustness_sweep(
            s1_params(), s1_perturbation(), [1e-1, 1e-2, 1e-3, 0.0],
            tau=6.0, policy=JumpPolicy(tau_c_reset="min", seed=1),
        )
        eps = sweep.epsilons()
        assert sweep.nonincreasing
        assert eps[-1] == 0.0  # delta = 0 reproduces the nominal arc
        assert eps[0] > eps[2] > 0.0
        assert all(math.isfinite(e) for e in eps[:3])

    def test_bounded_horizon_caveat(self):
        # a pure timer-rate error accumulates: epsilon grows with the horizon
        pert = Perturbation(np.zeros((1, 1)), np.zeros((1, 1)),
                            np.zeros((1, 1)), kappa_g=0.5)
        policy = JumpPolicy(tau_c_reset="min", seed=1)
        short = robustness_sweep(s1_params(), pert, [1.0], tau=3.0,
                                 policy=policy)
        long = robustness_sweep(s1_params(), pert, [1.0], tau=8.0,
                                policy=policy)
        assert long.rows[0].epsilon > short.rows[0].epsilon
