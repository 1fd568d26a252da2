import logging

import numpy as np
import pytest

from conftest import random_exostates
from l2halo import _kernels
from l2halo.dynamics import PhysicalConstants
from l2halo.exosystem import (
    build_matrices,
    exo_init,
    exo_propagate,
    reference_accel,
    reference_nu,
    steady_state_pi,
)
from l2halo.planner import (
    A_KIN,
    PlannerModel,
    PlanningError,
    admissibility_gap,
    gamma_residual,
    half_step,
    plan_horizon,
    planner_feedback,
    refine_controls,
)

OFFSET = np.array([1e-2, -1e-2, 5e-3, 0.0, 0.0, 0.0])


@pytest.fixture(scope="module")
def pm(mats, consts, delta_bar):
    return PlannerModel(mats, consts, 2 * delta_bar)


def _errors(plan, q0, w0, m):
    out = [np.linalg.norm(q0 - steady_state_pi(w0, m))]
    for k in range(len(plan) // 2):
        out.append(np.linalg.norm(plan.states[2 * k + 1] - steady_state_pi(exo_propagate(w0, (k + 1) * plan.delta, m), m)))
    return np.array(out)


class TestModel:
    def test_kinematic_matrix(self):
        assert np.array_equal(A_KIN[:3, 3:], np.eye(3))
        assert np.count_nonzero(A_KIN) == 3

    def test_field_structure(self, pm, mats, w0):
        q = steady_state_pi(w0, mats) + OFFSET
        f = pm.field(q, w0, np.array([0.1, 0.2, 0.3]))
        np.testing.assert_array_equal(f[:3], q[3:])
        np.testing.assert_allclose(f[3:], reference_accel(w0, mats) + gamma_residual(q, w0, pm, pm.c) + [0.1, 0.2, 0.3],
                                   atol=1e-15)

    def test_field_jacobian_fd(self, pm, mats, w0):
        q = steady_state_pi(w0, mats) + OFFSET
        h = 1e-7
        fd = np.column_stack([(pm.field(q + h * e, w0) - pm.field(q - h * e, w0)) / (2 * h) for e in np.eye(6)])
        np.testing.assert_allclose(pm.jacobian(q, w0), fd, atol=1e-6)

    def test_input_matrix_shape_and_rank(self, pm, mats, rng):
        for w in random_exostates(rng, 10):
            g = pm.g_tilde_delta(steady_state_pi(w, mats), w)
            assert g.shape == (6, 6)
            assert np.linalg.cond(g) < 1e6


class TestGamma:
    def test_vanishes_on_circular_orbit(self, orbit, delta_bar, rng):
        c0 = PhysicalConstants(ecc=0.0)
        m0 = build_matrices(orbit, c0)
        pm0 = PlannerModel(m0, c0, 2 * delta_bar)
        for w in random_exostates(rng, 20):
            assert np.max(np.abs(gamma_residual(steady_state_pi(w, m0), w, pm0, c0))) <= 1e-10

    def test_bounded_on_orbit(self, pm, mats, w0):
        # max over the orbit frozen from a scan (0.1991 at the default eccentricity)
        scan = [np.linalg.norm(gamma_residual(steady_state_pi(exo_propagate(w0, t, mats), mats),
                                              exo_propagate(w0, t, mats), pm, pm.c)) for t in np.linspace(0, 7, 200)]
        assert max(scan) <= 0.21

    def test_linear_in_eccentricity(self, orbit, delta_bar, w0):
        vals = []
        for e in (0.0549, 0.1098):
            c = PhysicalConstants(ecc=e)
            m = build_matrices(orbit, c)
            w = exo_propagate(w0, 0.4, m)
            vals.append(np.linalg.norm(gamma_residual(steady_state_pi(w, m), w, PlannerModel(m, c, 2 * delta_bar), c)))
        assert vals[1] / vals[0] == pytest.approx(2.0, abs=0.1)

    def test_kernel_matches_reference(self, pm, mats, rng):
        out = np.empty(6)
        for w in random_exostates(rng, 10):
            q = steady_state_pi(w, mats) + rng.normal(scale=1e-2, size=6)
            _kernels.planner_field(q, w, np.zeros(3), mats.t_nu, mats.t_xi, mats.center, mats.omega_freq, pm.c.mu, out)
            np.testing.assert_allclose(out, pm.field(q, w), atol=1e-13)


class TestFeedback:
    def test_design_contract(self, pm, mats, gains, rng):
        for w in random_exostates(rng, 10):
            q = steady_state_pi(w, mats) + rng.normal(scale=1e-2, size=6)
            ubar = np.concatenate(planner_feedback(q, w, gains, pm.delta, pm))
            lhs = pm.design_step(q, w, ubar) - steady_state_pi(exo_propagate(w, pm.delta, mats), mats)
            rhs = (np.eye(6) + pm.delta_bar * gains.a_d) @ (q - steady_state_pi(w, mats))
            assert np.max(np.abs(lhs - rhs)) <= 1e-12

    def test_singular_input_matrix(self, pm, mats, gains, w0, monkeypatch):
        monkeypatch.setattr(PlannerModel, "g_tilde_delta", lambda self, q, w: np.zeros((6, 6)))
        with pytest.raises(np.linalg.LinAlgError):
            planner_feedback(steady_state_pi(w0, mats), w0, gains, pm.delta, pm)
        with pytest.raises(PlanningError) as info:
            plan_horizon(steady_state_pi(w0, mats), w0, 3, pm.delta, pm, gains)
        assert info.value.step == 0

    def test_refinement_hits_exact_target(self, pm, mats, gains, w0):
        q = steady_state_pi(w0, mats) + OFFSET
        ubar = np.concatenate(planner_feedback(q, w0, gains, pm.delta, pm))
        ubar, miss = refine_controls(q, w0, ubar, gains, pm)
        assert miss <= 1e-12
        q2 = half_step(half_step(q, w0, ubar[:3], pm), exo_propagate(w0, pm.delta_bar, mats), ubar[3:], pm)
        target = steady_state_pi(exo_propagate(w0, pm.delta, mats), mats) + 0.5 * (q - steady_state_pi(w0, mats))
        assert np.max(np.abs(q2 - target)) <= 1e-12


class TestHorizon:
    def test_cardinality(self, pm, mats, gains, w0):
        plan = plan_horizon(steady_state_pi(w0, mats), w0, 1, pm.delta, pm, gains)
        assert len(plan) == 2 and plan.positions.shape == (2, 3) and plan.controls.shape == (1, 6)

    def test_rejects_empty_horizon(self, pm, mats, gains, w0):
        with pytest.raises(ValueError):
            plan_horizon(steady_state_pi(w0, mats), w0, 0, pm.delta, pm, gains)

    def test_sample_times(self, pm, mats, gains, w0):
        plan = plan_horizon(steady_state_pi(w0, mats), w0, 3, pm.delta, pm, gains, t0=1.0)
        np.testing.assert_allclose(plan.times, 1.0 + pm.delta_bar * np.arange(1, 7), rtol=1e-15)

    def test_circular_orbit_is_invariant(self, orbit, delta_bar, gains):
        c0 = PhysicalConstants(ecc=0.0)
        m0 = build_matrices(orbit, c0)
        pm0 = PlannerModel(m0, c0, 2 * delta_bar)
        w = exo_init(orbit)
        plan = plan_horizon(steady_state_pi(w, m0), w, 15, pm0.delta, pm0, gains)
        gap = max(np.linalg.norm(plan.positions[j] - reference_nu(exo_propagate(w, (j + 1) * delta_bar, m0), m0))
                  for j in range(len(plan)))
        assert gap <= 1e-9

    def test_literal_design_drift_is_second_order(self, orbit, delta_bar, gains):
        c0 = PhysicalConstants(ecc=0.0)
        m0 = build_matrices(orbit, c0)
        w = exo_init(orbit)
        drifts = []
        for db in (delta_bar, 0.5 * delta_bar):
            pm0 = PlannerModel(m0, c0, 2 * db, refine=False)
            plan = plan_horizon(steady_state_pi(w, m0), w, 1, pm0.delta, pm0, gains)
            drifts.append(np.linalg.norm(plan.states[1] - steady_state_pi(exo_propagate(w, 2 * db, m0), m0)))
        # the two-Euler-step design model leaves an O(delta^2) miss per period
        assert drifts[0] / drifts[1] == pytest.approx(4.0, rel=0.05)

    def test_geometric_decay(self, pm, mats, gains, w0):
        q0 = steady_state_pi(w0, mats) + OFFSET
        errs = _errors(plan_horizon(q0, w0, 15, pm.delta, pm, gains), q0, w0, mats)
        assert np.max(errs[1:] / errs[:-1]) <= 0.5 + 1e-6
        k = np.arange(len(errs))
        assert np.all(errs <= 0.5**k * errs[0] + 1e-12)

    def test_bounded_by_initial_error(self, pm, mats, gains, w0):
        # at planning instants; mid-period samples carry the fast corrective velocity
        q0 = steady_state_pi(w0, mats) + OFFSET
        errs = _errors(plan_horizon(q0, w0, 15, pm.delta, pm, gains), q0, w0, mats)
        assert errs[1:].max() <= errs[0]

    def test_deterministic(self, pm, mats, gains, w0):
        q0 = steady_state_pi(w0, mats) + OFFSET
        a = plan_horizon(q0, w0, 5, pm.delta, pm, gains)
        b = plan_horizon(q0, w0, 5, pm.delta, pm, gains)
        assert a.states.tobytes() == b.states.tobytes()

    def test_recursion_residual(self, pm, mats, gains, w0):
        q0 = steady_state_pi(w0, mats) + OFFSET
        plan = plan_horizon(q0, w0, 6, pm.delta, pm, gains)
        q, w = q0, w0
        worst = 0.0
        for j in range(len(plan)):
            q = half_step(q if j == 0 else plan.states[j - 1], w, plan.controls[j // 2, 3 * (j % 2):3 * (j % 2) + 3], pm)
            w = exo_propagate(w, pm.delta_bar, mats)
            worst = max(worst, np.max(np.abs(q - plan.states[j])))
        assert worst <= 1e-12

    def test_horizon_doubling(self, pm, mats, gains, w0):
        q0 = steady_state_pi(w0, mats) + OFFSET
        full = plan_horizon(q0, w0, 8, pm.delta, pm, gains)
        first = plan_horizon(q0, w0, 4, pm.delta, pm, gains)
        second = plan_horizon(first.states[-1], exo_propagate(w0, 4 * pm.delta, mats), 4, pm.delta, pm, gains)
        np.testing.assert_allclose(full.states, np.vstack([first.states, second.states]), atol=1e-12)

    def test_admissibility(self, pm, mats, gains, w0):
        q0 = steady_state_pi(w0, mats) + OFFSET
        plan = plan_horizon(q0, w0, 15, pm.delta, pm, gains)
        assert np.all(np.isfinite(plan.states))
        assert admissibility_gap(plan, w0, pm) <= pm.envelope

    def test_envelope_warning(self, mats, consts, gains, w0, caplog):
        tight = PlannerModel(mats, consts, 2 * consts.hours_to_nd(0.65), envelope=1e-4)
        q0 = steady_state_pi(w0, mats) + OFFSET
        with caplog.at_level(logging.WARNING, logger="l2halo.planner"):
            plan_horizon(q0, w0, 2, tight.delta, tight, gains)
        assert any("envelope" in r.message for r in caplog.records)
