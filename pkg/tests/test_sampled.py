import numpy as np
import pytest
from scipy.linalg import expm

from l2halo.dynamics import C_MAT, B_MAT, SingularityError, jacobian_q, l2_equilibrium, linearize_at_l2, xi_series
from l2halo.sampled import (
    HoldSegment,
    SamplingConfig,
    XiMode,
    apply_segment,
    mr_map,
    plant_step,
    relative_degree_probe,
    sr_map,
    sr_map_sensitivity,
)

Z4 = np.zeros(4)


@pytest.fixture(scope="module")
def cfg(delta_bar):
    return SamplingConfig(2 * delta_bar)


@pytest.fixture(scope="module")
def q_near(consts):
    return l2_equilibrium(consts) + np.array([2e-3, -1e-3, 3e-3, 1e-3, 2e-3, -1e-3])


class TestConfig:
    def test_half_period(self):
        assert SamplingConfig(0.02).delta_bar == 0.01

    @pytest.mark.parametrize("kw", [{"delta": 0.0}, {"delta": 0.1, "substeps": 3}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            SamplingConfig(**kw)

    def test_hold_segment_duration(self):
        with pytest.raises(ValueError):
            HoldSegment(np.zeros(3), 0.0)


class TestSingleRate:
    def test_zero_duration_is_identity(self, cfg, consts, q_near):
        assert np.array_equal(sr_map(q_near, Z4, np.ones(3), 0.0, cfg, consts), q_near)

    def test_negative_duration_rejected(self, cfg, consts, q_near):
        with pytest.raises(ValueError):
            sr_map(q_near, Z4, np.zeros(3), -0.1, cfg, consts)

    def test_deterministic(self, cfg, consts, q_near, delta_bar):
        xi = xi_series(0.4, consts)
        a = sr_map(q_near, xi, [0.1, -0.2, 0.3], delta_bar, cfg, consts)
        b = sr_map(q_near, xi, [0.1, -0.2, 0.3], delta_bar, cfg, consts)
        assert a.tobytes() == b.tobytes()

    def test_linearized_oracle(self, cfg, consts, delta_bar):
        qs = l2_equilibrium(consts)
        a = linearize_at_l2(consts).a_matrix
        dq = np.array([1, -1, 1, 0.5, 0.5, -0.5])
        gaps = []
        for eps in (1e-4, 2e-4):
            out = sr_map(qs + eps * dq, Z4, np.zeros(3), delta_bar, cfg, consts)
            gaps.append(np.linalg.norm(out - qs - expm(a * delta_bar) @ (eps * dq)))
        assert gaps[1] / gaps[0] == pytest.approx(4.0, rel=0.05)
        assert gaps[0] <= 1e-6

    def test_fourth_order_convergence(self, consts, q_near):
        dt = 0.2
        ref = sr_map(q_near, Z4, [0.2, 0.1, -0.1], dt, SamplingConfig(2 * dt, 320), consts)
        e8 = np.linalg.norm(sr_map(q_near, Z4, [0.2, 0.1, -0.1], dt, SamplingConfig(2 * dt, 8), consts) - ref)
        e16 = np.linalg.norm(sr_map(q_near, Z4, [0.2, 0.1, -0.1], dt, SamplingConfig(2 * dt, 16), consts) - ref)
        assert e8 / e16 == pytest.approx(16.0, rel=0.15)

    def test_default_substeps_self_convergence(self, cfg, consts, q_near, delta_bar):
        fine = sr_map(q_near, Z4, np.zeros(3), delta_bar, SamplingConfig(cfg.delta, 160), consts)
        assert np.max(np.abs(sr_map(q_near, Z4, np.zeros(3), delta_bar, cfg, consts) - fine)) <= 1e-10

    def test_semigroup(self, cfg, consts, q_near):
        xi = xi_series(1.0, consts)
        u = np.array([0.05, -0.02, 0.01])
        for a, b in [(0.004, 0.006), (0.003, 0.003)]:
            lhs = sr_map(q_near, xi, u, a + b, cfg, consts)
            rhs = sr_map(sr_map(q_near, xi, u, a, cfg, consts), xi, u, b, cfg, consts)
            assert np.max(np.abs(lhs - rhs)) <= 1e-10

    def test_singularity_propagates(self, cfg, consts):
        q = np.array([1 - consts.mu + 1e-7, 0, 0, 0, 0, 0])
        with pytest.raises(SingularityError):
            sr_map(q, Z4, np.zeros(3), 0.01, cfg, consts)

    def test_sensitivity_matches_finite_differences(self, cfg, consts, q_near, delta_bar):
        xi = xi_series(0.2, consts)
        u = np.array([0.1, 0.0, -0.1])
        qn, phi, gam = sr_map_sensitivity(q_near, xi, u, delta_bar, cfg, consts)
        np.testing.assert_allclose(qn, sr_map(q_near, xi, u, delta_bar, cfg, consts), atol=1e-15)
        h = 1e-6
        fd_q = np.column_stack([(sr_map(q_near + h * e, xi, u, delta_bar, cfg, consts)
                                 - sr_map(q_near - h * e, xi, u, delta_bar, cfg, consts)) / (2 * h) for e in np.eye(6)])
        fd_u = np.column_stack([(sr_map(q_near, xi, u + h * e, delta_bar, cfg, consts)
                                 - sr_map(q_near, xi, u - h * e, delta_bar, cfg, consts)) / (2 * h) for e in np.eye(3)])
        np.testing.assert_allclose(phi, fd_q, atol=1e-8)
        np.testing.assert_allclose(gam, fd_u, atol=1e-8)


class TestMultiRate:
    def test_equal_holds(self, cfg, consts, q_near, delta_bar):
        xi = xi_series(0.0, consts)
        u = np.array([0.3, -0.1, 0.2])
        np.testing.assert_allclose(mr_map(q_near, xi, u, u, 2 * delta_bar, cfg, consts),
                                   sr_map(q_near, xi, u, 2 * delta_bar, cfg, consts), atol=1e-13)

    def test_small_period_limit(self, cfg, consts, q_near):
        out = mr_map(q_near, Z4, np.ones(3), -np.ones(3), 1e-9, cfg, consts)
        assert np.max(np.abs(out - q_near)) <= 1e-8

    def test_single_pass_with_switching_input(self, consts, q_near, delta_bar):
        # one RK4 pass whose input switches at the grid point half way through
        from l2halo import _kernels

        cfg = SamplingConfig(2 * delta_bar, 64)
        u1, u2 = np.array([0.2, 0.0, -0.1]), np.array([-0.3, 0.1, 0.0])
        n, h = 64, delta_bar / 64
        q = q_near.copy()
        for u in (u1, u2):
            for _ in range(n):
                q, _ = _kernels.rk4_frozen(q, Z4, u, np.zeros(3), consts.mu, h, 1)
        assert np.max(np.abs(mr_map(q_near, Z4, u1, u2, 2 * delta_bar, cfg, consts) - q)) <= 1e-13

    def test_rejects_nonpositive_period(self, cfg, consts, q_near):
        with pytest.raises(ValueError):
            mr_map(q_near, Z4, np.zeros(3), np.zeros(3), 0.0, cfg, consts)


class TestPlant:
    def test_modes_differ_with_eccentricity(self, cfg, consts, q_near, delta_bar):
        xi0 = xi_series(0.0, consts)
        seg_held = HoldSegment(np.zeros(3), delta_bar, XiMode.HELD)
        seg_exo = HoldSegment(np.zeros(3), delta_bar, XiMode.EXO_DRIVEN)
        held = apply_segment(q_near, 0.0, seg_held, xi0, cfg, consts, srp_on=False)
        exo = apply_segment(q_near, 0.0, seg_exo, xi0, cfg, consts, srp_on=False)
        assert np.max(np.abs(held - exo)) > 1e-9

    def test_plant_without_forcing_is_circular_flow(self, cfg, circ, q_near, delta_bar):
        out = plant_step(q_near, 3.0, np.array([0.1, 0, 0]), delta_bar, cfg, circ, ecc_on=False, srp_on=False)
        np.testing.assert_allclose(out, sr_map(q_near, Z4, [0.1, 0, 0], delta_bar, cfg, circ), atol=1e-15)

    def test_radiation_pressure_changes_trajectory(self, cfg, consts, q_near, delta_bar):
        on = plant_step(q_near, 0.0, np.zeros(3), delta_bar, cfg, consts, srp_on=True)
        off = plant_step(q_near, 0.0, np.zeros(3), delta_bar, cfg, consts, srp_on=False)
        dv = on[3:] - off[3:]
        assert dv[0] == pytest.approx(consts.srp_accel * delta_bar, rel=1e-2)

    def test_time_varying_xi_matches_fine_frozen_steps(self, consts, q_near, delta_bar):
        cfg = SamplingConfig(2 * delta_bar, 16)
        out = plant_step(q_near, 0.5, np.zeros(3), delta_bar, cfg, consts, srp_on=False)
        # frozen-xi composition on a very fine grid converges to the time-varying flow
        n = 400
        q = q_near.copy()
        h = delta_bar / n
        for i in range(n):
            q = sr_map(q, xi_series(0.5 + (i + 0.5) * h, consts), np.zeros(3), h, cfg, consts)
        assert np.max(np.abs(out - q)) <= 1e-9


class TestRelativeDegree:
    def test_continuous_probe_vanishes(self):
        assert np.array_equal(C_MAT @ B_MAT, np.zeros((3, 3)))

    def test_leading_term(self, cfg, consts, q_near, delta_bar):
        probe = relative_degree_probe(q_near, Z4, delta_bar, cfg, consts)
        lead = 0.5 * delta_bar**2 * C_MAT @ jacobian_q(q_near, Z4, consts.mu) @ B_MAT
        assert np.max(np.abs(probe - lead)) <= 0.05 * np.max(np.abs(lead))

    def test_quadratic_scaling(self, consts, q_near):
        cfg = SamplingConfig(0.02)
        big = relative_degree_probe(q_near, Z4, 0.01, cfg, consts)
        small = relative_degree_probe(q_near, Z4, 0.005, cfg, consts)
        assert np.linalg.norm(big) / np.linalg.norm(small) == pytest.approx(4.0, rel=0.02)

    def test_nonsingular(self, cfg, consts, q_near, delta_bar):
        probe = relative_degree_probe(q_near, Z4, delta_bar, cfg, consts)
        assert abs(np.linalg.det(probe)) > 0.5 * (0.5 * delta_bar**2) ** 3
