"""
Multi-rate reference governor.

The planner works on the simplified closed loop obtained by applying the
regulator feedforward with zero feedback gain: in error form the
acceleration is ``nu_ddot(omega) + Gamma(q, omega) + u``, where ``Gamma``
vanishes on the quasi-Halo orbit up to the eccentricity residual. A
multi-rate feedback on the two-half-step design model of this loop
contracts the error by ``I + (delta/2) A_d`` per planning period; the
resulting trajectory, sampled every half period, is the reference handed to
the MPC.
"""

import logging
from dataclasses import dataclass

import numpy as np

from l2halo import _kernels
from l2halo.dynamics import B_MAT, C_MAT, GUARD_RADIUS, SingularityError, jacobian_q, perturbation_jacobian
from l2halo.exosystem import (
    exo_propagate,
    perturbation_xi,
    reference_accel,
    reference_nu,
    reference_velocity,
    steady_state_pi,
)

log = logging.getLogger(__name__)

A_KIN = np.block([[np.zeros((3, 3)), np.eye(3)], [np.zeros((3, 3)), np.zeros((3, 3))]])


class PlanningError(RuntimeError):
    """Raised when the planner input matrix is singular at some step."""

    def __init__(self, step, msg):
        super().__init__(f"planning step {step}: {msg}")
        self.step = step


def _grav(rho):
    r = np.linalg.norm(rho)
    if r <= GUARD_RADIUS:
        raise SingularityError(f"planner state within {r:.3g} of a primary")
    return rho / r**3


@dataclass(frozen=True)
class PlannerModel:
    """Simplified closed loop used by the planner.

    Holds the exosystem matrices, the physical constants and the planning
    period ``delta``; ``envelope`` bounds the admissible distance between
    planned positions and the quasi-Halo reference. With ``refine`` the
    planned controls are corrected so that the exact two-half-step flow, not
    only the first-order design model, meets the contraction target.
    """

    m: object
    c: object
    delta: float
    substeps: int = 16
    envelope: float = 0.5
    refine: bool = True
    refine_tol: float = 1e-13
    refine_iter: int = 20

    @property
    def delta_bar(self):
        return 0.5 * self.delta

    def gamma(self, q, w):
        return gamma_residual(q, w, self, self.c)

    def field(self, q, w, u=None):
        """``f~(q, omega) + B u`` in absolute coordinates."""
        q = np.asarray(q, dtype=float)
        acc = reference_accel(w, self.m) + self.gamma(q, w)
        if u is not None:
            acc = acc + u
        return np.concatenate([q[3:], acc])

    def jacobian(self, q, w):
        """``A + dGamma/dq`` (``Gamma`` shares the drift's q-dependence)."""
        return jacobian_q(q, perturbation_xi(w, self.m), self.c.mu)

    def f_tilde_delta(self, q, w):
        hb = self.delta_bar
        w1 = exo_propagate(w, hb, self.m)
        f0 = self.field(q, w)
        return f0 + self.field(q, w1) + hb * self.jacobian(q, w1) @ f0

    def g_tilde_delta(self, q, w):
        hb = self.delta_bar
        w1 = exo_propagate(w, hb, self.m)
        return np.hstack([(np.eye(6) + hb * self.jacobian(q, w1)) @ B_MAT, B_MAT])

    def design_step(self, q, w, ubar):
        """Design-model map ``q + (delta/2)(f~^delta + g~^delta ubar)``."""
        return q + self.delta_bar * (self.f_tilde_delta(q, w) + self.g_tilde_delta(q, w) @ ubar)


def gamma_residual(q, w, pm, c):
    """Residual acceleration ``Gamma(q, omega)`` of the simplified loop.

    Differences of the rotating-frame terms and of the two gravity pulls
    between the state and the reference, the eccentricity terms at the state,
    minus the regulator's first-order eccentricity compensation. Zero on the
    orbit when ``e = 0``.
    """
    m, mu = pm.m, c.mu
    q = np.asarray(q, dtype=float)
    p, v = q[:3], q[3:]
    nu = reference_nu(w, m)
    nu_dot = reference_velocity(w, m)
    xi = perturbation_xi(w, m)
    d1 = np.array([-mu - xi[3] / (1.0 - mu), 0.0, 0.0])
    d2 = np.array([1.0 - mu + xi[3] / mu, 0.0, 0.0])
    mp = np.array([-p[0], -p[1], 0.0])
    nv = np.array([-v[1], v[0], 0.0])
    dp = p - nu
    dv = v - nu_dot
    lin = np.array([dp[0], dp[1], 0.0]) + 2.0 * np.array([dv[1], -dv[0], 0.0])
    ecc = -(2.0 * mp + 2.0 * nv) * xi[0] - mp * xi[1] - nv * xi[2]
    grav = (1.0 - mu) * (_grav(p - d1) - _grav(nu - d1)) + mu * (_grav(p - d2) - _grav(nu - d2))
    comp = perturbation_jacobian(steady_state_pi(w, m), mu)[3:] @ xi
    return lin + ecc - grav - comp


def planner_feedback(q, w, g, delta, pm):
    """Planned multi-rate controls ``(u1, u2)`` for one planning period.

    On the design model the error ``q - pi(omega)`` is mapped to
    ``(I + (delta/2) A_d)(q - pi(omega))``.
    """
    q = np.asarray(q, dtype=float)
    hb = 0.5 * delta
    pi_now = steady_state_pi(w, pm.m)
    pi_next = steady_state_pi(exo_propagate(w, delta, pm.m), pm.m)
    gmat = pm.g_tilde_delta(q, w)
    rhs = g.a_d @ (q - pi_now) + (pi_next - pi_now) / hb - pm.f_tilde_delta(q, w)
    cond = np.linalg.cond(gmat)
    if not np.isfinite(cond) or cond > 1e12:
        raise np.linalg.LinAlgError(f"g~^delta is singular (cond={cond:.3g})")
    ubar = np.linalg.solve(gmat, rhs)
    return ubar[:3], ubar[3:]


def half_step(q, w, u, pm):
    """Exact-flow map of the simplified loop over ``delta/2`` with ``u`` held.

    RK4 with ``pm.substeps`` steps; the exosystem advances in closed form
    inside every stage.
    """
    m = pm.m
    qn, rmin = _kernels.planner_flow(
        np.ascontiguousarray(q, dtype=float), np.ascontiguousarray(w, dtype=float),
        np.ascontiguousarray(u, dtype=float), m.t_nu, m.t_xi, m.center, m.omega_freq, pm.c.mu,
        pm.delta_bar / pm.substeps, pm.substeps,
    )
    if not np.all(np.isfinite(qn)) or rmin <= GUARD_RADIUS:
        raise SingularityError("planner trajectory diverged or approached a primary")
    return qn


@dataclass(frozen=True)
class PlannedReference:
    """Planner output over ``n_hat_p`` planning periods.

    ``states[j]`` is the planned state at ``t0 + (j + 1) * delta/2``;
    ``controls[k]`` holds the six planned inputs of period ``k``.
    """

    t0: float
    delta: float
    states: np.ndarray
    controls: np.ndarray

    @property
    def positions(self):
        return self.states @ C_MAT.T

    @property
    def times(self):
        return self.t0 + 0.5 * self.delta * np.arange(1, len(self.states) + 1)

    def __len__(self):
        return len(self.states)


def refine_controls(q, w, ubar, g, pm):
    """Chord-Newton correction of ``ubar`` on the exact simplified flow.

    Solves ``flow(q, ubar) = pi(e^{delta S} w) + (I + (delta/2) A_d)(q - pi(w))``
    using the design-model input matrix as a fixed Jacobian.

    Returns
    -------
    ubar : ndarray, shape (6,)
    residual : float
        Infinity norm of the remaining miss.
    """
    hb = pm.delta_bar
    w1 = exo_propagate(w, hb, pm.m)
    pi_now = steady_state_pi(w, pm.m)
    target = steady_state_pi(exo_propagate(w, pm.delta, pm.m), pm.m) + (np.eye(6) + hb * g.a_d) @ (q - pi_now)
    lu = np.linalg.inv(hb * pm.g_tilde_delta(q, w))
    ubar = np.array(ubar, dtype=float)
    miss = np.inf
    for _ in range(pm.refine_iter):
        q2 = half_step(half_step(q, w, ubar[:3], pm), w1, ubar[3:], pm)
        err = q2 - target
        miss = float(np.max(np.abs(err)))
        if miss <= pm.refine_tol * max(1.0, float(np.max(np.abs(target)))):
            break
        ubar = ubar - lu @ err
    return ubar, miss


def plan_horizon(q0, w0, n_hat_p, delta, pm, g, t0=0.0):
    """Propagate the simplified loop under :func:`planner_feedback`.

    Raises
    ------
    PlanningError
        If the planner input matrix is singular at some period.
    """
    if n_hat_p < 1:
        raise ValueError("n_hat_p must be at least 1")
    hb = 0.5 * delta
    q = np.asarray(q0, dtype=float).copy()
    w = np.asarray(w0, dtype=float).copy()
    states = np.empty((2 * n_hat_p, 6))
    controls = np.empty((n_hat_p, 6))
    for k in range(n_hat_p):
        try:
            u1, u2 = planner_feedback(q, w, g, delta, pm)
            if pm.refine:
                ubar, _ = refine_controls(q, w, np.concatenate([u1, u2]), g, pm)
                u1, u2 = ubar[:3], ubar[3:]
        except np.linalg.LinAlgError as exc:
            raise PlanningError(k, str(exc)) from exc
        controls[k, :3] = u1
        controls[k, 3:] = u2
        q = half_step(q, w, u1, pm)
        w = exo_propagate(w, hb, pm.m)
        states[2 * k] = q
        q = half_step(q, w, u2, pm)
        w = exo_propagate(w, hb, pm.m)
        states[2 * k + 1] = q
    plan = PlannedReference(t0=t0, delta=delta, states=states, controls=controls)
    worst = admissibility_gap(plan, w0, pm)
    if worst > pm.envelope:
        log.warning("planned reference leaves the %.3g envelope (max distance %.3g)", pm.envelope, worst)
    return plan


def admissibility_gap(plan, w0, pm):
    """Largest distance between planned positions and the quasi-Halo reference."""
    gaps = [
        np.linalg.norm(plan.positions[j] - reference_nu(exo_propagate(w0, 0.5 * plan.delta * (j + 1), pm.m), pm.m))
        for j in range(len(plan))
    ]
    return max(gaps)
