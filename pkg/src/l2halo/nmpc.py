"""
Box-constrained single-shooting tracking MPC.

The stage cost is ``||q_k - q_ref_k||_Q^2 + ||u_{k-1}||_R^2`` summed over the
horizon, with the prediction model stepping ``delta_bar`` at a time. The
problem is a bounded nonlinear least-squares problem; it is solved by
projected Gauss-Newton, each subproblem being a bounded linear least-squares
problem handed to :func:`scipy.optimize.lsq_linear`. The real-time-iteration
mode takes exactly one such step from a warm start.
"""

import enum
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import lsq_linear

from l2halo import _kernels

DEFAULT_Q = np.diag([10.0, 10.0, 10.0, 1.0, 1.0, 1.0])
# R must be small against Q for near-inversion tracking in normalized units
DEFAULT_R = 1e-3 * np.eye(3)


class SolveStatus(enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    RTI_SINGLE_STEP = "rti_single_step"


class NonFiniteCostError(FloatingPointError):
    """The cost at the initial iterate is not finite."""


class ErtbpPrediction:
    """Prediction model ``q+ = F^dbar(q, 0, u)`` on the circular problem."""

    def __init__(self, mu, delta_bar, substeps=16):
        self.mu = float(mu)
        self.delta_bar = float(delta_bar)
        self.substeps = int(substeps)

    def rollout(self, q0, useq, with_sens):
        h = self.delta_bar / self.substeps
        states, phis, gams, rmin = _kernels.rollout(
            np.ascontiguousarray(q0, dtype=float), np.ascontiguousarray(useq, dtype=float),
            self.mu, h, self.substeps, with_sens,
        )
        if rmin <= 1e-6:
            states[:] = np.nan
        return states, phis, gams


class LinearPrediction:
    """Linear prediction model ``q+ = A q + B u``; handy for closed-form checks."""

    def __init__(self, a, b):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)

    def rollout(self, q0, useq, with_sens):
        n_p = len(useq)
        nx = self.a.shape[0]
        states = np.empty((n_p + 1, nx))
        states[0] = q0
        for k in range(n_p):
            states[k + 1] = self.a @ states[k] + self.b @ useq[k]
        phis = np.broadcast_to(self.a, (n_p,) + self.a.shape).copy()
        gams = np.broadcast_to(self.b, (n_p,) + self.b.shape).copy()
        return states, phis, gams


def _sqrt_psd(m):
    w, v = np.linalg.eigh(0.5 * (m + m.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


@dataclass
class MpcProblem:
    """One receding-horizon instance.

    ``reference`` has shape ``(horizon_np, 6)``: row ``k`` is the target for
    the state reached after ``k + 1`` prediction steps.
    """

    horizon_np: int
    reference: np.ndarray
    initial_state: np.ndarray
    model: object
    lb: np.ndarray
    ub: np.ndarray
    q_weight: np.ndarray = field(default_factory=lambda: DEFAULT_Q.copy())
    r_weight: np.ndarray = field(default_factory=lambda: DEFAULT_R.copy())

    def __post_init__(self):
        self.lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (3,)).copy()
        self.ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (3,)).copy()
        self.reference = np.asarray(self.reference, dtype=float)
        self.initial_state = np.asarray(self.initial_state, dtype=float)
        if self.horizon_np < 1:
            raise ValueError("horizon must be at least 1")
        if self.reference.shape[0] != self.horizon_np:
            raise ValueError(f"reference has {self.reference.shape[0]} rows, expected {self.horizon_np}")
        if np.any(self.lb >= self.ub):
            raise ValueError("lb must be strictly below ub")
        if np.min(np.linalg.eigvalsh(self.r_weight)) <= 0.0:
            raise ValueError("R must be positive definite")
        if np.min(np.linalg.eigvalsh(self.q_weight)) < -1e-12:
            raise ValueError("Q must be positive semidefinite")
        self._wq = _sqrt_psd(self.q_weight)
        self._wr = _sqrt_psd(self.r_weight)

    @property
    def n_vars(self):
        return 3 * self.horizon_np

    @property
    def lower(self):
        return np.tile(self.lb, self.horizon_np)

    @property
    def upper(self):
        return np.tile(self.ub, self.horizon_np)

    def project(self, useq):
        return np.clip(useq, self.lb, self.ub)

    def residuals(self, useq, with_jac=False):
        """Stacked weighted residual and, optionally, its Jacobian in the flat controls."""
        useq = np.asarray(useq, dtype=float).reshape(self.horizon_np, 3)
        states, phis, gams = self.model.rollout(self.initial_state, useq, with_jac)
        nx = states.shape[1]
        err = (states[1:] - self.reference) @ self._wq.T
        res = np.concatenate([err.ravel(), (useq @ self._wr.T).ravel()])
        if not with_jac:
            return res, None
        sens = _kernels.stack_sensitivities(np.ascontiguousarray(phis), np.ascontiguousarray(gams))
        wq_blk = np.kron(np.eye(self.horizon_np), self._wq)
        jac = np.vstack([wq_blk @ sens, np.kron(np.eye(self.horizon_np), self._wr)])
        assert jac.shape == (nx * self.horizon_np + self.n_vars, self.n_vars)
        return res, jac


@dataclass(frozen=True)
class MpcSolution:
    u_seq: np.ndarray
    cost: float
    iterations: int
    kkt_residual: float
    status: SolveStatus
    qp_time_us: float = 0.0
    trace: tuple = ()


def rollout_cost(p, useq):
    """Tracking cost of ``useq``; ``inf`` when the prediction diverges."""
    res, _ = p.residuals(useq)
    if not np.all(np.isfinite(res)):
        return np.inf
    return float(res @ res)


def cost_gradient(p, useq):
    res, jac = p.residuals(useq, with_jac=True)
    return 2.0 * jac.T @ res


def kkt_residual(p, useq, grad=None):
    """Infinity norm of the projected-gradient step ``u - P(u - grad)``."""
    u = np.asarray(useq, dtype=float).reshape(-1)
    g = cost_gradient(p, u) if grad is None else grad
    return float(np.max(np.abs(u - np.clip(u - g, p.lower, p.upper))))


def _gn_step(p, u, res, jac):
    t0 = time.perf_counter()
    sol = lsq_linear(jac, -res, bounds=(p.lower - u, p.upper - u), method="bvls", tol=1e-12)
    dt = (time.perf_counter() - t0) * 1e6
    return sol.x, dt


def solve_full(p, warm_start=None, tol=1e-8, max_iter=50, armijo=1e-4):
    """Projected Gauss-Newton with Armijo backtracking.

    Every iterate stays inside the box, so the returned sequence is always
    feasible. Stops when the projected gradient drops below ``tol`` or no
    further decrease is possible.
    """
    u = np.zeros(p.n_vars) if warm_start is None else p.project(np.asarray(warm_start, float).reshape(-1, 3)).ravel()
    res, jac = p.residuals(u, with_jac=True)
    cost = float(res @ res)
    if not np.isfinite(cost):
        raise NonFiniteCostError("initial iterate yields a diverging prediction")
    trace = [cost]
    qp_us = []
    status = SolveStatus.MAX_ITER
    it = 0
    kkt = np.inf
    for it in range(1, max_iter + 1):
        grad = 2.0 * jac.T @ res
        kkt = float(np.max(np.abs(u - np.clip(u - grad, p.lower, p.upper))))
        if kkt <= tol:
            status = SolveStatus.CONVERGED
            it -= 1
            break
        step, dt = _gn_step(p, u, res, jac)
        qp_us.append(dt)
        slope = float(grad @ step)
        alpha = 1.0
        accepted = False
        while alpha > 1e-10:
            cand = np.clip(u + alpha * step, p.lower, p.upper)
            res_c, _ = p.residuals(cand)
            cost_c = float(res_c @ res_c) if np.all(np.isfinite(res_c)) else np.inf
            if cost_c <= cost + armijo * alpha * slope:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            status = SolveStatus.CONVERGED
            break
        u = cand
        res, jac = p.residuals(u, with_jac=True)
        cost = float(res @ res)
        trace.append(cost)
    else:
        grad = 2.0 * jac.T @ res
        kkt = float(np.max(np.abs(u - np.clip(u - grad, p.lower, p.upper))))
    return MpcSolution(
        u_seq=u.reshape(p.horizon_np, 3), cost=cost, iterations=it, kkt_residual=kkt, status=status,
        qp_time_us=float(np.mean(qp_us)) if qp_us else 0.0, trace=tuple(trace),
    )


def solve_rti(p, warm_start):
    """One Gauss-Newton step from ``warm_start`` without line search."""
    u = p.project(np.asarray(warm_start, dtype=float).reshape(-1, 3)).ravel()
    res, jac = p.residuals(u, with_jac=True)
    if not np.all(np.isfinite(res)):
        raise NonFiniteCostError("warm start yields a diverging prediction")
    step, dt = _gn_step(p, u, res, jac)
    u = np.clip(u + step, p.lower, p.upper)
    res_n, jac_n = p.residuals(u, with_jac=True)
    cost = float(res_n @ res_n) if np.all(np.isfinite(res_n)) else np.inf
    kkt = kkt_residual(p, u, 2.0 * jac_n.T @ res_n) if np.isfinite(cost) else np.inf
    return MpcSolution(
        u_seq=u.reshape(p.horizon_np, 3), cost=cost, iterations=1, kkt_residual=kkt,
        status=SolveStatus.RTI_SINGLE_STEP, qp_time_us=dt,
    )


def shift_warm_start(prev):
    prev = np.asarray(prev, dtype=float)
    return np.vstack([prev[1:], prev[-1:]])


def build_box_matrix(n_p, lb, ub):
    """Matrix ``L`` with ``u`` inside the box iff ``L @ [U, 1] <= 0``.

    Rows come in per-step blocks ``[I; -I]`` with the bound column
    ``[-ub; lb]``, giving a ``6 n_p x (3 n_p + 1)`` matrix.
    """
    if n_p < 1:
        raise ValueError("n_p must be at least 1")
    lb = np.broadcast_to(np.asarray(lb, dtype=float), (3,))
    ub = np.broadcast_to(np.asarray(ub, dtype=float), (3,))
    out = np.zeros((6 * n_p, 3 * n_p + 1))
    for k in range(n_p):
        r, c = 6 * k, 3 * k
        out[r:r + 3, c:c + 3] = np.eye(3)
        out[r + 3:r + 6, c:c + 3] = -np.eye(3)
        out[r:r + 3, -1] = -ub
        out[r + 3:r + 6, -1] = lb
    return out
