"""
Elliptic restricted three-body dynamics in the Earth-Moon rotating frame.

The state is ``q = (x, y, z, vx, vy, vz)`` in distance-normalized units. The
eccentricity of the primaries enters through the 4-vector
``xi = (beta, beta**2, beta_dot, mu*(1-mu)*alpha)`` and solar radiation
pressure through an additive acceleration ``d``.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

#: Mass ratio m2 / (m1 + m2) for the Earth-Moon system.
EARTH_MOON_MU = 0.0121505856
#: Mean Earth-Moon distance, km.
EARTH_MOON_KM = 384400.0
#: Distance below which the state is considered to have hit a primary.
GUARD_RADIUS = 1e-6

M_MAT = np.diag([-1.0, -1.0, 0.0])
N_MAT = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
B_MAT = np.vstack([np.zeros((3, 3)), np.eye(3)])
C_MAT = np.hstack([np.eye(3), np.zeros((3, 3))])


class SingularityError(ValueError):
    """Raised when a state reaches one of the primaries or stops being finite."""


@dataclass(frozen=True)
class PhysicalConstants:
    """Model constants in normalized units.

    ``srp_accel`` is used directly as the normalized amplitude of the
    radiation-pressure acceleration.
    """

    mu: float = EARTH_MOON_MU
    ecc: float = 0.0549
    srp_accel: float = 4.5e-6
    zeta: float = 0.9252
    phi: float = 0.0
    time_unit_seconds: float = 375190.0

    def __post_init__(self):
        if not 0.0 < self.mu < 0.5:
            raise ValueError(f"mu must lie in (0, 0.5), got {self.mu}")
        if self.ecc < 0.0:
            raise ValueError("ecc must be non-negative")
        if self.srp_accel < 0.0:
            raise ValueError("srp_accel must be non-negative")
        if self.zeta <= 0.0:
            raise ValueError("zeta must be positive")
        if self.time_unit_seconds <= 0.0:
            raise ValueError("time_unit_seconds must be positive")

    def hours_to_nd(self, hours):
        return hours * 3600.0 / self.time_unit_seconds

    def nd_to_hours(self, t):
        return t * self.time_unit_seconds / 3600.0


@dataclass(frozen=True)
class LinearModel:
    """Linear tangent model ``dq/dt = A q`` about the L2 point."""

    a_matrix: np.ndarray
    eta: float
    l2: float


def alpha_beta(t, c):
    """Truncated eccentricity series.

    Returns ``(alpha, beta, beta_dot)`` evaluated at normalized time ``t``,
    keeping terms up to ``e**2``.
    """
    e, ph = c.ecc, c.phi
    th = t + ph
    alpha = -e * np.cos(th) + 0.5 * e**2 * (1.0 + np.cos(2.0 * th))
    beta = 2.0 * e * np.cos(th) + 2.5 * e**2 * np.cos(2.0 * th)
    beta_dot = -2.0 * e * np.sin(th) - 5.0 * e**2 * np.sin(2.0 * th)
    return alpha, beta, beta_dot


def xi_series(t, c):
    """Eccentricity perturbation vector built from :func:`alpha_beta`."""
    alpha, beta, beta_dot = alpha_beta(t, c)
    return np.array([beta, beta * beta, beta_dot, c.mu * (1.0 - c.mu) * alpha])


def srp_disturbance(t, c):
    """Solar radiation pressure acceleration at time ``t``."""
    ct = np.cos(c.zeta * t)
    st = np.sin(c.zeta * t)
    return np.array([c.srp_accel * ct * ct, c.srp_accel * st * st, 0.0])


def primary_positions(xi, mu):
    """x-coordinates of the Earth and the Moon shifted by ``xi[3]``."""
    return -mu - xi[3] / (1.0 - mu), 1.0 - mu + xi[3] / mu


def check_state(q, xi, mu):
    if not np.all(np.isfinite(q)):
        raise SingularityError("state is not finite")
    d1, d2 = primary_positions(xi, mu)
    r1 = np.sqrt((q[0] - d1) ** 2 + q[1] ** 2 + q[2] ** 2)
    r2 = np.sqrt((q[0] - d2) ** 2 + q[1] ** 2 + q[2] ** 2)
    if r1 <= GUARD_RADIUS or r2 <= GUARD_RADIUS:
        raise SingularityError(f"state within {GUARD_RADIUS} of a primary (r1={r1:.3g}, r2={r2:.3g})")


def accel(q, xi, mu):
    """Acceleration block ``f2(q, xi)`` of the drift field."""
    q = np.asarray(q, dtype=float)
    xi = np.asarray(xi, dtype=float)
    p, v = q[:3], q[3:]
    mp = M_MAT @ p
    nv = N_MAT @ v
    d1, d2 = primary_positions(xi, mu)
    rho1 = p - np.array([d1, 0.0, 0.0])
    rho2 = p - np.array([d2, 0.0, 0.0])
    r1 = np.linalg.norm(rho1)
    r2 = np.linalg.norm(rho2)
    return (
        -mp
        - 2.0 * nv
        - xi[0] * (2.0 * mp + 2.0 * nv)
        - xi[1] * mp
        - xi[2] * nv
        - (1.0 - mu) * rho1 / r1**3
        - mu * rho2 / r2**3
    )


def drift(q, xi, mu):
    """Drift field ``f(q, xi) = (qdot_position, f2(q, xi))``."""
    q = np.asarray(q, dtype=float)
    return np.concatenate([q[3:], accel(q, xi, mu)])


def vector_field(q, xi, u, d, c):
    """Full controlled field ``f(q, xi) + B (u + d)``.

    Raises
    ------
    SingularityError
        If ``q`` lies within :data:`GUARD_RADIUS` of a primary.
    """
    q = np.asarray(q, dtype=float)
    check_state(q, xi, c.mu)
    out = drift(q, xi, c.mu)
    out[3:] += np.asarray(u, dtype=float) + np.asarray(d, dtype=float)
    return out


def _gravity_gradient(rho):
    r = np.linalg.norm(rho)
    return np.eye(3) / r**3 - 3.0 * np.outer(rho, rho) / r**5


def jacobian_q(q, xi, mu):
    """Analytic Jacobian of :func:`drift` with respect to ``q``."""
    q = np.asarray(q, dtype=float)
    p = q[:3]
    d1, d2 = primary_positions(xi, mu)
    g1 = _gravity_gradient(p - np.array([d1, 0.0, 0.0]))
    g2 = _gravity_gradient(p - np.array([d2, 0.0, 0.0]))
    jac = np.zeros((6, 6))
    jac[:3, 3:] = np.eye(3)
    jac[3:, :3] = -(1.0 + 2.0 * xi[0] + xi[1]) * M_MAT - (1.0 - mu) * g1 - mu * g2
    jac[3:, 3:] = -(2.0 + 2.0 * xi[0] + xi[2]) * N_MAT
    return jac


def perturbation_jacobian(q, mu):
    """``P(q)``: Jacobian of :func:`drift` with respect to ``xi`` at ``xi = 0``."""
    q = np.asarray(q, dtype=float)
    p, v = q[:3], q[3:]
    mp = M_MAT @ p
    nv = N_MAT @ v
    ex = np.array([1.0, 0.0, 0.0])
    g1 = _gravity_gradient(p - np.array([-mu, 0.0, 0.0]))
    g2 = _gravity_gradient(p - np.array([1.0 - mu, 0.0, 0.0]))
    out = np.zeros((6, 4))
    out[3:, 0] = -(2.0 * mp + 2.0 * nv)
    out[3:, 1] = -mp
    out[3:, 2] = -nv
    # d1 moves by -xi4/(1-mu), d2 by +xi4/mu
    out[3:, 3] = -g1 @ ex + g2 @ ex
    return out


def _collinear_condition(x, mu):
    r1 = abs(x + mu)
    r2 = abs(x - 1.0 + mu)
    return x - (1.0 - mu) * (x + mu) / r1**3 - mu * (x - 1.0 + mu) / r2**3


def libration_points(c):
    """x-coordinates ``(L1, L2, L3)`` of the collinear equilibria.

    Found with Brent's method on the collinear equilibrium condition of the
    circular problem, bracketed between and beyond the primaries.
    """
    mu = c.mu
    eps = 1e-9
    brackets = [
        (-mu + eps, 1.0 - mu - eps),
        (1.0 - mu + eps, 2.0),
        (-2.0, -mu - eps),
    ]
    roots = []
    for a, b in brackets:
        try:
            x, info = brentq(_collinear_condition, a, b, args=(mu,), xtol=1e-15, full_output=True)
        except ValueError as exc:
            raise RuntimeError(f"collinear root bracket [{a}, {b}] failed: {exc}") from exc
        if not info.converged:
            raise RuntimeError(f"root finder did not converge in [{a}, {b}]")
        roots.append(x)
    return tuple(roots)


def l2_equilibrium(c):
    """6-vector equilibrium state at L2."""
    return np.array([libration_points(c)[1], 0.0, 0.0, 0.0, 0.0, 0.0])


def linearize_at_l2(c):
    mu = c.mu
    l2 = libration_points(c)[1]
    eta = (1.0 - mu) / (l2 + mu) ** 3 + mu / (l2 - 1.0 + mu) ** 3
    a = np.zeros((6, 6))
    a[:3, 3:] = np.eye(3)
    a[3:, :3] = np.diag([1.0 + 2.0 * eta, 1.0 - eta, -eta])
    a[3, 4] = 2.0
    a[4, 3] = -2.0
    return LinearModel(a_matrix=a, eta=eta, l2=l2)


__all__ = [
    "B_MAT",
    "C_MAT",
    "EARTH_MOON_KM",
    "EARTH_MOON_MU",
    "GUARD_RADIUS",
    "LinearModel",
    "M_MAT",
    "N_MAT",
    "PhysicalConstants",
    "SingularityError",
    "accel",
    "alpha_beta",
    "check_state",
    "drift",
    "jacobian_q",
    "l2_equilibrium",
    "libration_points",
    "linearize_at_l2",
    "perturbation_jacobian",
    "primary_positions",
    "srp_disturbance",
    "vector_field",
    "xi_series",
]
