"""
Exosystem generating the quasi-Halo reference and the eccentricity signal.

``omega`` is a 4-vector made of two planar rotations: the first block turns
at unit rate (the primaries' orbital motion), the second at the orbit
frequency ``Omega``. The reference is expressed about L2, so the steady
state ``pi(omega)`` is ``center + Pi @ omega`` with ``center`` the L2
equilibrium state.
"""

from dataclasses import dataclass, field

import numpy as np

from l2halo.dynamics import l2_equilibrium, linearize_at_l2

S1 = np.array([[0.0, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class OrbitParams:
    k_amp: float = 0.12
    omega_freq: float = 1.8636
    omega_z: float = 1.8636
    phi: float = 0.0

    def __post_init__(self):
        if self.k_amp < 0.0:
            raise ValueError("k_amp must be non-negative")
        if self.omega_freq <= 0.0:
            raise ValueError("omega_freq must be positive")
        if self.omega_freq != self.omega_z:
            raise ValueError("in-plane and out-of-plane frequencies must coincide")


@dataclass(frozen=True)
class ExoMatrices:
    s_matrix: np.ndarray
    t_xi: np.ndarray
    t_nu: np.ndarray
    pi_matrix: np.ndarray
    omega_freq: float
    center: np.ndarray = field(default_factory=lambda: np.zeros(6))


def build_matrices(p, c, center=None):
    """Assemble ``S``, ``T_xi``, ``T_nu`` and ``Pi`` for orbit ``p``.

    ``center`` defaults to the L2 equilibrium; pass zeros to express the
    steady state in raw ``Pi @ omega`` form.
    """
    lin = linearize_at_l2(c)
    eta, om, k = lin.eta, p.omega_freq, p.k_amp
    s = np.zeros((4, 4))
    s[:2, :2] = S1
    s[2:, 2:] = om * S1
    t_nu = np.zeros((3, 4))
    t_nu[0, 2] = -k * (1.0 - eta + om**2) / (2.0 * om)
    t_nu[1, 3] = k
    t_nu[2, 2] = k * np.cos(p.phi)
    t_nu[2, 3] = k * np.sin(p.phi)
    t_xi = np.zeros((4, 4))
    t_xi[0, 0] = 2.0
    t_xi[2, 1] = -2.0
    t_xi[3, 0] = -c.mu * (1.0 - c.mu)
    t_xi *= c.ecc
    pi_matrix = np.vstack([t_nu, t_nu @ s])
    if center is None:
        center = l2_equilibrium(c)
    return ExoMatrices(
        s_matrix=s, t_xi=t_xi, t_nu=t_nu, pi_matrix=pi_matrix,
        omega_freq=om, center=np.asarray(center, dtype=float),
    )


def exo_init(p):
    cp, sp = np.cos(p.phi), np.sin(p.phi)
    return np.array([cp, sp, cp, sp])


def _rot(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s], [s, c]])


def exo_transition(dt, m):
    """Closed-form ``expm(S * dt)``."""
    out = np.zeros((4, 4))
    out[:2, :2] = _rot(dt)
    out[2:, 2:] = _rot(m.omega_freq * dt)
    return out


def exo_propagate(w, dt, m):
    return exo_transition(dt, m) @ np.asarray(w, dtype=float)


def exo_at(t, p, m):
    """Exosystem state at time ``t`` from the orbit's initial condition."""
    return exo_propagate(exo_init(p), t, m)


def reference_offset(w, m):
    """Displacement ``T_nu @ omega`` of the reference from L2."""
    return m.t_nu @ w


def reference_nu(w, m):
    """Reference position ``center + T_nu @ omega`` in the rotating frame."""
    return m.center[:3] + m.t_nu @ w


def reference_velocity(w, m):
    return m.t_nu @ m.s_matrix @ w


def reference_accel(w, m):
    return m.t_nu @ m.s_matrix @ m.s_matrix @ w


def perturbation_xi(w, m):
    """First-order eccentricity perturbation ``T_xi @ omega``."""
    return m.t_xi @ w


def steady_state_pi(w, m):
    """Steady-state state ``center + Pi @ omega``."""
    return m.center + m.pi_matrix @ w


def closed_form_nu(t, p, eta):
    """Quasi-Halo offset from L2 written directly as trigonometric functions of ``t``."""
    om, k, ph = p.omega_freq, p.k_amp, p.phi
    return np.array([
        -k * (1.0 - eta + om**2) / (2.0 * om) * np.cos(om * t + ph),
        k * np.sin(om * t + ph),
        k * np.cos(p.omega_z * t),
    ])
