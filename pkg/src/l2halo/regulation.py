"""
Regulation-based station-keeping laws.

* :func:`ct_regulation_feedback` -- continuous-time regulator
  ``u = c(omega) + K (q - pi(omega))`` built from the regulator-equation
  solution ``(pi, c)``; used in simulation through zero-order hold.
* :func:`feedback_linearization` -- input-output linearizing comparator.
* :func:`mr_regulation_feedback` -- order-2 multi-rate sampled-data
  regulator designed on the two-half-step design model.
"""

from dataclasses import dataclass

import numpy as np
from scipy.signal import place_poles

from l2halo.dynamics import B_MAT, accel, drift, jacobian_q, linearize_at_l2, perturbation_jacobian
from l2halo.exosystem import (
    exo_propagate,
    perturbation_xi,
    reference_accel,
    reference_nu,
    reference_velocity,
    steady_state_pi,
)

DEFAULT_POLES = (-60.0, -72.0, -84.0, -96.0, -108.0, -120.0)


class GainError(ValueError):
    """Raised when gains violate their spectral requirements."""


@dataclass(frozen=True)
class RegulatorGains:
    k_matrix: np.ndarray
    a_d: np.ndarray

    def validate(self, a_matrix, delta_bar):
        closed = a_matrix + B_MAT @ self.k_matrix
        if np.max(np.linalg.eigvals(closed).real) >= 0.0:
            raise GainError("A + B K is not Hurwitz")
        disc = np.eye(6) + delta_bar * self.a_d
        if np.max(np.abs(np.linalg.eigvals(disc))) >= 1.0:
            raise GainError("I + delta_bar * A_d is not Schur")
        return self


def design_gains(c, delta_bar, poles=DEFAULT_POLES, contraction=0.5):
    """Pole-placement ``K`` and ``A_d = -(1 - contraction)/delta_bar * I``.

    ``K`` places the eigenvalues of ``A + B K`` at ``poles`` for the L2
    tangent model; ``A_d`` makes ``I + delta_bar A_d = contraction * I``.
    """
    a = linearize_at_l2(c).a_matrix
    placed = place_poles(a, B_MAT, np.asarray(poles, dtype=float))
    k = -placed.gain_matrix
    a_d = -(1.0 - contraction) / delta_bar * np.eye(6)
    return RegulatorGains(k_matrix=k, a_d=a_d).validate(a, delta_bar)


def friend_control_c(w, m, c):
    """Feedforward ``c(omega)`` solving the regulator equations.

    ``c = -[0 I](f0(pi) + P(pi) T_xi omega) + [0 I] Pi S omega``
    """
    q_ss = steady_state_pi(w, m)
    xi = perturbation_xi(w, m)
    base = accel(q_ss, np.zeros(4), c.mu) + perturbation_jacobian(q_ss, c.mu)[3:] @ xi
    return -base + reference_accel(w, m)


def fbi_residual(w, m, c):
    """``Pi S w - f0(pi) - P(pi) T_xi w - B c(w)``; zero when ``(pi, c)`` are consistent."""
    q_ss = steady_state_pi(w, m)
    lhs = m.pi_matrix @ m.s_matrix @ w
    rhs = (
        drift(q_ss, np.zeros(4), c.mu)
        + perturbation_jacobian(q_ss, c.mu) @ perturbation_xi(w, m)
        + B_MAT @ friend_control_c(w, m, c)
    )
    return lhs - rhs


def ct_regulation_feedback(q, w, g, m, c):
    return friend_control_c(w, m, c) + g.k_matrix @ (np.asarray(q, dtype=float) - steady_state_pi(w, m))


def feedback_linearization(q, w, kp, kd, m, c):
    """Output linearization for the circular model.

    ``u = -f2(q, 0) + nu_ddot + Kd (nu_dot - p_dot) + Kp (nu - p)``.
    """
    q = np.asarray(q, dtype=float)
    nu = reference_nu(w, m)
    nu_dot = reference_velocity(w, m)
    return (
        -accel(q, np.zeros(4), c.mu)
        + reference_accel(w, m)
        + np.asarray(kd) @ (nu_dot - q[3:])
        + np.asarray(kp) @ (nu - q[:3])
    )


def mr_design_terms(q, w, delta, m, c):
    """Drift ``f^delta`` (6,) and input matrix ``g^delta`` (6x6) of the design model.

    The design model is ``q+ = q + (delta/2) (f^delta + g^delta [u1; u2])``,
    with the eccentricity at mid-period predicted by the exosystem.
    """
    q = np.asarray(q, dtype=float)
    hb = 0.5 * delta
    xi0 = perturbation_xi(w, m)
    xi1 = perturbation_xi(exo_propagate(w, hb, m), m)
    f0 = drift(q, xi0, c.mu)
    jac1 = jacobian_q(q, xi1, c.mu)
    f_delta = f0 + drift(q, xi1, c.mu) + hb * jac1 @ f0
    g_delta = np.hstack([(np.eye(6) + hb * jac1) @ B_MAT, B_MAT])
    return f_delta, g_delta


def mr_regulation_feedback(q, w, g, delta, m, c):
    """Multi-rate regulator returning the two half-period controls ``(u1, u2)``.

    Places the design-model error at ``(I + (delta/2) A_d)(q - pi(omega))``
    one planning period ahead.

    Raises
    ------
    numpy.linalg.LinAlgError
        If ``g^delta`` is singular.
    """
    q = np.asarray(q, dtype=float)
    hb = 0.5 * delta
    f_delta, g_delta = mr_design_terms(q, w, delta, m, c)
    pi_now = steady_state_pi(w, m)
    pi_next = steady_state_pi(exo_propagate(w, delta, m), m)
    rhs = g.a_d @ (q - pi_now) + (pi_next - pi_now) / hb - f_delta
    ubar = np.linalg.solve(g_delta, rhs)
    return ubar[:3], ubar[3:]
