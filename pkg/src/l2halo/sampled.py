"""
Sampled-data equivalents of the controlled dynamics under zero-order hold.

``sr_map`` is the single-rate map (controls and perturbation frozen over one
period), ``mr_map`` the order-2 multi-rate map (two half-period holds). Both
are exact flows realized with fixed-step RK4. ``plant_step`` is the ground
truth used by the simulator: the eccentricity series and radiation pressure
keep evolving inside the step.
"""

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from l2halo import _kernels
from l2halo.dynamics import GUARD_RADIUS, SingularityError


@dataclass(frozen=True)
class SamplingConfig:
    """Planning period ``delta`` and RK4 substeps per half-period ``delta/2``."""

    delta: float
    substeps: int = 16

    def __post_init__(self):
        if self.delta <= 0.0:
            raise ValueError("delta must be positive")
        if self.substeps < 4:
            raise ValueError("substeps must be at least 4")

    @property
    def delta_bar(self):
        return 0.5 * self.delta

    def steps_for(self, duration):
        """Number of RK4 steps used to cover ``duration``."""
        if duration == 0.0:
            return 0
        return max(1, math.ceil(self.substeps * abs(duration) / self.delta_bar - 1e-9))


class XiMode(Enum):
    HELD = "held"
    EXO_DRIVEN = "exo-driven"


@dataclass(frozen=True)
class HoldSegment:
    """One zero-order-hold interval of the plant input."""

    u: np.ndarray
    duration: float
    xi_mode: XiMode = XiMode.EXO_DRIVEN

    def __post_init__(self):
        if self.duration <= 0.0:
            raise ValueError("duration must be positive")


def _guard(q, rmin):
    if not np.all(np.isfinite(q)):
        raise SingularityError("integration produced a non-finite state")
    if rmin <= GUARD_RADIUS:
        raise SingularityError(f"trajectory passed within {rmin:.3g} of a primary")
    return q


def _f64(x, n):
    return np.ascontiguousarray(np.broadcast_to(np.asarray(x, dtype=float), (n,)))


def sr_map(q, xi, u, delta, cfg, c, d=None):
    """Single-rate map ``F^delta(q, xi, u)``.

    ``xi``, ``u`` (and the optional disturbance ``d``) are held over the
    whole interval. ``delta = 0`` returns ``q`` unchanged.
    """
    if delta < 0.0:
        raise ValueError("delta must be non-negative")
    q = _f64(q, 6)
    n = cfg.steps_for(delta)
    if n == 0:
        return q.copy()
    d = np.zeros(3) if d is None else _f64(d, 3)
    qn, rmin = _kernels.rk4_frozen(q, _f64(xi, 4), _f64(u, 3), d, c.mu, delta / n, n)
    return _guard(qn, rmin)


def sr_map_sensitivity(q, xi, u, delta, cfg, c):
    """``sr_map`` together with ``dq+/dq`` (6x6) and ``dq+/du`` (6x3)."""
    q = _f64(q, 6)
    n = max(cfg.steps_for(delta), 1)
    qn, s, rmin = _kernels.rk4_frozen_sens(q, _f64(xi, 4), _f64(u, 3), c.mu, delta / n, n)
    return _guard(qn, rmin), s[:, :6].copy(), s[:, 6:].copy()


def mr_map(q, xi, u1, u2, delta, cfg, c):
    """Order-2 multi-rate map: hold ``u1`` then ``u2``, each for ``delta/2``."""
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    half = sr_map(q, xi, u1, 0.5 * delta, cfg, c)
    return sr_map(half, xi, u2, 0.5 * delta, cfg, c)


def plant_step(q, t0, u, duration, cfg, c, ecc_on=True, srp_on=True):
    """Ground-truth propagation over one hold of ``u`` starting at time ``t0``.

    The eccentricity perturbation follows the truncated series and the
    radiation pressure follows its periodic law at every RK4 stage.
    """
    q = _f64(q, 6)
    n = cfg.steps_for(duration)
    if n == 0:
        return q.copy()
    qn, rmin = _kernels.rk4_plant(
        q, float(t0), _f64(u, 3), c.mu, c.ecc, c.phi, c.srp_accel, c.zeta,
        bool(ecc_on), bool(srp_on), duration / n, n,
    )
    return _guard(qn, rmin)


def apply_segment(q, t0, seg, xi_held, cfg, c, srp_on=True):
    """Propagate ``q`` across a :class:`HoldSegment`.

    In ``HELD`` mode ``xi_held`` is frozen and no disturbance acts; in
    ``EXO_DRIVEN`` mode the plant law of :func:`plant_step` is used.
    """
    if seg.xi_mode is XiMode.HELD:
        return sr_map(q, xi_held, seg.u, seg.duration, cfg, c)
    return plant_step(q, t0, seg.u, seg.duration, cfg, c, ecc_on=True, srp_on=srp_on)


def relative_degree_probe(q, xi, delta, cfg, c, step=1e-6):
    """Finite-difference sensitivity ``d p(k+1) / d u(k)`` of :func:`sr_map`.

    The leading term is ``(delta**2 / 2) * I`` because ``C B = 0`` and
    ``C (df/dq) B = I``; a nonsingular result confirms sampled relative
    degree one on each channel.
    """
    out = np.zeros((3, 3))
    u0 = np.zeros(3)
    for j in range(3):
        du = np.zeros(3)
        du[j] = step
        plus = sr_map(q, xi, u0 + du, delta, cfg, c)
        minus = sr_map(q, xi, u0 - du, delta, cfg, c)
        out[:, j] = (plus[:3] - minus[:3]) / (2.0 * step)
    return out
