"""Compiled fixed-step RK4 kernels for the drift field and its sensitivities.

These mirror :func:`l2halo.dynamics.drift` and :func:`l2halo.dynamics.jacobian_q`
term by term; the pure-numpy versions remain the reference used in tests.
Kernels return a ``min_r`` diagnostic instead of raising so callers can map
near-collisions onto :class:`l2halo.dynamics.SingularityError`.
"""

import numba
import numpy as np


@numba.njit(cache=True)
def field(q, xi, u, d, mu, out):
    d1 = -mu - xi[3] / (1.0 - mu)
    d2 = 1.0 - mu + xi[3] / mu
    x, y, z = q[0], q[1], q[2]
    vx, vy, vz = q[3], q[4], q[5]
    a1x = x - d1
    a2x = x - d2
    r1 = np.sqrt(a1x * a1x + y * y + z * z)
    r2 = np.sqrt(a2x * a2x + y * y + z * z)
    k1 = (1.0 - mu) / (r1 * r1 * r1)
    k2 = mu / (r2 * r2 * r2)
    # -M p = (x, y, 0); -N v = (vy, -vx, 0)
    cp = 1.0 + 2.0 * xi[0] + xi[1]
    cv = 2.0 + 2.0 * xi[0] + xi[2]
    out[0] = vx
    out[1] = vy
    out[2] = vz
    out[3] = cp * x + cv * vy - k1 * a1x - k2 * a2x + u[0] + d[0]
    out[4] = cp * y - cv * vx - k1 * y - k2 * y + u[1] + d[1]
    out[5] = -k1 * z - k2 * z + u[2] + d[2]
    return min(r1, r2)


@numba.njit(cache=True)
def jacobian(q, xi, mu, jac):
    d1 = -mu - xi[3] / (1.0 - mu)
    d2 = 1.0 - mu + xi[3] / mu
    rho1 = np.empty(3)
    rho2 = np.empty(3)
    rho1[0] = q[0] - d1
    rho2[0] = q[0] - d2
    rho1[1] = rho2[1] = q[1]
    rho1[2] = rho2[2] = q[2]
    r1 = np.sqrt(rho1[0] ** 2 + rho1[1] ** 2 + rho1[2] ** 2)
    r2 = np.sqrt(rho2[0] ** 2 + rho2[1] ** 2 + rho2[2] ** 2)
    cp = 1.0 + 2.0 * xi[0] + xi[1]
    cv = 2.0 + 2.0 * xi[0] + xi[2]
    jac[:, :] = 0.0
    for i in range(3):
        jac[i, 3 + i] = 1.0
    w1 = (1.0 - mu) / r1**3
    w2 = mu / r2**3
    v1 = 3.0 * (1.0 - mu) / r1**5
    v2 = 3.0 * mu / r2**5
    for i in range(3):
        for j in range(3):
            jac[3 + i, j] = v1 * rho1[i] * rho1[j] + v2 * rho2[i] * rho2[j]
        jac[3 + i, i] -= w1 + w2
    jac[3, 0] += cp
    jac[4, 1] += cp
    jac[3, 4] += cv
    jac[4, 3] -= cv


@numba.njit(cache=True)
def rk4_frozen(q0, xi, u, d, mu, h, n):
    """``n`` RK4 steps of size ``h`` with ``xi``, ``u`` and ``d`` held."""
    q = q0.copy()
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    rmin = np.inf
    for _ in range(n):
        rmin = min(rmin, field(q, xi, u, d, mu, k1))
        rmin = min(rmin, field(q + 0.5 * h * k1, xi, u, d, mu, k2))
        rmin = min(rmin, field(q + 0.5 * h * k2, xi, u, d, mu, k3))
        rmin = min(rmin, field(q + h * k3, xi, u, d, mu, k4))
        q = q + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return q, rmin


@numba.njit(cache=True)
def rk4_frozen_sens(q0, xi, u, mu, h, n):
    """RK4 flow plus its exact discrete derivative.

    Returns ``(q, S, rmin)`` where ``S = [dq/dq0, dq/du]`` is 6x9.
    """
    d = np.zeros(3)
    q = q0.copy()
    s = np.zeros((6, 9))
    for i in range(6):
        s[i, i] = 1.0
    bu = np.zeros((6, 9))
    for i in range(3):
        bu[3 + i, 6 + i] = 1.0
    jac = np.empty((6, 6))
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    rmin = np.inf
    for _ in range(n):
        rmin = min(rmin, field(q, xi, u, d, mu, k1))
        jacobian(q, xi, mu, jac)
        s1 = jac @ s + bu
        x2 = q + 0.5 * h * k1
        t2 = s + 0.5 * h * s1
        rmin = min(rmin, field(x2, xi, u, d, mu, k2))
        jacobian(x2, xi, mu, jac)
        s2 = jac @ t2 + bu
        x3 = q + 0.5 * h * k2
        t3 = s + 0.5 * h * s2
        rmin = min(rmin, field(x3, xi, u, d, mu, k3))
        jacobian(x3, xi, mu, jac)
        s3 = jac @ t3 + bu
        x4 = q + h * k3
        t4 = s + h * s3
        rmin = min(rmin, field(x4, xi, u, d, mu, k4))
        jacobian(x4, xi, mu, jac)
        s4 = jac @ t4 + bu
        q = q + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        s = s + (h / 6.0) * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
    return q, s, rmin


@numba.njit(cache=True)
def rollout(q0, useq, mu, h, n, with_sens):
    """Single-shooting prediction with ``xi = 0`` and no disturbance.

    Returns states ``(np+1, 6)``, per-step ``dq+/dq`` ``(np, 6, 6)`` and
    ``dq+/du`` ``(np, 6, 3)``, and the minimum primary distance seen.
    """
    n_p = useq.shape[0]
    xi = np.zeros(4)
    d = np.zeros(3)
    states = np.empty((n_p + 1, 6))
    phis = np.zeros((n_p, 6, 6))
    gams = np.zeros((n_p, 6, 3))
    states[0] = q0
    rmin = np.inf
    for k in range(n_p):
        u = useq[k].copy()
        if with_sens:
            qn, s, r = rk4_frozen_sens(states[k], xi, u, mu, h, n)
            phis[k] = s[:, :6]
            gams[k] = s[:, 6:]
        else:
            qn, r = rk4_frozen(states[k], xi, u, d, mu, h, n)
        rmin = min(rmin, r)
        states[k + 1] = qn
    return states, phis, gams, rmin


@numba.njit(cache=True)
def stack_sensitivities(phis, gams):
    """Block lower-triangular Jacobian of states ``1..np`` with respect to the controls."""
    n_p, nx, nu = gams.shape
    out = np.zeros((nx * n_p, nu * n_p))
    for i in range(n_p):
        m = gams[i].copy()
        for j in range(i, n_p):
            out[nx * j:nx * j + nx, nu * i:nu * i + nu] = m
            if j + 1 < n_p:
                m = phis[j + 1] @ m
    return out


@numba.njit(cache=True)
def _plant_inputs(t, mu, ecc, phi, srp, zeta, ecc_on, srp_on, xi, d):
    if ecc_on:
        th = t + phi
        alpha = -ecc * np.cos(th) + 0.5 * ecc * ecc * (1.0 + np.cos(2.0 * th))
        beta = 2.0 * ecc * np.cos(th) + 2.5 * ecc * ecc * np.cos(2.0 * th)
        beta_dot = -2.0 * ecc * np.sin(th) - 5.0 * ecc * ecc * np.sin(2.0 * th)
        xi[0] = beta
        xi[1] = beta * beta
        xi[2] = beta_dot
        xi[3] = mu * (1.0 - mu) * alpha
    else:
        xi[:] = 0.0
    if srp_on:
        ct = np.cos(zeta * t)
        st = np.sin(zeta * t)
        d[0] = srp * ct * ct
        d[1] = srp * st * st
        d[2] = 0.0
    else:
        d[:] = 0.0


@numba.njit(cache=True)
def rk4_plant(q0, t0, u, mu, ecc, phi, srp, zeta, ecc_on, srp_on, h, n):
    """RK4 with the eccentricity series and SRP sampled at every stage."""
    q = q0.copy()
    xi = np.zeros(4)
    d = np.zeros(3)
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    rmin = np.inf
    for i in range(n):
        t = t0 + i * h
        _plant_inputs(t, mu, ecc, phi, srp, zeta, ecc_on, srp_on, xi, d)
        rmin = min(rmin, field(q, xi, u, d, mu, k1))
        _plant_inputs(t + 0.5 * h, mu, ecc, phi, srp, zeta, ecc_on, srp_on, xi, d)
        rmin = min(rmin, field(q + 0.5 * h * k1, xi, u, d, mu, k2))
        rmin = min(rmin, field(q + 0.5 * h * k2, xi, u, d, mu, k3))
        _plant_inputs(t + h, mu, ecc, phi, srp, zeta, ecc_on, srp_on, xi, d)
        rmin = min(rmin, field(q + h * k3, xi, u, d, mu, k4))
        q = q + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return q, rmin


@numba.njit(cache=True)
def _exo_rotate(w, dt, om, out):
    c1, s1 = np.cos(dt), np.sin(dt)
    c2, s2 = np.cos(om * dt), np.sin(om * dt)
    out[0] = c1 * w[0] - s1 * w[1]
    out[1] = s1 * w[0] + c1 * w[1]
    out[2] = c2 * w[2] - s2 * w[3]
    out[3] = s2 * w[2] + c2 * w[3]


@numba.njit(cache=True)
def _grad_dot_ex(rx, ry, rz, out):
    # (I / r^3 - 3 rho rho^T / r^5) e_x
    r2 = rx * rx + ry * ry + rz * rz
    r = np.sqrt(r2)
    r3 = r2 * r
    r5 = r3 * r2
    out[0] = 1.0 / r3 - 3.0 * rx * rx / r5
    out[1] = -3.0 * ry * rx / r5
    out[2] = -3.0 * rz * rx / r5


@numba.njit(cache=True)
def planner_field(q, w, u, tnu, txi, center, om, mu, out):
    """Simplified closed-loop field ``(p_dot, nu_ddot + Gamma + u)``; mirrors ``gamma_residual``."""
    sw = np.array([-w[1], w[0], -om * w[3], om * w[2]])
    ssw = np.array([-w[0], -w[1], -om * om * w[2], -om * om * w[3]])
    nu = center[:3] + tnu @ w
    nud = tnu @ sw
    nudd = tnu @ ssw
    xi = txi @ w
    d1 = -mu - xi[3] / (1.0 - mu)
    d2 = 1.0 - mu + xi[3] / mu
    p = q[:3]
    v = q[3:]
    rmin = np.inf
    grav = np.zeros(3)
    for sgn in range(2):
        pos = p if sgn == 0 else nu
        a1 = np.array([pos[0] - d1, pos[1], pos[2]])
        a2 = np.array([pos[0] - d2, pos[1], pos[2]])
        r1 = np.sqrt(a1[0] ** 2 + a1[1] ** 2 + a1[2] ** 2)
        r2 = np.sqrt(a2[0] ** 2 + a2[1] ** 2 + a2[2] ** 2)
        if sgn == 0:
            rmin = min(r1, r2)
        f = 1.0 if sgn == 0 else -1.0
        grav += f * ((1.0 - mu) * a1 / r1**3 + mu * a2 / r2**3)
    # first-order eccentricity compensation P2(pi) xi, pi = (nu, nu_dot)
    g1 = np.empty(3)
    g2 = np.empty(3)
    _grad_dot_ex(nu[0] + mu, nu[1], nu[2], g1)
    _grad_dot_ex(nu[0] - 1.0 + mu, nu[1], nu[2], g2)
    mpi = np.array([-nu[0], -nu[1], 0.0])
    npi = np.array([-nud[1], nud[0], 0.0])
    comp = -(2.0 * mpi + 2.0 * npi) * xi[0] - mpi * xi[1] - npi * xi[2] + (g2 - g1) * xi[3]
    mp = np.array([-p[0], -p[1], 0.0])
    nv = np.array([-v[1], v[0], 0.0])
    lin = np.array([p[0] - nu[0] + 2.0 * (v[1] - nud[1]), p[1] - nu[1] - 2.0 * (v[0] - nud[0]), 0.0])
    ecc = -(2.0 * mp + 2.0 * nv) * xi[0] - mp * xi[1] - nv * xi[2]
    acc = nudd + lin + ecc - grav - comp + u
    out[0] = v[0]
    out[1] = v[1]
    out[2] = v[2]
    out[3] = acc[0]
    out[4] = acc[1]
    out[5] = acc[2]
    return rmin


@numba.njit(cache=True)
def planner_flow(q0, w0, u, tnu, txi, center, om, mu, h, n):
    """``n`` RK4 steps of the simplified field with the exosystem rotated in closed form."""
    q = q0.copy()
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    wa = np.empty(4)
    wm = np.empty(4)
    wb = np.empty(4)
    rmin = np.inf
    for i in range(n):
        _exo_rotate(w0, i * h, om, wa)
        _exo_rotate(w0, (i + 0.5) * h, om, wm)
        _exo_rotate(w0, (i + 1.0) * h, om, wb)
        rmin = min(rmin, planner_field(q, wa, u, tnu, txi, center, om, mu, k1))
        rmin = min(rmin, planner_field(q + 0.5 * h * k1, wm, u, tnu, txi, center, om, mu, k2))
        rmin = min(rmin, planner_field(q + 0.5 * h * k2, wm, u, tnu, txi, center, om, mu, k3))
        rmin = min(rmin, planner_field(q + h * k3, wb, u, tnu, txi, center, om, mu, k4))
        q = q + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return q, rmin
