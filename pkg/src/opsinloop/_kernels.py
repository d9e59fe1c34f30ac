"""Compiled inner loops.

Forward Euler simulation, the discrete adjoint passes used for parameter
and stimulus gradients, and the Euler-Maruyama path integrator.  The loop
calls these hundreds of thousands of times, so they are written per model
kind with scalar arithmetic and no allocation inside the time loop.

Everything here is private.  Kernels never raise: forward passes report the
first step index at which the state left the admissible region (-1 when the
trajectory stayed admissible) and the callers translate that into errors or
sentinel values.

The adjoint recursion, shared by all kernels: with residual weights
``c_m = dL/dy_m`` and output gains ``g``,

    lam_N = c_N * g
    lam_m = c_m * g + lam_{m+1} + dt * F_x(X_m, u_m)^T lam_{m+1}

and the parameter / stimulus gradients accumulate ``dt * F_theta^T lam_{m+1}``
and ``dt * F_u . lam_{m+1}`` evaluated at ``(X_m, u_m)`` before each update.
"""

import numpy as np
from numba import njit

# Tolerance for the state bounds during integration: every integrated (free)
# component must stay inside [-STATE_TOL, 1 + STATE_TOL].  The eliminated
# component is deliberately not checked: the published six-state parameters
# contain a negative rate that pushes it a few 1e-5 below zero under strong
# light, which is expected behaviour, not divergence.
STATE_TOL = 1e-9

KIND3 = 3
KIND4 = 4
KIND6 = 6


# ----------------------------------------------------------------- forward

@njit(cache=True)
def sim3(theta, u, dt, x0):
    n = u.shape[0]
    xs = np.empty((n, 2))
    xs[0, 0] = x0[0]
    xs[0, 1] = x0[1]
    t1, t2, t3 = theta[0], theta[1], theta[2]
    for m in range(n - 1):
        x1 = xs[m, 0]
        x2 = xs[m, 1]
        um = u[m]
        x3 = 1.0 - x1 - x2
        n1 = x1 + dt * (t1 * um * x3 - t2 * x1)
        n2 = x2 + dt * (t2 * x1 - t3 * um * x2)
        xs[m + 1, 0] = n1
        xs[m + 1, 1] = n2
        if not (n1 >= -STATE_TOL and n1 <= 1.0 + STATE_TOL
                and n2 >= -STATE_TOL and n2 <= 1.0 + STATE_TOL):
            return xs, m + 1
    return xs, -1


@njit(cache=True)
def sim4(theta, u, dt, x0):
    n = u.shape[0]
    xs = np.empty((n, 3))
    xs[0, 0] = x0[0]
    xs[0, 1] = x0[1]
    xs[0, 2] = x0[2]
    t1, t2, t3, t4, t5, t6, t7 = (theta[0], theta[1], theta[2], theta[3],
                                  theta[4], theta[5], theta[6])
    for m in range(n - 1):
        x1 = xs[m, 0]
        x2 = xs[m, 1]
        x3 = xs[m, 2]
        um = u[m]
        x4 = 1.0 - x1 - x2 - x3
        n1 = x1 + dt * (t1 * um * x4 + t2 * um * x2 - (t3 + t4 * um) * x1)
        n2 = x2 + dt * (t5 * um * x3 + t4 * um * x1 - (t6 + t2 * um) * x2)
        n3 = x3 + dt * (t6 * x2 - (t7 + t5 * um) * x3)
        xs[m + 1, 0] = n1
        xs[m + 1, 1] = n2
        xs[m + 1, 2] = n3
        if not (n1 >= -STATE_TOL and n1 <= 1.0 + STATE_TOL
                and n2 >= -STATE_TOL and n2 <= 1.0 + STATE_TOL
                and n3 >= -STATE_TOL and n3 <= 1.0 + STATE_TOL):
            return xs, m + 1
    return xs, -1


@njit(cache=True)
def sim6(theta, u, dt, x0):
    n = u.shape[0]
    xs = np.empty((n, 5))
    for i in range(5):
        xs[0, i] = x0[i]
    t1, t2, t3, t4, t5 = theta[0], theta[1], theta[2], theta[3], theta[4]
    t6, t7, t8, t9 = theta[5], theta[6], theta[7], theta[8]
    for m in range(n - 1):
        x1 = xs[m, 0]
        x2 = xs[m, 1]
        x3 = xs[m, 2]
        x4 = xs[m, 3]
        x5 = xs[m, 4]
        um = u[m]
        x6 = 1.0 - x1 - x2 - x3 - x4 - x5
        n1 = x1 + dt * (t1 * um * x6 - t2 * x1)
        n2 = x2 + dt * (t2 * x1 + t3 * um * x3 - (t4 + t5 * um) * x2)
        n3 = x3 + dt * (t6 * x4 + t5 * um * x2 - (t7 + t3 * um) * x3)
        n4 = x4 + dt * (t8 * um * x5 - t6 * x4)
        n5 = x5 + dt * (t7 * x3 - (t9 + t8 * um) * x5)
        xs[m + 1, 0] = n1
        xs[m + 1, 1] = n2
        xs[m + 1, 2] = n3
        xs[m + 1, 3] = n4
        xs[m + 1, 4] = n5
        if not (n1 >= -STATE_TOL and n1 <= 1.0 + STATE_TOL
                and n2 >= -STATE_TOL and n2 <= 1.0 + STATE_TOL
                and n3 >= -STATE_TOL and n3 <= 1.0 + STATE_TOL
                and n4 >= -STATE_TOL and n4 <= 1.0 + STATE_TOL
                and n5 >= -STATE_TOL and n5 <= 1.0 + STATE_TOL):
            return xs, m + 1
    return xs, -1


# --------------------------------------------- fused loss + parameter grad

@njit(cache=True)
def fit_pass3(theta, u, z, w, dt, x0):
    xs, bad = sim3(theta, u, dt, x0)
    grad = np.zeros(4)
    if bad >= 0:
        return 0.0, grad, bad
    n = u.shape[0]
    t1, t2, t3, t4 = theta[0], theta[1], theta[2], theta[3]
    xN = xs[n - 1, 0]
    r = t4 * xN - z[n - 1]
    c = 2.0 * w[n - 1] * r
    loss = w[n - 1] * r * r
    grad[3] += c * xN
    l1 = c * t4
    l2 = 0.0
    for m in range(n - 2, -1, -1):
        x1 = xs[m, 0]
        x2 = xs[m, 1]
        um = u[m]
        x3 = 1.0 - x1 - x2
        grad[0] += dt * (um * x3 * l1)
        grad[1] += dt * (x1 * (l2 - l1))
        grad[2] += dt * (-um * x2 * l2)
        r = t4 * x1 - z[m]
        c = 2.0 * w[m] * r
        loss += w[m] * r * r
        grad[3] += c * x1
        f11 = -(t1 * um + t2)
        f12 = -t1 * um
        f21 = t2
        f22 = -t3 * um
        nl1 = c * t4 + l1 + dt * (f11 * l1 + f21 * l2)
        nl2 = l2 + dt * (f12 * l1 + f22 * l2)
        l1 = nl1
        l2 = nl2
    return loss, grad, -1


@njit(cache=True)
def fit_pass4(theta, u, z, w, dt, x0):
    xs, bad = sim4(theta, u, dt, x0)
    grad = np.zeros(9)
    if bad >= 0:
        return 0.0, grad, bad
    n = u.shape[0]
    t1, t2, t3, t4, t5, t6, t7 = (theta[0], theta[1], theta[2], theta[3],
                                  theta[4], theta[5], theta[6])
    t8, t9 = theta[7], theta[8]
    x1 = xs[n - 1, 0]
    x2 = xs[n - 1, 1]
    r = t9 * x1 + t8 * x2 - z[n - 1]
    c = 2.0 * w[n - 1] * r
    loss = w[n - 1] * r * r
    grad[7] += c * x2
    grad[8] += c * x1
    l1 = c * t9
    l2 = c * t8
    l3 = 0.0
    for m in range(n - 2, -1, -1):
        x1 = xs[m, 0]
        x2 = xs[m, 1]
        x3 = xs[m, 2]
        um = u[m]
        x4 = 1.0 - x1 - x2 - x3
        grad[0] += dt * (um * x4 * l1)
        grad[1] += dt * (um * x2 * (l1 - l2))
        grad[2] += dt * (-x1 * l1)
        grad[3] += dt * (um * x1 * (l2 - l1))
        grad[4] += dt * (um * x3 * (l2 - l3))
        grad[5] += dt * (x2 * (l3 - l2))
        grad[6] += dt * (-x3 * l3)
        r = t9 * x1 + t8 * x2 - z[m]
        c = 2.0 * w[m] * r
        loss += w[m] * r * r
        grad[7] += c * x2
        grad[8] += c * x1
        f11 = -t1 * um - (t3 + t4 * um)
        f12 = (t2 - t1) * um
        f13 = -t1 * um
        f21 = t4 * um
        f22 = -(t6 + t2 * um)
        f23 = t5 * um
        f32 = t6
        f33 = -(t7 + t5 * um)
        nl1 = c * t9 + l1 + dt * (f11 * l1 + f21 * l2)
        nl2 = c * t8 + l2 + dt * (f12 * l1 + f22 * l2 + f32 * l3)
        nl3 = l3 + dt * (f13 * l1 + f23 * l2 + f33 * l3)
        l1 = nl1
        l2 = nl2
        l3 = nl3
    return loss, grad, -1


@njit(cache=True)
def fit_pass6(theta, u, z, w, dt, x0):
    xs, bad = sim6(theta, u, dt, x0)
    grad = np.zeros(11)
    if bad >= 0:
        return 0.0, grad, bad
    n = u.shape[0]
    t1, t2, t3, t4, t5 = theta[0], theta[1], theta[2], theta[3], theta[4]
    t6, t7, t8, t9 = theta[5], theta[6], theta[7], theta[8]
    t10, t11 = theta[9], theta[10]
    x2 = xs[n - 1, 1]
    x3 = xs[n - 1, 2]
    r = t11 * x2 + t10 * x3 - z[n - 1]
    c = 2.0 * w[n - 1] * r
    loss = w[n - 1] * r * r
    grad[9] += c * x3
    grad[10] += c * x2
    l1 = 0.0
    l2 = c * t11
    l3 = c * t10
    l4 = 0.0
    l5 = 0.0
    for m in range(n - 2, -1, -1):
        x1 = xs[m, 0]
        x2 = xs[m, 1]
        x3 = xs[m, 2]
        x4 = xs[m, 3]
        x5 = xs[m, 4]
        um = u[m]
        x6 = 1.0 - x1 - x2 - x3 - x4 - x5
        grad[0] += dt * (um * x6 * l1)
        grad[1] += dt * (x1 * (l2 - l1))
        grad[2] += dt * (um * x3 * (l2 - l3))
        grad[3] += dt * (-x2 * l2)
        grad[4] += dt * (um * x2 * (l3 - l2))
        grad[5] += dt * (x4 * (l3 - l4))
        grad[6] += dt * (x3 * (l5 - l3))
        grad[7] += dt * (um * x5 * (l4 - l5))
        grad[8] += dt * (-x5 * l5)
        r = t11 * x2 + t10 * x3 - z[m]
        c = 2.0 * w[m] * r
        loss += w[m] * r * r
        grad[9] += c * x3
        grad[10] += c * x2
        a = t1 * um
        nl1 = l1 + dt * (-(a + t2) * l1 + t2 * l2)
        nl2 = c * t11 + l2 + dt * (-a * l1 - (t4 + t5 * um) * l2 + t5 * um * l3)
        nl3 = c * t10 + l3 + dt * (-a * l1 + t3 * um * l2 - (t7 + t3 * um) * l3 + t7 * l5)
        nl4 = l4 + dt * (-a * l1 + t6 * l3 - t6 * l4)
        nl5 = l5 + dt * (-a * l1 + t8 * um * l4 - (t9 + t8 * um) * l5)
        l1 = nl1
        l2 = nl2
        l3 = nl3
        l4 = nl4
        l5 = nl5
    return loss, grad, -1


# ------------------------------------------------ stimulus (input) adjoint

@njit(cache=True)
def input_adjoint3(theta, u, coeff, dt, xs):
    """d/du of sum_m coeff_m * y_m for a fixed stored trajectory ``xs``."""
    n = u.shape[0]
    du = np.zeros(n)
    t1, t2, t3, t4 = theta[0], theta[1], theta[2], theta[3]
    l1 = coeff[n - 1] * t4
    l2 = 0.0
    for m in range(n - 2, -1, -1):
        x1 = xs[m, 0]
        x2 = xs[m, 1]
        um = u[m]
        x3 = 1.0 - x1 - x2
        du[m] = dt * (t1 * x3 * l1 - t3 * x2 * l2)
        c = coeff[m]
        f11 = -(t1 * um + t2)
        f12 = -t1 * um
        f21 = t2
        f22 = -t3 * um
        nl1 = c * t4 + l1 + dt * (f11 * l1 + f21 * l2)
        nl2 = l2 + dt * (f12 * l1 + f22 * l2)
        l1 = nl1
        l2 = nl2
    return du


@njit(cache=True)
def input_adjoint4(theta, u, coeff, dt, xs):
    n = u.shape[0]
    du = np.zeros(n)
    t1, t2, t3, t4, t5, t6, t7 = (theta[0], theta[1], theta[2], theta[3],
                                  theta[4], theta[5], theta[6])
    t8, t9 = theta[7], theta[8]
    l1 = coeff[n - 1] * t9
    l2 = coeff[n - 1] * t8
    l3 = 0.0
    for m in range(n - 2, -1, -1):
        x1 = xs[m, 0]
        x2 = xs[m, 1]
        x3 = xs[m, 2]
        um = u[m]
        x4 = 1.0 - x1 - x2 - x3
        du[m] = dt * ((t1 * x4 + t2 * x2 - t4 * x1) * l1
                      + (t5 * x3 + t4 * x1 - t2 * x2) * l2
                      - t5 * x3 * l3)
        c = coeff[m]
        f11 = -t1 * um - (t3 + t4 * um)
        f12 = (t2 - t1) * um
        f13 = -t1 * um
        f21 = t4 * um
        f22 = -(t6 + t2 * um)
        f23 = t5 * um
        f32 = t6
        f33 = -(t7 + t5 * um)
        nl1 = c * t9 + l1 + dt * (f11 * l1 + f21 * l2)
        nl2 = c * t8 + l2 + dt * (f12 * l1 + f22 * l2 + f32 * l3)
        nl3 = l3 + dt * (f13 * l1 + f23 * l2 + f33 * l3)
        l1 = nl1
        l2 = nl2
        l3 = nl3
    return du


@njit(cache=True)
def input_adjoint6(theta, u, coeff, dt, xs):
    n = u.shape[0]
    du = np.zeros(n)
    t1, t2, t3, t4, t5 = theta[0], theta[1], theta[2], theta[3], theta[4]
    t6, t7, t8, t9 = theta[5], theta[6], theta[7], theta[8]
    t10, t11 = theta[9], theta[10]
    l1 = 0.0
    l2 = coeff[n - 1] * t11
    l3 = coeff[n - 1] * t10
    l4 = 0.0
    l5 = 0.0
    for m in range(n - 2, -1, -1):
        x1 = xs[m, 0]
        x2 = xs[m, 1]
        x3 = xs[m, 2]
        x4 = xs[m, 3]
        x5 = xs[m, 4]
        um = u[m]
        x6 = 1.0 - x1 - x2 - x3 - x4 - x5
        du[m] = dt * (t1 * x6 * l1
                      + (t3 * x3 - t5 * x2) * l2
                      + (t5 * x2 - t3 * x3) * l3
                      + t8 * x5 * l4
                      - t8 * x5 * l5)
        c = coeff[m]
        a = t1 * um
        nl1 = l1 + dt * (-(a + t2) * l1 + t2 * l2)
        nl2 = c * t11 + l2 + dt * (-a * l1 - (t4 + t5 * um) * l2 + t5 * um * l3)
        nl3 = c * t10 + l3 + dt * (-a * l1 + t3 * um * l2 - (t7 + t3 * um) * l3 + t7 * l5)
        nl4 = l4 + dt * (-a * l1 + t6 * l3 - t6 * l4)
        nl5 = l5 + dt * (-a * l1 + t8 * um * l4 - (t9 + t8 * um) * l5)
        l1 = nl1
        l2 = nl2
        l3 = nl3
        l4 = nl4
        l5 = nl5
    return du


# ----------------------------------------------------- stochastic sampling

@njit(cache=True)
def sde_path(kind_id, theta, u, dt, x0, alpha, normals, xs):
    """Euler-Maruyama on the full simplex, renormalized each step.

    ``xs`` is the (n_points, n_states) output buffer; ``normals`` holds one
    standard-normal draw per (step, state).  Negative components are clamped
    to zero before renormalization; the return value counts steps on which a
    clamp fired.
    """
    n = u.shape[0]
    ns = x0.shape[0]
    for i in range(ns):
        xs[0, i] = x0[i]
    f = np.empty(ns)
    v = np.empty(ns)
    sqdt = np.sqrt(dt)
    clamped = 0
    for m in range(n - 1):
        um = u[m]
        if kind_id == KIND3:
            f[0] = theta[0] * um * xs[m, 2] - theta[1] * xs[m, 0]
            f[1] = theta[1] * xs[m, 0] - theta[2] * um * xs[m, 1]
            f[2] = -(f[0] + f[1])
        elif kind_id == KIND4:
            x1 = xs[m, 0]
            x2 = xs[m, 1]
            x3 = xs[m, 2]
            x4 = xs[m, 3]
            f[0] = theta[0] * um * x4 + theta[1] * um * x2 - (theta[2] + theta[3] * um) * x1
            f[1] = theta[4] * um * x3 + theta[3] * um * x1 - (theta[5] + theta[1] * um) * x2
            f[2] = theta[5] * x2 - (theta[6] + theta[4] * um) * x3
            f[3] = -(f[0] + f[1] + f[2])
        else:
            x1 = xs[m, 0]
            x2 = xs[m, 1]
            x3 = xs[m, 2]
            x4 = xs[m, 3]
            x5 = xs[m, 4]
            x6 = xs[m, 5]
            f[0] = theta[0] * um * x6 - theta[1] * x1
            f[1] = theta[1] * x1 + theta[2] * um * x3 - (theta[3] + theta[4] * um) * x2
            f[2] = theta[5] * x4 + theta[4] * um * x2 - (theta[6] + theta[2] * um) * x3
            f[3] = theta[7] * um * x5 - theta[5] * x4
            f[4] = theta[6] * x3 - (theta[8] + theta[7] * um) * x5
            f[5] = -(f[0] + f[1] + f[2] + f[3] + f[4])
        s = 0.0
        for i in range(ns):
            xi = xs[m, i]
            root = np.sqrt(xi) if xi > 0.0 else 0.0
            vi = root * normals[m, i]
            v[i] = vi
            s += vi
        did_clamp = False
        total = 0.0
        for i in range(ns):
            nx = xs[m, i] + dt * f[i] + alpha * sqdt * (v[i] - xs[m, i] * s)
            if nx < 0.0:
                nx = 0.0
                did_clamp = True
            xs[m + 1, i] = nx
            total += nx
        if total <= 1e-12:
            # Noise annihilated the whole state; collapse to rest.
            for i in range(ns):
                xs[m + 1, i] = 0.0
            xs[m + 1, ns - 1] = 1.0
            did_clamp = True
        else:
            inv = 1.0 / total
            for i in range(ns):
                xs[m + 1, i] *= inv
        if did_clamp:
            clamped += 1
    return clamped
