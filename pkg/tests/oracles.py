"""
Independent reference solutions used by the tests.

Nothing here imports the package: the oracles are written directly from the
method of characteristics for the unit-speed pair a = (1, -1), where
characteristics are straight lines and every value is a finite recursion
through the boundary conditions.
"""

import math
from functools import lru_cache

import numpy as np
from scipy.integrate import quad, quad_vec


def unit_pair_solution(phi, h1, h2):
    """Return u(j, x, t) for u1_t + u1_x = 0, u2_t - u2_x = 0 on [0, 1].

    Boundary conditions u1(0, t) = h1(t, y1, y2) and u2(1, t) = h2(t, y1, y2)
    with y1 = u1(1, t), y2 = u2(0, t). `phi` maps (j, x) to the initial value.
    """

    @lru_cache(maxsize=None)
    def u(j, x, t):
        x, t = round(x, 12), round(t, 12)
        if j == 0:
            if x >= t:
                return phi(0, x - t)
            s = t - x
            return h1(s, u(0, 1.0, s), u(1, 0.0, s))
        if x + t <= 1.0:
            return phi(1, x + t)
        s = t + x - 1.0
        return h2(s, u(0, 1.0, s), u(1, 0.0, s))

    return u


def window_zero(t, t0, t1):
    if t < t0:
        return t0 - t
    if t > t1:
        return t - t1
    return 0.0


def sine_coupling(r, s):
    """Boundary pair u1(0) = r sin(u2(0)), u2(1) = sin^2(s u1(1))."""
    return (lambda t, y1, y2: r(t) * math.sin(y2),
            lambda t, y1, y2: math.sin(s(t) * y1) ** 2)


def crossing_time_quad(inverse_speed):
    """int_0^1 dxi / |a(xi)| by adaptive quadrature."""
    value, _ = quad(inverse_speed, 0.0, 1.0, epsabs=1e-14, epsrel=1e-14)
    return value


def coupled_pair_semigroup(v, t, x):
    """S(t) v for unit speeds with u1(0, t) = 0 and u2(1, t) = u1(1, t).

    `v` is a pair of vectorised callables; the result has shape (2, len(x)).
    Component 1 is transported right and absorbed; component 2 is transported
    left and fed by the reflection of component 1 at x = 1.
    """
    x = np.asarray(x, dtype=float)
    first = np.where(x >= t, v[0](np.clip(x - t, 0, 1)), 0.0)
    fed = 2.0 - x - t
    second = np.where(x + t <= 1.0, v[1](np.clip(x + t, 0, 1)),
                      np.where(fed >= 0.0, v[0](np.clip(fed, 0, 1)), 0.0))
    return np.array([first, second])


def coupled_pair_duhamel(u0, f, t, x):
    """S(t) u0 + int_0^t S(s) f ds by adaptive vector quadrature."""
    x = np.asarray(x, dtype=float)
    if t == 0:
        return coupled_pair_semigroup(u0, 0.0, x)
    integral, _ = quad_vec(lambda s: coupled_pair_semigroup(f, s, x), 0.0, t,
                           epsabs=1e-12, epsrel=1e-12, limit=2000)
    return coupled_pair_semigroup(u0, t, x) + integral


def sine_coupling_Q(u, phi, r, s, nx):
    """One application of Q for the unit-speed sine coupling on an aligned grid.

    Node (i, k) sits at x = i/nx, t = k/nx, so every characteristic foot is a
    grid node and the map is pure index arithmetic. `r` and `s` must accept
    arrays of times.
    """
    _, nx1, nt1 = u.shape
    i, k = np.meshgrid(np.arange(nx1), np.arange(nt1), indexing="ij")
    out = np.empty_like(u)
    lag1 = np.clip(k - i, 0, None)
    out[0] = np.where(i > k, phi[0, np.clip(i - k, 0, nx)],
                      r(lag1 / nx) * np.sin(u[1, 0, lag1]))
    lag2 = np.clip(i + k - nx, 0, None)
    out[1] = np.where(i + k < nx, phi[1, np.clip(i + k, 0, nx)],
                      np.sin(s(lag2 / nx) * u[0, nx, lag2]) ** 2)
    return out
