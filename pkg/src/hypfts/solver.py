"""
Continuous solutions through powers of Q, an independent time-marching
solver, residual diagnostics and mollified approximations of L^2 data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import characteristics
from .exprlang import bump_profile
from .pifield import InitialData, PiField, default_nt, grid_nodes
from .qcalc import COMPAT_TOL, QContext, _as_initial, apply_Q, q_power, stabilization_index
from .system import compatibility_defect, crossing_times, out_side, require_valid

__all__ = [
    "IncompatibleDataError",
    "solve_qpower",
    "solve_marching",
    "residuals",
    "Residuals",
    "solve_l2",
    "L2Report",
    "mollify",
    "compat_correct",
    "l2_norm",
]


class IncompatibleDataError(ValueError):
    pass


def _check_compat(spec, phi, tol=COMPAT_TOL):
    defect = float(np.max(np.abs(compatibility_defect(spec, phi))))
    if defect > tol:
        raise IncompatibleDataError(
            f"initial data violate phi_out = h(0, phi_in) (defect {defect:.3g})")
    return defect


def solve_qpower(spec, phi, T, nx=64, nt=None, *, ctx=None, override=False,
                 return_index=False):
    """Continuous solution on [0, 1] x [0, T] as Q^q w.

    The seed is the t-constant extension w(x, t) = phi(x); q is the
    stabilization index of the grid.
    """
    phi = _as_initial(phi, spec.n)
    _check_compat(spec, phi)
    if ctx is None:
        ctx = QContext(spec, phi, T, nx, nt, override=override)
    elif ctx.phi is not phi:
        ctx = ctx.with_phi(phi)
    w = PiField(ctx.T, np.repeat(phi.on_grid(ctx.nx)[:, :, None], ctx.nt + 1, axis=2))
    q = getattr(ctx.exits, "q_index", None)
    if q is None:
        q = stabilization_index(ctx)
        ctx.exits.q_index = q
    u = q_power(ctx, w, q)
    return (u, q) if return_index else u


def solve_marching(spec, phi, T, nx=64, nt=None, *, override=False,
                   step=characteristics.DEFAULT_STEP):
    """Continuous solution by causal time stepping.

    At each time level the in-trace is read off characteristics that reach
    back at least one crossing time, the boundary values are set from h, and
    the remaining nodes are filled by pulling back to the initial axis or to
    the stored boundary history.
    """
    require_valid(spec, override=override)
    phi = _as_initial(phi, spec.n)
    _check_compat(spec, phi)
    nt = default_nt(spec, T, nx) if nt is None else nt
    x, t = grid_nodes(T, nx, nt)
    dt = T / nt
    t_min = float(crossing_times(spec, T)[:, 0].min())
    if dt > t_min * (1 + 1e-12):
        raise ValueError(f"time step {dt:.3g} exceeds the shortest crossing time {t_min:.3g}")

    n, m = spec.n, spec.m
    X, Tm = np.meshgrid(x, t, indexing="ij")
    exits = [characteristics.trace_many(spec, j, X, Tm, step) for j in range(n)]
    u = np.zeros((n, nx + 1, nt + 1))
    bvals = np.zeros((n, nt + 1))  # out-trace history
    i_in = [nx if j < m else 0 for j in range(n)]

    def pull(j, rows, k):
        ex = exits[j]
        tau, lat = ex.tau[rows, k], ex.lateral[rows, k]
        hist = np.interp(tau, t[: k + 1], bvals[j, : k + 1])
        init = phi.at(ex.x_exit[rows, k])[j]
        return ex.weight[rows, k] * np.where(lat, hist, init)

    for k in range(nt + 1):
        u_in = np.empty(n)
        for j in range(n):
            ex = exits[j]
            if k > 0 and ex.lateral[i_in[j], k] and ex.tau[i_in[j], k] > t[k - 1] + 1e-12:
                raise RuntimeError("in-trace depends on the current time level")
            u_in[j] = pull(j, [i_in[j]], k)[0]
        bvals[:, k] = spec.h(t[k], u_in)
        for j in range(n):
            u[j, :, k] = pull(j, slice(None), k)
    return PiField(float(T), u)


@dataclass
class Residuals:
    fixed_point: float
    pde: float
    initial: float
    boundary: float
    excluded_fraction: float = 0.0

    def __str__(self):
        return (
            f"fixed_point {self.fixed_point:.3e}\n"
            f"pde         {self.pde:.3e}  (excluded {100 * self.excluded_fraction:.1f}% of nodes)\n"
            f"initial     {self.initial:.3e}\n"
            f"boundary    {self.boundary:.3e}"
        )

    def as_dict(self):
        return {k: getattr(self, k) for k in
                ("fixed_point", "pde", "initial", "boundary", "excluded_fraction")}


def _kink_times(spec, T, cap=256):
    """Boundary times where traces may lose C^1: 0 and its arrivals."""
    kinks = {0.0}
    frontier = [0.0]
    while frontier and len(kinks) < cap:
        kappa = frontier.pop()
        for j in range(spec.n):
            arr = kappa + float(characteristics.crossing_time(spec, j, np.array([kappa]))[0])
            key = round(arr, 12)
            if arr <= T and key not in kinks:
                kinks.add(key)
                frontier.append(key)
    return np.array(sorted(kinks))


def residuals(spec, u: PiField, phi, *, ctx=None, tube=2, override=False) -> Residuals:
    """Fixed-point, PDE, initial and boundary residuals of a grid solution.

    The PDE residual uses central differences at interior nodes and skips a
    `tube`-cell neighbourhood of the characteristics issued from the corners
    and from their reflections, across which solutions are only continuous.
    """
    phi = _as_initial(phi, spec.n)
    if ctx is None:
        ctx = QContext(spec, phi, u.T, u.nx, u.nt, override=override)
    fixed = float(np.max(np.abs(u.data - apply_Q(ctx, u, check=False).data)))

    x, t = u.x, u.t
    initial = float(np.max(np.abs(u.data[:, :, 0] - phi.on_grid(u.nx))))
    left, right = u.data[:, 0, :], u.data[:, -1, :]
    boundary = float(np.max(np.abs(spec.out_of(left, right) - spec.h(t, spec.in_of(left, right)))))

    kinks = _kink_times(spec, u.T)
    e = ctx.exits
    dx, dt = 1.0 / u.nx, u.dt
    X, Tm = np.meshgrid(x[1:-1], t[1:-1], indexing="ij")
    pde = 0.0
    excluded = 0
    for j in range(spec.n):
        label = np.where(e.lateral[j], np.searchsorted(kinks, e.tau[j] - 1e-12), -1)
        size = 2 * tube + 1
        mixed = (ndimage.maximum_filter(label, size=size, mode="nearest")
                 != ndimage.minimum_filter(label, size=size, mode="nearest"))
        keep = ~mixed[1:-1, 1:-1]
        d = u.data[j]
        ut = (d[1:-1, 2:] - d[1:-1, :-2]) / (2 * dt)
        ux = (d[2:, 1:-1] - d[:-2, 1:-1]) / (2 * dx)
        r = ut + spec.speed(j, X, Tm) * ux + spec.damping(j, X, Tm) * d[1:-1, 1:-1]
        if keep.any():
            pde = max(pde, float(np.max(np.abs(r[keep]))))
        excluded += int((~keep).sum())
    frac = excluded / max(1, spec.n * X.size)
    return Residuals(fixed, pde, initial, boundary, frac)


# --- L^2 data -------------------------------------------------------------------


def _kernel(s):
    return np.where(np.abs(s) < 1, (1 - s * s) ** 3, 0.0)


def mollify(phi_rough, radius, nx, fine=None):
    """Reflect-and-convolve mollification evaluated on the nodes i/nx.

    `phi_rough` is a callable x -> (n, ...) values or an (n, N+1) array of
    samples on a uniform grid. The data are extended evenly across x = 0 and
    x = 1 before convolving with the kernel (1 - (s/radius)^2)^3, so only
    values inside [0, 1] are used and the result is C^1 with zero slope at
    the ends.
    """
    if fine is None:
        fine = max(2000, int(np.ceil(60 / radius)))
    xf = (np.arange(fine) + 0.5) / fine
    if callable(phi_rough):
        vals = np.atleast_2d(np.asarray(phi_rough(xf), dtype=float))
    else:
        samples = np.atleast_2d(np.asarray(phi_rough, dtype=float))
        vals = InitialData(samples).at(xf)
    x = np.arange(nx + 1) / nx
    # symmetric extension: y -> -y and y -> 2 - y
    ys = np.concatenate([-xf[::-1], xf, 2 - xf[::-1]])
    vs = np.concatenate([vals[:, ::-1], vals, vals[:, ::-1]], axis=1)
    K = _kernel((x[:, None] - ys[None, :]) / radius)
    K /= K.sum(axis=1, keepdims=True)
    return (K @ vs.T).T


def compat_correct(spec, values, radius):
    """Add bumps of `radius` at the out-corners so phi_out = h(0, phi_in)."""
    values = np.array(values, dtype=float)
    nx = values.shape[1] - 1
    x = np.arange(nx + 1) / nx
    left, right = values[:, 0], values[:, -1]
    delta = spec.h(0.0, spec.in_of(left, right)) - spec.out_of(left, right)
    for j in range(spec.n):
        if delta[j] != 0.0:
            values[j] += delta[j] * bump_profile(x - out_side(j, spec.m), radius, 1.0)
    return values


def l2_norm(values, axis=-1):
    """L^2(0, 1)^n norm of samples on a uniform grid (trapezoid rule)."""
    values = np.asarray(values, dtype=float)
    nx = values.shape[axis] - 1
    sq = np.sum(values**2, axis=0)
    return float(np.sqrt(np.trapezoid(sq, dx=1.0 / nx, axis=-1)))


@dataclass
class L2Report:
    radii: list
    slice_times: np.ndarray
    distances: np.ndarray  # (len(radii) - 1, len(slice_times))
    fields: list = field(repr=False, default_factory=list)

    @property
    def sup_distances(self):
        return self.distances.max(axis=1)

    @property
    def monotone(self):
        d = self.sup_distances
        return bool(np.all(np.diff(d) < 0))

    def __str__(self):
        lines = ["radius_pair            sup_t L2 distance"]
        for k, d in enumerate(self.sup_distances):
            lines.append(f"{self.radii[k]:.4g} vs {self.radii[k + 1]:.4g}      {d:.4e}")
        lines.append(f"monotone: {self.monotone}")
        return "\n".join(lines)


def solve_l2(spec, phi_rough, T, radii=(0.1, 0.05, 0.025), nx=200, nt=None,
             n_slices=9, override=False):
    """Approximate the L^2-generalized solution for rough initial data.

    Each radius gives a mollified, compatibility-corrected initial function
    solved through `solve_qpower`; the report holds L^2(0, 1) distances of
    consecutive approximations on `n_slices` time slices. Returns the field
    for the smallest radius and the report.
    """
    radii = sorted(radii, reverse=True)
    ctx = None
    fields = []
    for eps in radii:
        vals = compat_correct(spec, mollify(phi_rough, eps, nx), min(eps, 0.25))
        phi = InitialData(vals)
        if ctx is None:
            ctx = QContext(spec, phi, T, nx, nt, override=override)
        fields.append(solve_qpower(spec, phi, T, ctx=ctx))
    ts = np.linspace(0.0, T, n_slices)
    dist = np.array([
        [l2_norm(a.slice(s) - b.slice(s)) for s in ts]
        for a, b in zip(fields[:-1], fields[1:])
    ]).reshape(len(fields) - 1, len(ts))
    return fields[-1], L2Report(list(radii), ts, dist, fields)
