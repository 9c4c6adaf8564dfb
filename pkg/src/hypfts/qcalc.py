"""
The boundary operator R, the transport operator S and the propagation
operator Q = Q_phi on grid functions over [0, 1] x [0, T].

    [R u]_j(t)   = h_j(t, u_in(t))
    [S v]_j(x,t) = c_j * v_j(tau)              tau: exit time of the characteristic
    [Q u]_j(x,t) = [S R u]_j(x,t)              lateral exit
                 = c_j * phi_j(x_exit)         exit on the initial axis

Exit data depend only on the spec and the grid, so they are computed once
per grid and shared by every Q application.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import characteristics
from .pifield import (
    BoundaryTrace,
    InitialData,
    PiField,
    _locate,
    default_nt,
    extract_in_trace,
    grid_nodes,
    sample_Ch,
)
from .system import compatibility_defect, crossing_times, require_valid

__all__ = [
    "ExitTable",
    "QContext",
    "StabilizationError",
    "apply_R",
    "apply_S",
    "apply_SR",
    "apply_Q",
    "q_power",
    "sr_power",
    "stabilization_index",
    "COMPAT_TOL",
]

COMPAT_TOL = 1e-8


class StabilizationError(RuntimeError):
    pass


@dataclass(eq=False)
class ExitTable:
    """Exit data for every grid node and component, arrays (n, nx+1, nt+1)."""

    T: float
    nx: int
    nt: int
    x_exit: np.ndarray
    tau: np.ndarray
    weight: np.ndarray
    lateral: np.ndarray
    lo: np.ndarray  # t-cell index of tau
    frac: np.ndarray  # position of tau inside that cell

    @classmethod
    def build(cls, spec, T, nx, nt, step=characteristics.DEFAULT_STEP):
        x, t = grid_nodes(T, nx, nt)
        X, Tm = np.meshgrid(x, t, indexing="ij")
        parts = [characteristics.trace_many(spec, j, X, Tm, step) for j in range(spec.n)]
        x_exit = np.stack([p.x_exit for p in parts])
        tau = np.stack([p.tau for p in parts])
        weight = np.stack([p.weight for p in parts])
        lateral = np.stack([p.lateral for p in parts])
        lo, frac = _locate(tau / (T / nt), nt)
        return cls(float(T), nx, nt, x_exit, tau, weight, lateral, lo, frac)


class QContext:
    """Everything needed to apply Q_phi on one grid.

    Parameters
    ----------
    spec : SystemSpec
    phi : InitialData
    T : float
        Horizon.
    nx, nt : int
        Grid size; `nt` defaults to `default_nt`.
    exits : ExitTable, optional
        Reuse exit data of another context on the same grid.
    override : bool
        Run even if the spec fails validation.
    """

    def __init__(self, spec, phi, T, nx=64, nt=None, step=characteristics.DEFAULT_STEP,
                 exits=None, override=False):
        require_valid(spec, override=override)
        self.spec = spec
        self.T = float(T)
        self.nx = nx
        self.nt = default_nt(spec, T, nx) if nt is None else nt
        self.step = step
        self.override = override
        if exits is None:
            exits = ExitTable.build(spec, self.T, nx, self.nt, step)
        self.exits = exits
        self.phi = _as_initial(phi, spec.n)
        e = exits
        phi_vals = np.stack([self.phi.at(e.x_exit[j])[j] for j in range(spec.n)])
        self._phi_part = np.where(e.lateral, 0.0, e.weight * phi_vals)

    @property
    def dt(self):
        return self.T / self.nt

    @property
    def x(self):
        return grid_nodes(self.T, self.nx, self.nt)[0]

    @property
    def t(self):
        return grid_nodes(self.T, self.nx, self.nt)[1]

    def with_phi(self, phi):
        return QContext(self.spec, phi, self.T, self.nx, self.nt, self.step,
                        exits=self.exits, override=True)

    def self_check(self, count=32, seed=0):
        """Largest mismatch between cached exits and fresh traces at random nodes."""
        rng = np.random.default_rng(seed)
        x, t = self.x, self.t
        worst = 0.0
        for _ in range(count):
            j = int(rng.integers(self.spec.n))
            i = int(rng.integers(self.nx + 1))
            k = int(rng.integers(self.nt + 1))
            fresh = characteristics.trace(self.spec, j, x[i], t[k], self.step)
            e = self.exits
            if fresh.lateral != bool(e.lateral[j, i, k]):
                return math.inf
            worst = max(worst,
                        abs(fresh.tau - e.tau[j, i, k]),
                        abs(fresh.x_exit - e.x_exit[j, i, k]),
                        abs(fresh.weight - e.weight[j, i, k]))
        return worst


def _as_initial(phi, n):
    if isinstance(phi, InitialData):
        return phi
    if isinstance(phi, PiField):
        return phi.initial()
    if isinstance(phi, (list, tuple)) and phi and isinstance(phi[0], str):
        return InitialData.from_exprs(phi)
    return InitialData(np.asarray(phi, dtype=float).reshape(n, -1))


def _shape_ok(ctx, u):
    if u.data.shape != (ctx.spec.n, ctx.nx + 1, ctx.nt + 1):
        raise ValueError(f"field shape {u.data.shape} does not match the context grid")


def apply_R(ctx, u: PiField) -> BoundaryTrace:
    """[R u](t_k) = h(t_k, u_in(t_k)) on the t-grid."""
    _shape_ok(ctx, u)
    u_in = extract_in_trace(u, ctx.spec).values
    return BoundaryTrace(ctx.T, ctx.spec.h(ctx.t, u_in))


def apply_S(ctx, v: BoundaryTrace) -> PiField:
    """Weight times v_j at the exit time, v interpolated linearly in t.

    Nodes whose characteristic ends on the initial axis get v_j(0).
    """
    e = ctx.exits
    vals = v.values
    out = np.empty(e.tau.shape)
    for j in range(ctx.spec.n):
        lo, f = e.lo[j], e.frac[j]
        out[j] = e.weight[j] * (vals[j, lo] * (1 - f) + vals[j, lo + 1] * f)
    return PiField(ctx.T, out)


def apply_SR(ctx, u: PiField) -> PiField:
    return apply_S(ctx, apply_R(ctx, u))


def apply_Q(ctx, u: PiField, check=True) -> PiField:
    """One application of Q_phi."""
    if check:
        defect = np.max(np.abs(compatibility_defect(ctx.spec, u.data[:, :, 0])))
        if defect > COMPAT_TOL:
            warnings.warn(f"field is not compatible with the boundary map (defect {defect:.3g})",
                          stacklevel=2)
    sr = apply_SR(ctx, u).data
    return PiField(ctx.T, np.where(ctx.exits.lateral, sr, ctx._phi_part))


def q_power(ctx, w: PiField, k: int, keep=False):
    """Q^k w; with `keep`, also the list of iterates Q^1 w .. Q^k w."""
    if k < 1:
        raise ValueError("k must be positive")
    iterates = []
    u = apply_Q(ctx, w)
    for _ in range(k - 1):
        if keep:
            iterates.append(u)
        u = apply_Q(ctx, u, check=False)
    if keep:
        iterates.append(u)
        return u, iterates
    return u


def sr_power(ctx, w: PiField, k: int) -> PiField:
    u = w
    for _ in range(k):
        u = apply_SR(ctx, u)
    return u


def q_bound(ctx):
    """Iteration cap ceil(T / t_eff) + 1.

    t_eff is the shortest crossing time, less one time step when exits fall
    between nodes (linear interpolation can reach one step forward).
    """
    t_min = float(crossing_times(ctx.spec, ctx.T)[:, 0].min())
    aligned = bool(np.all(ctx.exits.frac[ctx.exits.lateral] == 0.0))
    t_eff = t_min if aligned else t_min - ctx.dt
    if t_eff <= 0:
        raise StabilizationError(
            f"time step {ctx.dt:.3g} is not below the shortest crossing time {t_min:.3g}")
    return math.ceil(ctx.T / t_eff - 1e-12) + 1


def stabilization_index(ctx, witnesses=8, tol=1e-10, seed=0, fields=None):
    """Least q with Q^q w = Q^(q+1) w (sup over the grid <= tol).

    Checked on `witnesses` seeded fields from `sample_Ch` (or on `fields`),
    each with phi = w(., 0).

    Raises
    ------
    StabilizationError
        If no q up to `q_bound(ctx)` works.
    """
    bound = q_bound(ctx)
    if fields is None:
        fields = [sample_Ch(ctx.spec, ctx.T, seed + i, nx=ctx.nx, nt=ctx.nt)
                  for i in range(witnesses)]
    ctxs = [ctx.with_phi(w.initial()) for w in fields]
    cur = [apply_Q(c, w) for c, w in zip(ctxs, fields)]
    for q in range(1, bound + 1):
        nxt = [apply_Q(c, u, check=False) for c, u in zip(ctxs, cur)]
        diff = max(float(np.max(np.abs(a.data - b.data))) for a, b in zip(cur, nxt))
        if diff <= tol:
            return q
        cur = nxt
    raise StabilizationError(f"Q^q did not stabilize for q <= {bound}")
