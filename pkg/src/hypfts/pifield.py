"""
Grid functions on the strip [0, 1] x [0, T], boundary traces and initial data.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from .exprlang import evaluate, parse, bump_profile
from .system import out_side

__all__ = [
    "PiField",
    "BoundaryTrace",
    "InitialData",
    "grid_nodes",
    "default_nt",
    "max_speed",
    "extract_in_trace",
    "extract_out_trace",
    "sample_Ch",
    "sup_norm",
    "write_csv",
    "CORNER_RADIUS",
]

CORNER_RADIUS = 0.25
_SNAP = 1e-9


def grid_nodes(T, nx, nt):
    """Node coordinates x_i = i/nx and t_k = k*T/nt."""
    x = np.arange(nx + 1) / nx
    t = (np.arange(nt + 1) * T) / nt
    return x, t


def max_speed(spec, T):
    """Largest |a_j|: exact for constant speeds, sampled over the box otherwise."""
    if all(e.is_constant() for e in spec.speeds):
        return max(abs(float(spec.speed(j, 0.0, 0.0))) for j in range(spec.n))
    xs, ts = np.meshgrid(np.linspace(0, 1, 33), np.linspace(0, max(T, spec.T_max), 33))
    return max(float(np.max(np.abs(spec.speed(j, xs, ts)))) for j in range(spec.n))


def default_nt(spec, T, nx):
    """Time steps for horizon T.

    With constant speeds dt = dx / max|a_j| (characteristics of the fastest
    family hit nodes; unit speeds give nt = T*nx). Otherwise the largest
    sampled |a_j| over the validation box sets the ratio.
    """
    ratio = T * nx * max_speed(spec, T)
    nt = round(ratio)
    if abs(nt - ratio) > 1e-9 * max(1.0, ratio):
        nt = math.ceil(ratio)
    return max(int(nt), 1)


def _locate(s, n):
    """Cell index and fraction for coordinates s already scaled to [0, n]."""
    s = np.asarray(s, dtype=float)
    near = np.rint(s)
    s = np.where(np.abs(s - near) <= _SNAP, near, s)
    i = np.clip(np.floor(s), 0, n - 1).astype(int)
    return i, s - i


@dataclass(eq=False)
class PiField:
    """n-component grid function on [0, 1] x [0, T].

    `data` has shape (n, nx + 1, nt + 1); evaluation between nodes is
    bilinear.
    """

    T: float
    data: np.ndarray

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def nx(self):
        return self.data.shape[1] - 1

    @property
    def nt(self):
        return self.data.shape[2] - 1

    @property
    def x(self):
        return grid_nodes(self.T, self.nx, self.nt)[0]

    @property
    def t(self):
        return grid_nodes(self.T, self.nx, self.nt)[1]

    @property
    def dt(self):
        return self.T / self.nt

    @classmethod
    def zeros(cls, n, T, nx, nt):
        return cls(float(T), np.zeros((n, nx + 1, nt + 1)))

    @classmethod
    def from_function(cls, fn, n, T, nx, nt):
        """Sample fn(X, Tm) -> (n, nx+1, nt+1) on the nodes."""
        x, t = grid_nodes(T, nx, nt)
        X, Tm = np.meshgrid(x, t, indexing="ij")
        data = np.asarray(fn(X, Tm), dtype=float)
        return cls(float(T), np.broadcast_to(data, (n, nx + 1, nt + 1)).copy())

    @classmethod
    def from_exprs(cls, sources, T, nx, nt):
        exprs = [parse(s, ["x", "t"]) for s in sources]
        return cls.from_function(
            lambda X, Tm: np.stack([np.broadcast_to(evaluate(e, {"x": X, "t": Tm}), X.shape)
                                    for e in exprs]),
            len(exprs), T, nx, nt,
        )

    def __call__(self, x, t):
        """Bilinear interpolation; returns shape (n, *broadcast(x, t).shape)."""
        x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
        i, fx = _locate(x * self.nx, self.nx)
        k, ft = _locate(t / self.dt, self.nt)
        d = self.data
        return (
            d[:, i, k] * (1 - fx) * (1 - ft)
            + d[:, i + 1, k] * fx * (1 - ft)
            + d[:, i, k + 1] * (1 - fx) * ft
            + d[:, i + 1, k + 1] * fx * ft
        )

    def slice(self, t):
        """Values at time t on the x-nodes, shape (n, nx + 1)."""
        return self(self.x, np.full(self.nx + 1, float(t)))

    def initial(self):
        return InitialData(self.data[:, :, 0].copy())

    def copy(self):
        return PiField(self.T, self.data.copy())


@dataclass(eq=False)
class BoundaryTrace:
    """n functions of t on [0, T] held as samples on the t-grid."""

    T: float
    values: np.ndarray  # (n, nt + 1)

    @property
    def nt(self):
        return self.values.shape[1] - 1

    @property
    def t(self):
        return (np.arange(self.nt + 1) * self.T) / self.nt

    def __call__(self, t):
        k, f = _locate(np.asarray(t, float) / (self.T / self.nt), self.nt)
        return self.values[:, k] * (1 - f) + self.values[:, k + 1] * f


class InitialData:
    """Initial data phi on [0, 1]: samples on a uniform grid or expressions in x.

    Samples are interpolated linearly; expressions are evaluated exactly.
    """

    def __init__(self, samples=None, exprs=None):
        if (samples is None) == (exprs is None):
            raise ValueError("give samples or expressions")
        self.exprs = None
        self.samples = None
        if exprs is not None:
            self.exprs = [parse(e, ["x"]) if isinstance(e, str) else e for e in exprs]
            self.n = len(self.exprs)
        else:
            s = np.atleast_2d(np.asarray(samples, dtype=float))
            if not np.all(np.isfinite(s)):
                raise ValueError("initial data must be finite")
            self.samples = s
            self.n = s.shape[0]

    @classmethod
    def from_exprs(cls, sources):
        return cls(exprs=list(sources))

    @classmethod
    def zeros(cls, n, nx=1):
        return cls(np.zeros((n, nx + 1)))

    def at(self, x):
        """Values at x; shape (n, *x.shape)."""
        x = np.asarray(x, dtype=float)
        if self.exprs is not None:
            return np.stack([np.broadcast_to(evaluate(e, {"x": x}), x.shape).astype(float)
                             for e in self.exprs])
        nx = self.samples.shape[1] - 1
        i, f = _locate(x * nx, nx)
        return self.samples[:, i] * (1 - f) + self.samples[:, i + 1] * f

    __call__ = at

    def on_grid(self, nx):
        return self.at(np.arange(nx + 1) / nx)


def extract_in_trace(u: PiField, spec) -> BoundaryTrace:
    """u_j(1, .) for j < m and u_j(0, .) otherwise."""
    vals = np.stack([u.data[j, -1 if j < spec.m else 0, :] for j in range(u.n)])
    return BoundaryTrace(u.T, vals.copy())


def extract_out_trace(u: PiField, spec) -> BoundaryTrace:
    vals = np.stack([u.data[j, 0 if j < spec.m else -1, :] for j in range(u.n)])
    return BoundaryTrace(u.T, vals.copy())


def corner_bump(X, Tm, cx, radius=CORNER_RADIUS):
    return bump_profile(np.hypot(X - cx, Tm), radius, 1.0)


def sample_Ch(spec, T, seed, modes=4, amplitude=1.0, nx=64, nt=None) -> PiField:
    """Random smooth field in C_h: compatible with the boundary map at t = 0.

    Each component is a cosine series with phases and coefficients drawn from
    `seed`, coefficients decaying like 1/(1 + p^2 + q^2), scaled to sup-norm
    `amplitude`. The defect delta = h(0, w_in(0)) - w_out(0) is then removed by
    adding delta_j times a radius-1/4 bump centred at the corner where
    component j takes its boundary value.
    """
    if nt is None:
        nt = default_nt(spec, T, nx)
    rng = np.random.default_rng(seed)
    x, t = grid_nodes(T, nx, nt)
    X, Tm = np.meshgrid(x, t, indexing="ij")
    data = np.zeros((spec.n, nx + 1, nt + 1))
    p = np.arange(modes + 1)
    for j in range(spec.n):
        alpha = rng.standard_normal((modes + 1, modes + 1))
        alpha /= 1.0 + p[:, None] ** 2 + p[None, :] ** 2
        th = rng.uniform(0, 2 * np.pi, (modes + 1, modes + 1))
        th2 = rng.uniform(0, 2 * np.pi, (modes + 1, modes + 1))
        cx = np.cos(np.pi * p[:, None, None, None] * X + th[:, :, None, None])
        ct = np.cos(np.pi * p[None, :, None, None] * Tm / T + th2[:, :, None, None])
        w = np.einsum("pq,pqxt->xt", alpha, cx * ct)
        peak = np.max(np.abs(w))
        data[j] = w * (amplitude / peak) if peak > 0 else 0.0
    left, right = data[:, 0, 0], data[:, -1, 0]
    delta = spec.h(0.0, spec.in_of(left, right)) - spec.out_of(left, right)
    for j in range(spec.n):
        if delta[j] != 0.0:
            data[j] += delta[j] * corner_bump(X, Tm, out_side(j, spec.m))
    return PiField(float(T), data)


def sup_norm(u: PiField, region=None) -> float:
    """max |u_j| over the nodes with t in `region` (default: all of [0, T])."""
    t = u.t
    if region is None:
        mask = np.ones(t.shape, dtype=bool)
    else:
        lo, hi = region
        eps = 1e-12 * max(1.0, u.T)
        mask = (t >= lo - eps) & (t <= hi + eps)
    if not mask.any():
        raise ValueError(f"no grid times in {region}")
    return float(np.max(np.abs(u.data[:, :, mask])))


def write_csv(u: PiField, target=None):
    """Rows x,t,u1..un, t-major then x; returns the text if `target` is None."""
    buf = io.StringIO()
    buf.write(",".join(["x", "t"] + [f"u{j + 1}" for j in range(u.n)]) + "\n")
    x, t = u.x, u.t
    for k in range(u.nt + 1):
        for i in range(u.nx + 1):
            vals = [x[i], t[k]] + list(u.data[:, i, k])
            buf.write(",".join(f"{v:.17g}" for v in vals) + "\n")
    text = buf.getvalue()
    if target is None:
        return text
    if hasattr(target, "write"):
        target.write(text)
    else:
        with open(target, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return text
