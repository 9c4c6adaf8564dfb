"""
Problem data for decoupled hyperbolic systems with boundary reflections

    d_t u + A(x, t) d_x u + B(x, t) u = 0,   0 < x < 1, t > 0,
    u(x, 0) = phi(x),
    u_out(t) = h(t, u_in(t)),

with A = diag(a_1..a_n), B = diag(b_1..b_n). Components j < m (0-based) move
right (a_j >= a > 0), the others move left (a_j <= -a). The out-trace collects
u_j(0, t) for j < m and u_j(1, t) otherwise; the in-trace takes the opposite
endpoints.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import characteristics
from .exprlang import ExprError, parse, evaluate

__all__ = [
    "LinearBoundary",
    "NonlinearBoundary",
    "SystemSpec",
    "Check",
    "ValidationReport",
    "InvalidSpecError",
    "validate",
    "require_valid",
    "compatibility_defect",
    "nilpotency_index",
    "crossing_times",
    "out_side",
    "in_side",
]


class InvalidSpecError(ValueError):
    pass


def out_side(j, m):
    """Abscissa where component j receives its boundary value."""
    return 0.0 if j < m else 1.0


def in_side(j, m):
    """Abscissa where component j leaves the domain."""
    return 1.0 if j < m else 0.0


@dataclass(frozen=True)
class LinearBoundary:
    P: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "P", np.array(self.P, dtype=float))


@dataclass(frozen=True)
class NonlinearBoundary:
    h: tuple


@dataclass(frozen=True, eq=False)
class SystemSpec:
    n: int
    m: int
    speeds: tuple
    dampings: tuple
    boundary: object
    autonomous: bool = False
    speed_floor: float = 1.0
    T_max: float = 4.0
    xi_radius: float = 1.0
    sources: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise InvalidSpecError("n must be positive")
        if not 0 <= self.m <= self.n:
            raise InvalidSpecError("m must lie in [0, n]")
        if len(self.speeds) != self.n or len(self.dampings) != self.n:
            raise InvalidSpecError("need n speeds and n dampings")
        if self.speed_floor <= 0:
            raise InvalidSpecError("speed_floor must be positive")
        if isinstance(self.boundary, LinearBoundary):
            if self.boundary.P.shape != (self.n, self.n):
                raise InvalidSpecError("P must be n x n")
        elif len(self.boundary.h) != self.n:
            raise InvalidSpecError("need n boundary expressions")

    # -- construction -------------------------------------------------------

    @property
    def xi_names(self):
        return [f"xi{k + 1}" for k in range(self.n)]

    @classmethod
    def from_strings(cls, speeds, dampings=None, *, m, h=None, P=None,
                     autonomous=False, speed_floor=1.0, T_max=4.0, xi_radius=1.0):
        """Build a spec from expression strings (or numbers)."""
        n = len(speeds)
        dampings = ["0"] * n if dampings is None else dampings
        xt = ["x", "t"]
        sp = tuple(parse(str(s), xt) for s in speeds)
        dp = tuple(parse(str(s), xt) for s in dampings)
        if (h is None) == (P is None):
            raise InvalidSpecError("give exactly one of h or P")
        if P is not None:
            boundary = LinearBoundary(P)
        else:
            env = ["t"] + [f"xi{k + 1}" for k in range(n)]
            boundary = NonlinearBoundary(tuple(parse(str(e), env) for e in h))
        sources = {
            "speeds": [str(s) for s in speeds],
            "dampings": [str(s) for s in dampings],
        }
        if h is not None:
            sources["h"] = [str(e) for e in h]
        return cls(n, m, sp, dp, boundary, autonomous, float(speed_floor),
                   float(T_max), float(xi_radius), sources)

    @classmethod
    def from_dict(cls, data):
        try:
            bnd = data["boundary"]
            if "linear" in bnd:
                kw = {"P": bnd["linear"]["P"]}
            else:
                kw = {"h": bnd["nonlinear"]["h"]}
            box = data.get("validation_box", {})
            return cls.from_strings(
                data["speeds"],
                data.get("dampings"),
                m=int(data["m"]),
                autonomous=bool(data.get("autonomous", False)),
                speed_floor=float(data.get("speed_floor", 1.0)),
                T_max=float(box.get("T_max", 4.0)),
                xi_radius=float(box.get("xi_radius", 1.0)),
                **kw,
            )
        except KeyError as err:
            raise InvalidSpecError(f"model file is missing field {err}") from None

    @classmethod
    def from_json(cls, path):
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        spec = cls.from_dict(data)
        if int(data["n"]) != spec.n:
            raise InvalidSpecError("field n disagrees with the number of speeds")
        return spec

    def to_dict(self):
        if isinstance(self.boundary, LinearBoundary):
            bnd = {"linear": {"P": self.boundary.P.tolist()}}
        else:
            bnd = {"nonlinear": {"h": [str(e) for e in self.boundary.h]}}
        return {
            "n": self.n,
            "m": self.m,
            "speeds": [str(e) for e in self.speeds],
            "dampings": [str(e) for e in self.dampings],
            "boundary": bnd,
            "autonomous": self.autonomous,
            "speed_floor": self.speed_floor,
            "validation_box": {"T_max": self.T_max, "xi_radius": self.xi_radius},
        }

    # -- evaluation ---------------------------------------------------------

    def speed_expr(self, j):
        return self.speeds[j]

    def damping_expr(self, j):
        return self.dampings[j]

    def speed(self, j, x, t):
        return evaluate(self.speeds[j], {"x": x, "t": t})

    def damping(self, j, x, t):
        return evaluate(self.dampings[j], {"x": x, "t": t})

    @property
    def is_linear(self):
        return isinstance(self.boundary, LinearBoundary)

    @property
    def P(self):
        return self.boundary.P if self.is_linear else None

    def h(self, t, xi):
        """Boundary map; `xi` has shape (n, ...) and `t` broadcasts against it."""
        xi = np.asarray(xi, dtype=float)
        if self.is_linear:
            out = np.tensordot(self.boundary.P, xi, axes=(1, 0))
            return out + 0.0 * np.asarray(t)
        bind = {"t": t}
        bind.update({f"xi{k + 1}": xi[k] for k in range(self.n)})
        shape = np.broadcast_shapes(np.shape(t), xi.shape[1:])
        return np.stack([np.broadcast_to(evaluate(e, bind), shape)
                         for e in self.boundary.h])

    def out_of(self, left, right):
        """Out-trace from endpoint values; `left`, `right` have shape (n, ...)."""
        return np.stack([left[j] if j < self.m else right[j] for j in range(self.n)])

    def in_of(self, left, right):
        return np.stack([right[j] if j < self.m else left[j] for j in range(self.n)])

    def time_dependent_parts(self):
        """Names of the expression groups that mention t."""
        parts = []
        if any("t" in e.variables() for e in self.speeds):
            parts.append("speeds")
        if any("t" in e.variables() for e in self.dampings):
            parts.append("dampings")
        if not self.is_linear and any("t" in e.variables() for e in self.boundary.h):
            parts.append("h")
        return parts


# --- validation -----------------------------------------------------------------


@dataclass
class Check:
    status: str  # pass, fail, skipped
    worst: float = 0.0
    location: tuple = ()
    message: str = ""


@dataclass
class ValidationReport:
    checks: dict
    gradient_sup: float

    @property
    def ok(self):
        return all(c.status != "fail" for c in self.checks.values())

    def failures(self):
        return {k: c for k, c in self.checks.items() if c.status == "fail"}

    def __str__(self):
        lines = []
        for name, c in self.checks.items():
            line = f"{name:14s} {c.status}"
            if c.status == "fail":
                line += f"  worst={c.worst:.6g} at {c.location}"
            if c.message:
                line += f"  ({c.message})"
            lines.append(line)
        lines.append(f"{'grad_xi_h_sup':14s} {self.gradient_sup:.6g}")
        return "\n".join(lines)


def _speed_check(spec, X, Tm):
    worst, loc = 0.0, ()
    for j in range(spec.n):
        a = spec.speed(j, X, Tm)
        viol = spec.speed_floor - a if j < spec.m else a + spec.speed_floor
        k = np.unravel_index(np.argmax(viol), viol.shape)
        if viol[k] > worst:
            worst, loc = float(viol[k]), (j + 1, float(X[k]), float(Tm[k]))
    return Check("fail" if worst > 0 else "pass", worst, loc)


def _xi_grid(spec, nxi):
    axis = np.linspace(-spec.xi_radius, spec.xi_radius, nxi)
    mesh = np.meshgrid(*([axis] * spec.n), indexing="ij")
    return np.stack([g.ravel() for g in mesh])


def validate(spec, nx=64, nt=64, nxi=5, fd_step=1e-5) -> ValidationReport:
    """Sample the structural hypotheses of `spec`; never raises.

    Checks the speed sign condition on an (nx x nt) grid over
    [0, 1] x [0, T_max], h(t, 0) = 0 on the t-samples, t-independence when the
    spec is flagged autonomous, and the sup of the max-norm of grad_xi h over
    the xi-box (central differences).
    """
    checks = {}
    xs = np.linspace(0.0, 1.0, nx)
    ts = np.linspace(0.0, spec.T_max, nt)
    X, Tm = np.meshgrid(xs, ts, indexing="ij")
    try:
        checks["speed_sign"] = _speed_check(spec, X, Tm)
    except ExprError as err:
        checks["speed_sign"] = Check("fail", math.inf, (), str(err))

    grad_sup = math.nan
    try:
        h0 = spec.h(ts, np.zeros((spec.n, nt)))
        k = np.unravel_index(np.argmax(np.abs(h0)), h0.shape)
        worst = float(np.abs(h0[k]))
        checks["homogeneous"] = Check(
            "fail" if worst > 1e-14 else "pass", worst,
            (int(k[0]) + 1, float(ts[k[1]])) if worst > 1e-14 else (),
        )
        xi = _xi_grid(spec, nxi)
        tt = ts[:, None]
        grad = 0.0
        for k in range(spec.n):
            e = np.zeros((spec.n, 1, 1))
            e[k] = fd_step
            hp = spec.h(tt, xi[:, None, :] + e)
            hm = spec.h(tt, xi[:, None, :] - e)
            grad = max(grad, float(np.max(np.abs(hp - hm))) / (2 * fd_step))
        grad_sup = grad
        checks["gradient"] = Check("pass" if np.isfinite(grad) else "fail", grad)
    except ExprError as err:
        checks.setdefault("homogeneous", Check("fail", math.inf, (), str(err)))
        checks["gradient"] = Check("fail", math.inf, (), str(err))

    if spec.autonomous:
        try:
            checks["autonomous"] = _autonomy_check(spec, xs, nxi)
        except ExprError as err:
            checks["autonomous"] = Check("fail", math.inf, (), str(err))
    else:
        checks["autonomous"] = Check("skipped")
    return ValidationReport(checks, grad_sup)


def _autonomy_check(spec, xs, nxi):
    t1, t2 = 0.25 * spec.T_max, 0.75 * spec.T_max
    worst, loc = 0.0, ()
    for j in range(spec.n):
        for label, fn in (("a", spec.speed), ("b", spec.damping)):
            d = np.abs(fn(j, xs, t1) - fn(j, xs, t2))
            if d.max() > worst:
                worst, loc = float(d.max()), (label, j + 1, float(xs[d.argmax()]))
    xi = _xi_grid(spec, nxi)
    d = np.abs(spec.h(t1, xi) - spec.h(t2, xi))
    if d.max() > worst:
        worst, loc = float(d.max()), ("h",)
    return Check("fail" if worst > 1e-12 else "pass", worst, loc)


def require_valid(spec, override=False, allow=()):
    """Raise InvalidSpecError if validation fails (unless overridden).

    The report is cached on the spec. Checks named in `allow` may fail.
    """
    report = getattr(spec, "_report", None)
    if report is None:
        report = validate(spec)
        object.__setattr__(spec, "_report", report)
    bad = {k: c for k, c in report.failures().items() if k not in allow}
    if bad and not override:
        detail = "; ".join(f"{k}: worst {c.worst:.3g} at {c.location}" for k, c in bad.items())
        raise InvalidSpecError(f"spec failed validation ({detail})")
    return report


def _endpoint_values(spec, phi):
    if hasattr(phi, "at"):
        left, right = phi.at(0.0), phi.at(1.0)
    elif callable(phi):
        left, right = phi(0.0), phi(1.0)
    else:
        arr = np.asarray(phi, dtype=float)
        if arr.ndim == 1:
            left = right = arr
        else:
            left, right = arr[:, 0], arr[:, -1]
    left = np.broadcast_to(np.asarray(left, float), (spec.n,))
    right = np.broadcast_to(np.asarray(right, float), (spec.n,))
    return left, right


def compatibility_defect(spec, phi, t=0.0) -> np.ndarray:
    """phi_out - h(t, phi_in) for initial data `phi`.

    `phi` may be an InitialData, a callable x -> n-vector, an (n, N) array of
    samples on a uniform grid over [0, 1], or an n-vector of constants.
    """
    left, right = _endpoint_values(spec, phi)
    out = spec.out_of(left, right)
    inn = spec.in_of(left, right)
    return out - spec.h(t, inn)


def nilpotency_index(P):
    """Least nu with |P|^nu = 0, or None if |P| is not nilpotent.

    The digraph has an edge k -> j whenever |p_jk| > 0; |P| is nilpotent iff
    it is acyclic, and then nu = 1 + the number of edges on a longest path.
    """
    P = np.abs(np.asarray(P, dtype=float))
    n = P.shape[0]
    succ = [[j for j in range(n) if P[j, k] > 0] for k in range(n)]
    state = [0] * n  # 0 new, 1 on stack, 2 finished
    longest = [0] * n  # edges on the longest path starting at a node

    for root in range(n):
        if state[root]:
            continue
        stack = [(root, iter(succ[root]))]
        state[root] = 1
        while stack:
            node, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                stack.pop()
                state[node] = 2
                longest[node] = max((1 + longest[s] for s in succ[node]), default=0)
            elif state[nxt] == 1:
                return None
            elif state[nxt] == 0:
                state[nxt] = 1
                stack.append((nxt, iter(succ[nxt])))
    return 1 + max(longest, default=0)


def crossing_times(spec, T, samples=65, step=characteristics.DEFAULT_STEP):
    """(min, max) over start times in [0, T] of the time to cross [0, 1].

    Returns an (n, 2) array.

    Raises
    ------
    characteristics.SpeedSignError
        If |a_j| drops below the speed floor along a curve.
    """
    t0 = np.linspace(0.0, max(T, 0.0), samples)
    out = np.empty((spec.n, 2))
    for j in range(spec.n):
        if spec.speed_expr(j).is_constant():
            a = float(spec.speed(j, 0.0, 0.0))
            if (a if j < spec.m else -a) < spec.speed_floor:
                raise characteristics.SpeedSignError(
                    f"a_{j + 1} = {a} violates the speed floor")
            out[j] = 1.0 / abs(a)
            continue
        tau = characteristics.crossing_time(spec, j, t0, step)
        out[j] = tau.min(), tau.max()
    return out
