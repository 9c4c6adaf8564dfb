"""
Characteristic curves, boundary exits and exponential weights.

The j-th characteristic through (x, t) is the solution of

    d omega / d xi = 1 / a_j(xi, omega),   omega(x) = t,

integrated in xi toward the boundary in the direction of decreasing time
(toward xi = 0 for j < m, toward xi = 1 otherwise; components are 0-based).
If omega reaches 0 first the exit is on the initial axis, otherwise it is
lateral. The weight is exp of the integral of b_j / a_j along the curve from x
to the exit abscissa.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_STEP = 1.0 / 1024
ZERO_TOL = 1e-12
REFINE_TOL = 1e-8

__all__ = [
    "CharExit",
    "ExitArrays",
    "trace",
    "trace_many",
    "weight",
    "omega",
    "CurveLeftDomain",
    "SpeedSignError",
]


class CurveLeftDomain(ValueError):
    pass


class SpeedSignError(ValueError):
    pass


@dataclass
class CharExit:
    j: int
    x: float
    t: float
    x_exit: float
    tau: float
    kind: str  # "initial" or "lateral"
    weight: float
    path: np.ndarray = field(default=None, repr=False)

    @property
    def lateral(self):
        return self.kind == "lateral"


@dataclass
class ExitArrays:
    """Exit data for many start points of one component."""

    x_exit: np.ndarray
    tau: np.ndarray
    weight: np.ndarray
    lateral: np.ndarray


FLOOR_SLACK = 1e-12


def _direction(spec, j):
    # (sign of the xi step, boundary abscissa reached)
    return (-1.0, 0.0) if j < spec.m else (1.0, 1.0)


def _inv_speed(spec, j, xi, om):
    a = spec.speed(j, xi, om)
    # round-off can put xi a few ulps outside [0, 1]; do not flag a speed
    # that sits exactly on the floor there
    floor = spec.speed_floor * (1.0 - FLOOR_SLACK)
    bad = (a < floor) if j < spec.m else (a > -floor)
    if np.any(bad):
        k = int(np.flatnonzero(np.atleast_1d(bad))[0])
        xs = np.atleast_1d(np.broadcast_to(xi, np.shape(a)))[k]
        ts = np.atleast_1d(np.broadcast_to(om, np.shape(a)))[k]
        raise SpeedSignError(
            f"speed a_{j + 1}({xs:.6g}, {ts:.6g}) = {np.atleast_1d(a)[k]:.6g} "
            f"violates the speed floor {spec.speed_floor}"
        )
    return 1.0 / a


def _rk4(spec, j, xi0, om0, hs, k1=None):
    if k1 is None:
        k1 = _inv_speed(spec, j, xi0, om0)
    k2 = _inv_speed(spec, j, xi0 + 0.5 * hs, om0 + 0.5 * hs * k1)
    k3 = _inv_speed(spec, j, xi0 + 0.5 * hs, om0 + 0.5 * hs * k2)
    k4 = _inv_speed(spec, j, xi0 + hs, om0 + hs * k3)
    return om0 + hs / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _simpson_panel(spec, j, xi0, om0, k0, xi1, om1, k1, g0=None, g1=None):
    """Simpson panel of b/a between two curve points; midpoint by Hermite.

    `g0`, `g1` are b/a at the ends when already known. Returns the panel,
    the midpoint ordinate and b/a at the right end.
    """
    hs = xi1 - xi0
    xm = 0.5 * (xi0 + xi1)
    om_mid = 0.5 * (om0 + om1) + hs / 8.0 * (k0 - k1)
    km = _inv_speed(spec, j, xm, om_mid)
    if g0 is None:
        g0 = spec.damping(j, xi0, om0) * k0
    gm = spec.damping(j, xm, om_mid) * km
    if g1 is None:
        g1 = spec.damping(j, xi1, om1) * k1
    return hs / 6.0 * (g0 + 4.0 * gm + g1), om_mid, g1


def _sweep(spec, j, x, t, step, record=False):
    x = np.asarray(x, dtype=float).ravel()
    t = np.asarray(t, dtype=float).ravel()
    d, B = _direction(spec, j)
    size = x.size
    dist = np.abs(B - x)
    nsteps = np.ceil(dist / step - 1e-9).astype(int)
    nsteps[dist == 0] = 0
    h = np.where(nsteps > 0, dist / np.maximum(nsteps, 1), 0.0)
    # constant damping: the weight integral is b times the change in omega
    b_const = spec.damping_expr(j).is_constant() and not record
    b_value = float(spec.damping(j, 0.0, 0.0)) if b_const else None

    x_exit = np.empty(size)
    tau = np.empty(size)
    logc = np.zeros(size)
    lateral = np.zeros(size, dtype=bool)
    done = np.zeros(size, dtype=bool)

    at_bdry = nsteps == 0
    x_exit[at_bdry] = B
    tau[at_bdry] = t[at_bdry]
    lateral[at_bdry] = True
    done |= at_bdry
    on_axis = ~done & (t <= ZERO_TOL)
    x_exit[on_axis] = x[on_axis]
    tau[on_axis] = 0.0
    done |= on_axis

    xi = x.copy()
    om = t.copy()
    kk = np.zeros(size)  # 1/a at the current point
    gg = np.zeros(size)  # b/a at the current point
    live = ~done
    if live.any():
        kk[live] = _inv_speed(spec, j, xi[live], om[live])
        if not b_const:
            gg[live] = spec.damping(j, xi[live], om[live]) * kk[live]
    path = [(xi[0], om[0])] if record else None

    s = 0
    while not done.all():
        idx = np.flatnonzero(~done)
        xi0, om0, k0 = xi[idx], om[idx], kk[idx]
        hs = d * h[idx]
        last = nsteps[idx] == s + 1
        om1 = _rk4(spec, j, xi0, om0, hs, k0)
        xi1 = np.where(last, B, xi0 + hs)

        crossed = om1 < -ZERO_TOL
        ok = ~crossed
        if ok.any():
            i_ok = idx[ok]
            k1 = _inv_speed(spec, j, xi1[ok], om1[ok])
            if not b_const:
                inc, om_mid, g1 = _simpson_panel(
                    spec, j, xi0[ok], om0[ok], k0[ok], xi1[ok], om1[ok], k1, g0=gg[i_ok]
                )
                logc[i_ok] += inc
                gg[i_ok] = g1
            kk[i_ok] = k1
            xi[i_ok] = xi1[ok]
            om[i_ok] = om1[ok]
            if record and ok[0]:
                path.append((0.5 * (xi0[0] + xi1[0]), om_mid[0]))
                path.append((xi1[0], om1[0]))
            lat = last[ok]
            hit_axis = ~lat & (om1[ok] <= ZERO_TOL)
            il = i_ok[lat]
            x_exit[il] = B
            tau[il] = np.maximum(om1[ok][lat], 0.0)
            lateral[il] = True
            ia = i_ok[hit_axis]
            x_exit[ia] = xi1[ok][hit_axis]
            tau[ia] = 0.0
            done[il] = True
            done[ia] = True
        if crossed.any():
            ic = idx[crossed]
            xs, oms = xi0[crossed], om0[crossed]
            hsc, k0c = hs[crossed], k0[crossed]
            theta, om_star = _bisect_axis(spec, j, xs, oms, hsc, k0c, om1[crossed])
            xe = xs + theta * hsc
            if not b_const:
                k1 = _inv_speed(spec, j, xe, om_star)
                inc, om_mid, _ = _simpson_panel(spec, j, xs, oms, k0c, xe, om_star, k1,
                                                g0=gg[ic])
                logc[ic] += inc
                if record and crossed[0]:
                    path.append((0.5 * (xs[0] + xe[0]), om_mid[0]))
                    path.append((xe[0], om_star[0]))
            corner = np.abs(xe - B) <= ZERO_TOL
            x_exit[ic] = np.where(corner, B, xe)
            tau[ic] = 0.0
            lateral[ic] = corner
            done[ic] = True
        s += 1

    if b_const:
        logc = b_value * (tau - t)
    out = ExitArrays(x_exit, tau, np.exp(logc), lateral)
    if record:
        return out, np.array(path)
    return out


def _bisect_axis(spec, j, xi0, om0, hs, k0, om1):
    """Fraction theta of a step where the RK4 ordinate crosses zero.

    Newton iterations on theta (slope hs / a), kept inside a shrinking
    bracket; a step that would leave the bracket bisects instead.
    """
    lo = np.zeros_like(xi0)
    hi = np.ones_like(xi0)
    theta = np.clip(om0 / (om0 - om1), 0.0, 1.0)
    om_star = np.zeros_like(xi0)
    open_ = np.ones(xi0.shape, dtype=bool)
    for _ in range(200):
        if not open_.any():
            break
        i = np.flatnonzero(open_)
        th = theta[i]
        om_th = _rk4(spec, j, xi0[i], om0[i], th * hs[i], k0[i])
        conv = (np.abs(om_th) <= ZERO_TOL) | (hi[i] - lo[i] <= 1e-15)
        om_star[i[conv]] = om_th[conv]
        open_[i[conv]] = False
        pos = om_th > 0
        lo[i] = np.where(pos, th, lo[i])
        hi[i] = np.where(pos, hi[i], th)
        slope = hs[i] * _inv_speed(spec, j, xi0[i] + th * hs[i], om_th)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = th - om_th / slope
        inside = np.isfinite(newton) & (newton > lo[i]) & (newton < hi[i])
        theta[i] = np.where(conv, th, np.where(inside, newton, 0.5 * (lo[i] + hi[i])))
    return theta, om_star


def _closed_form(spec, j, x, t):
    """Exact exits for constant a_j and b_j (straight characteristics)."""
    a = float(spec.speed(j, 0.0, 0.0))
    b = float(spec.damping(j, 0.0, 0.0))
    _, B = _direction(spec, j)
    x = np.asarray(x, dtype=float).ravel()
    t = np.asarray(t, dtype=float).ravel()
    tau_lat = t - np.abs(B - x) / abs(a)
    lateral = tau_lat >= -ZERO_TOL
    x_exit = np.where(lateral, B, x - a * t)
    tau = np.where(lateral, np.maximum(tau_lat, 0.0), 0.0)
    return ExitArrays(x_exit, tau, np.exp(b / a * (x_exit - x)), lateral)


def _constant_coefficients(spec, j):
    return spec.speed_expr(j).is_constant() and spec.damping_expr(j).is_constant()


def trace_many(spec, j, x, t, step=DEFAULT_STEP, refine=True) -> ExitArrays:
    """Exit data for the j-th characteristics through the points (x, t).

    With `refine`, the sweep is repeated at half the step and the finer result
    is taken wherever the two disagree by more than 1e-8. Constant
    coefficients use the exact straight-line characteristics.
    """
    x, t = np.broadcast_arrays(np.asarray(x, float), np.asarray(t, float))
    shape = x.shape
    if _constant_coefficients(spec, j):
        out = _closed_form(spec, j, x, t)
    else:
        out = _sweep(spec, j, x, t, step)
        if refine:
            fine = _sweep(spec, j, x, t, step / 2)
            diff = (
                (np.abs(out.tau - fine.tau) > REFINE_TOL)
                | (np.abs(out.x_exit - fine.x_exit) > REFINE_TOL)
                | (out.lateral != fine.lateral)
            )
            if diff.any():
                for name in ("x_exit", "tau", "weight", "lateral"):
                    getattr(out, name)[diff] = getattr(fine, name)[diff]
    return ExitArrays(*(arr.reshape(shape) for arr in
                        (out.x_exit, out.tau, out.weight, out.lateral)))


def trace(spec, j, x, t, step=DEFAULT_STEP, refine=True) -> CharExit:
    """Trace one characteristic with RK4 in xi and record its path.

    The path holds the step points and the Hermite midpoints used by the
    Simpson weight, so it always has an odd number of rows (xi, omega).
    """
    if not 0.0 <= x <= 1.0 or t < 0.0:
        raise ValueError(f"({x}, {t}) is outside the domain")
    out, path = _sweep(spec, j, [x], [t], step, record=True)
    if refine:
        fine, fpath = _sweep(spec, j, [x], [t], step / 2, record=True)
        if (
            abs(out.tau[0] - fine.tau[0]) > REFINE_TOL
            or abs(out.x_exit[0] - fine.x_exit[0]) > REFINE_TOL
            or out.lateral[0] != fine.lateral[0]
        ):
            out, path = fine, fpath
    return CharExit(
        j=j,
        x=float(x),
        t=float(t),
        x_exit=float(out.x_exit[0]),
        tau=float(out.tau[0]),
        kind="lateral" if out.lateral[0] else "initial",
        weight=float(out.weight[0]),
        path=path,
    )


def weight(spec, j, path) -> float:
    """exp of composite Simpson of b_j/a_j over a traced path.

    `path` rows alternate step point, midpoint, step point, ... as produced by
    `trace`.
    """
    path = np.asarray(path, dtype=float)
    if len(path) < 3:
        return 1.0
    xi, om = path[:, 0], path[:, 1]
    g = spec.damping(j, xi, om) / spec.speed(j, xi, om)
    h = xi[2::2] - xi[:-2:2]
    return float(np.exp(np.sum(h / 6.0 * (g[:-2:2] + 4.0 * g[1::2] + g[2::2]))))


def omega(spec, j, xi, x, t, step=DEFAULT_STEP):
    """Ordinate at abscissa `xi` of the j-th characteristic through (x, t).

    Accepts arrays for `xi` and `t` (with scalar `x`), integrating with RK4
    in xi from x to each target.

    Raises
    ------
    CurveLeftDomain
        If the curve drops below t = 0 before reaching `xi`.
    """
    xi_arr, t_arr = np.broadcast_arrays(np.asarray(xi, float), np.asarray(t, float))
    shape = xi_arr.shape
    xi_t = xi_arr.ravel()
    om = t_arr.ravel().astype(float).copy()
    cur = np.full(om.shape, float(x))
    span = xi_t - cur
    nsteps = np.ceil(np.abs(span) / step - 1e-9).astype(int)
    hs = np.where(nsteps > 0, span / np.maximum(nsteps, 1), 0.0)
    for s in range(int(nsteps.max(initial=0))):
        i = np.flatnonzero(nsteps > s)
        om[i] = _rk4(spec, j, cur[i], om[i], hs[i])
        cur[i] = np.where(nsteps[i] == s + 1, xi_t[i], cur[i] + hs[i])
        if np.any(om[i] < -ZERO_TOL):
            raise CurveLeftDomain(
                f"characteristic {j + 1} through ({x}, ...) leaves the domain "
                "before reaching the requested abscissa"
            )
    om = om.reshape(shape)
    return float(om) if om.ndim == 0 else om


def crossing_time(spec, j, t0, step=DEFAULT_STEP):
    """Time for characteristic j entering at time(s) `t0` to cross [0, 1]."""
    entry, leave = (0.0, 1.0) if j < spec.m else (1.0, 0.0)
    t0 = np.asarray(t0, dtype=float)
    return omega(spec, j, np.full(t0.shape, leave), entry, t0, step) - t0

