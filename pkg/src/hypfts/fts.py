"""
Randomized checks of the finite-time stabilization criteria, bracketing of
the optimal stabilization time and the nilpotent fast path for linear
boundaries.

Sampling can only find counterexamples. A passing check is reported as
``no-counterexample``, never as a proof.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._parallel import ordered_map
from .pifield import InitialData, default_nt, max_speed, sample_Ch
from .qcalc import QContext, apply_Q, stabilization_index
from .system import InvalidSpecError, crossing_times, nilpotency_index, require_valid

__all__ = [
    "FtsVerdict",
    "ToptEstimate",
    "NilpotentCertificate",
    "RefusedError",
    "check_C0",
    "check_C00",
    "estimate_Topt",
    "certify_linear_nilpotent",
]

NO_COUNTEREXAMPLE = "no-counterexample"
COUNTEREXAMPLE = "counterexample"


class RefusedError(InvalidSpecError):
    """The criterion does not apply to this spec."""


@dataclass
class FtsVerdict:
    """Outcome of a randomized criterion check.

    On a counterexample `seed`, `component` (0-based), `x`, `t` and `value`
    locate the violation; `replay` recomputes it from the seed alone.
    """

    criterion: str
    T: float
    k: int
    trials: int
    tolerance: float
    outcome: str
    seed: int | None = None
    component: int | None = None
    x: float | None = None
    t: float | None = None
    value: float | None = None
    q: int | None = None
    k_max: int | None = None
    nx: int = 64
    nt: int = 0
    _spec: object = field(default=None, repr=False, compare=False)

    @property
    def holds(self):
        return self.outcome == NO_COUNTEREXAMPLE

    def replay(self):
        """|value| at the recorded witness node, recomputed from its seed."""
        if self.holds:
            raise ValueError("nothing to replay: no counterexample was found")
        if self.criterion == "C0":
            slices = _c0_slices(self._spec, self.T, self.k, self.seed, self.nx, self.nt)
            data = slices[0]
        else:
            slices = _c00_slices(self._spec, self.T, self.q, self.k_max, self.seed,
                                 self.nx, self.nt)
            data = slices[self.k - 1]
        i = int(round(self.x * self.nx))
        return abs(float(data[self.component, i]))

    def __str__(self):
        head = f"{self.criterion} at T={self.T:g}"
        if self.criterion == "C0":
            head += f", k={self.k}"
        else:
            head += f", q={self.q}, k_max={self.k_max}"
        head += f", {self.trials} trials, tol {self.tolerance:g}: {self.outcome}"
        if self.holds:
            return head
        return (head + f"\n  witness seed {self.seed}, component {self.component + 1}, "
                f"x={self.x:.6g}, t={self.t:.6g}, |value|={self.value:.6g}")


def _refuse_unless_homogeneous(spec, override):
    report = require_valid(spec, override=override, allow=("homogeneous",))
    check = report.checks.get("homogeneous")
    if check is not None and check.status == "fail":
        raise RefusedError(
            "boundary map is not homogeneous (h(t, 0) != 0 at component "
            f"{check.location[0]}, t={check.location[1]:g}); the criterion "
            "does not characterize stabilization in that case")


def _auto_power(ctx):
    q = getattr(ctx.exits, "q_index", None)
    if q is None:
        q = stabilization_index(ctx)
        ctx.exits.q_index = q
    return q


def _zero_phi(spec):
    return InitialData.zeros(spec.n)


def _c0_slices(spec, T, k, seed, nx, nt, ctx=None):
    if ctx is None:
        ctx = QContext(spec, _zero_phi(spec), T, nx, nt, override=True)
    w = sample_Ch(spec, T, seed, nx=nx, nt=nt)
    c = ctx.with_phi(w.initial())
    u = apply_Q(c, w)
    for _ in range(k - 1):
        u = apply_Q(c, u, check=False)
    return [u.data[:, :, -1]]


def _c00_slices(spec, T, q, k_upto, seed, nx, nt, ctx=None):
    """Slices [Q^(kq) w](., kT) for k = 1..k_upto on the grid of horizon k_upto*T."""
    if ctx is None:
        ctx = QContext(spec, _zero_phi(spec), k_upto * T, nx, k_upto * nt, override=True)
    w = sample_Ch(spec, k_upto * T, seed, nx=nx, nt=k_upto * nt)
    c = ctx.with_phi(w.initial())
    u = w
    out = []
    for kk in range(1, k_upto + 1):
        for _ in range(q):
            u = apply_Q(c, u, check=False)
        out.append(u.data[:, :, kk * nt])
    return out


def _first_violation(slices, tol):
    for kk, sl in enumerate(slices, start=1):
        absval = np.abs(sl)
        j, i = np.unravel_index(int(np.argmax(absval)), absval.shape)
        if absval[j, i] > tol:
            return kk, int(j), int(i), float(absval[j, i])
    return None


def check_C0(spec, T, k="auto", trials=64, tol=1e-10, seed=0, nx=64, nt=None,
             override=False) -> FtsVerdict:
    """Test [Q^k w](x, T) = 0 for `trials` seeded compatible fields w.

    Parameters
    ----------
    spec : SystemSpec
        Must have a homogeneous boundary map.
    T : float
        Slice where vanishing is tested.
    k : int or "auto"
        Power of Q; ``"auto"`` uses the stabilization index of the grid.
    trials, tol, seed
        Trial i uses ``sample_Ch(seed=seed + i)`` with phi = w(., 0).
    nx, nt : int
        Grid; `nt` defaults to `default_nt`.

    Raises
    ------
    RefusedError
        For a nonhomogeneous boundary map.
    """
    _refuse_unless_homogeneous(spec, override)
    nt = default_nt(spec, T, nx) if nt is None else nt
    ctx = QContext(spec, _zero_phi(spec), T, nx, nt, override=True)
    k = _auto_power(ctx) if k == "auto" else int(k)
    if k < 1:
        raise ValueError("k must be positive")

    def run(i):
        return _first_violation(_c0_slices(spec, T, k, seed + i, nx, nt, ctx), tol)

    verdict = FtsVerdict("C0", float(T), k, trials, tol, NO_COUNTEREXAMPLE, nx=nx, nt=nt,
                         _spec=spec)
    for i, hit in enumerate(ordered_map(run, range(trials))):
        if hit is not None:
            _, j, ix, value = hit
            verdict.outcome = COUNTEREXAMPLE
            verdict.seed, verdict.component = seed + i, j
            verdict.x, verdict.t, verdict.value = ix / nx, float(T), value
            break
    return verdict


def check_C00(spec, T, q="auto", k_max=3, trials=64, tol=1e-10, seed=0, nx=64, nt=None,
              override=False) -> FtsVerdict:
    """Test [Q^(kq) w](x, kT) = 0 for k = 1..k_max (autonomous specs).

    The fields live on the grid of horizon k_max*T with `nt` steps per T;
    ``q="auto"`` takes the stabilization index of the horizon-T grid. On a
    counterexample `k` holds the failing multiple, otherwise `k_max`.

    Raises
    ------
    RefusedError
        If the spec is not flagged autonomous or h(t, 0) != 0.
    """
    if not spec.autonomous:
        raise RefusedError("the autonomous criterion needs a spec flagged autonomous")
    _refuse_unless_homogeneous(spec, override)
    nt = default_nt(spec, T, nx) if nt is None else nt
    if q == "auto":
        q = _auto_power(QContext(spec, _zero_phi(spec), T, nx, nt, override=True))
    q = int(q)
    ctx = QContext(spec, _zero_phi(spec), k_max * T, nx, k_max * nt, override=True)

    def run(i):
        return _first_violation(_c00_slices(spec, T, q, k_max, seed + i, nx, nt, ctx), tol)

    verdict = FtsVerdict("C00", float(T), k_max, trials, tol, NO_COUNTEREXAMPLE, q=q,
                         k_max=k_max, nx=nx, nt=nt, _spec=spec)
    for i, hit in enumerate(ordered_map(run, range(trials))):
        if hit is not None:
            kk, j, ix, value = hit
            verdict.outcome = COUNTEREXAMPLE
            verdict.k = kk
            verdict.seed, verdict.component = seed + i, j
            verdict.x, verdict.t, verdict.value = ix / nx, kk * float(T), value
            break
    return verdict


@dataclass
class ToptEstimate:
    """Bracket [lo, hi] for the optimal stabilization time.

    `certified` is False when the check failed at T_max; then lo = T_max and
    hi = inf. `probes` lists (T, passed) in the order they were run.
    """

    lo: float
    hi: float
    certified: bool
    probes: list = field(default_factory=list)

    @property
    def width(self):
        return self.hi - self.lo

    def __contains__(self, value):
        return self.lo <= value <= self.hi

    def __str__(self):
        if not self.certified:
            return f"no certificate <= {self.lo:g}"
        return f"T_opt in [{self.lo:.6g}, {self.hi:.6g}] (width {self.width:.3g})"


def estimate_Topt(spec, T_max, bisect_tol=0.05, trials=16, tol=1e-10, seed=0, nx=40,
                  override=False) -> ToptEstimate:
    """Bisect on T between the largest failing and smallest passing probe.

    Probes lie on the lattice T = i * dt with dt = 1 / (nx * max|a|), so
    every probe horizon is a whole number of time steps (exact grids for
    constant speeds). The bracket is no wider than `bisect_tol` or one
    lattice step, whichever is larger. Assumes that passing is monotone in T.
    """
    dt = 1.0 / (nx * max_speed(spec, T_max))
    hi_i = max(1, int(math.floor(T_max / dt + 1e-9)))
    probes = []

    def passes(i):
        v = check_C0(spec, i * dt, "auto", trials, tol, seed, nx, nt=i, override=override)
        probes.append((i * dt, v.holds))
        return v.holds

    if not passes(hi_i):
        return ToptEstimate(float(T_max), math.inf, False, probes)
    lo_i = 0  # T = 0 never passes for nonzero data
    while (hi_i - lo_i) * dt > bisect_tol and hi_i - lo_i > 1:
        mid = (lo_i + hi_i) // 2
        if passes(mid):
            hi_i = mid
        else:
            lo_i = mid
    return ToptEstimate(lo_i * dt, hi_i * dt, True, probes)


@dataclass
class NilpotentCertificate:
    nu: int
    T_bound: float
    confirmation: FtsVerdict | None = None

    def __str__(self):
        text = f"nilpotency index {self.nu}, vanishing time bound {self.T_bound:.6g}"
        if self.confirmation is not None:
            text += f"\n  confirmation: {self.confirmation}"
        return text


def certify_linear_nilpotent(spec, confirm=True, trials=16, tol=1e-10, seed=0, nx=32,
                             override=False) -> NilpotentCertificate | None:
    """Vanishing-time bound for a linear boundary with nilpotent |P|.

    T_bound = nu * (largest crossing time over start times in [0, T_bound]),
    found by fixed-point iteration from nu / speed_floor. Returns None when
    |P| is not nilpotent. With `confirm`, check_C0 runs at T_bound.
    """
    if not spec.is_linear:
        raise ValueError("the nilpotent certificate needs a linear boundary")
    nu = nilpotency_index(spec.P)
    if nu is None:
        return None
    T = nu / spec.speed_floor
    for _ in range(100):
        T_new = nu * float(crossing_times(spec, T)[:, 1].max())
        if abs(T_new - T) <= 1e-12 * max(1.0, T):
            T = T_new
            break
        T = T_new
    cert = NilpotentCertificate(nu, T)
    if confirm:
        cert.confirmation = check_C0(spec, T, "auto", trials, tol, seed, nx,
                                     override=override)
    return cert
