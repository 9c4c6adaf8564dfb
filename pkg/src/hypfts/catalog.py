"""
Built-in example systems, generated in code so that the CLI, the demos and
the test suite share one definition.

All of them have unit speeds a = (1, -1) and no damping unless noted.

``nonlinear_pair(variant)``
    u1(0, t) = r(t) sin(u2(0, t)),  u2(1, t) = sin^2(s(t) u1(1, t)).
    ``suf2``: r = s = 0 on [1, 2.5], so one application of Q already
    vanishes on the slice T = 2.25. ``suf1``: s = 0 on [1, 3.2] with r never
    zero, vanishing after two applications at T = 3.2. ``baseline``: r and s
    without a common zero interval, no vanishing expected.
``delayed_forcing(scale)``
    u1(0, t) = g(t),  u2(1, t) = u1(1, t)  with g = 0 up to t = 4 and
    g(t) = scale * exp(-1 / (t - 4)) afterwards. Q^2 w vanishes at t = 3
    for every w, yet the solution is nonzero at t = 5.
``swap()``
    u_out = [[0, 1], [1, 0]] u_in: solutions are 2-periodic in time.
``one_coupling(p, speeds)``
    u_out = [[0, 0], [p, 0]] u_in: nilpotent with index 2.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .system import SystemSpec

__all__ = [
    "Example",
    "nonlinear_pair",
    "delayed_forcing",
    "swap",
    "one_coupling",
    "absorbing",
    "upper_triangular_three",
    "NONLINEAR_VARIANTS",
]


def window_zero(t0, t1, outside="1"):
    """Expression in t that is zero on [t0, t1] and ramps linearly outside.

    `outside` multiplies the ramps, so the function is continuous and its
    only zeros are the window itself.
    """
    return f"({outside})*if(t < {t0}, {t0} - t, if(t > {t1}, t - {t1}, 0))"


NONLINEAR_VARIANTS = {
    # r, s, horizon of the check, power of Q
    "suf2": (window_zero(1, 2.5), window_zero(1, 2.5), 2.25, 1),
    "suf1": ("1 + 0.5*sin(t)", window_zero(1, 3.2), 3.2, 2),
    "baseline": ("1 + 0.5*sin(t)", "0.8*cos(2*t)", 3.0, "auto"),
}


@dataclass
class Example:
    name: str
    spec: SystemSpec
    T: float
    k: object
    description: str
    params: dict = field(default_factory=dict)


def nonlinear_pair(variant="suf2", r=None, s=None) -> Example:
    """Unit-speed pair with the sine boundary coupling; `r`, `s` override the variant."""
    if variant not in NONLINEAR_VARIANTS:
        raise KeyError(f"unknown variant {variant!r}; choose from {sorted(NONLINEAR_VARIANTS)}")
    r0, s0, T, k = NONLINEAR_VARIANTS[variant]
    r = r0 if r is None else r
    s = s0 if s is None else s
    spec = SystemSpec.from_strings(
        ["1", "-1"], m=1,
        h=[f"({r})*sin(xi2)", f"sin(({s})*xi1)^2"],
        T_max=max(4.0, T),
    )
    desc = {
        "suf2": "r = s = 0 on [1, 2.5]: the criterion holds with k = 1 at T = 2.25",
        "suf1": "s = 0 on [1, 3.2]: the criterion holds with k = 2 at T = 3.2",
        "baseline": "r and s never vanish together: no finite-time vanishing expected",
    }[variant]
    return Example(f"sine-coupling/{variant}", spec, T, k, desc, {"r": r, "s": s})


def forcing_expr(scale=1.0, start=4.0):
    return f"if(t <= {start}, 0, {scale}*exp(-1/(t - {start})))"


def delayed_forcing(scale=1.0, start=4.0) -> Example:
    """Nonhomogeneous boundary u1(0, t) = g(t), u2(1, t) = u1(1, t)."""
    spec = SystemSpec.from_strings(
        ["1", "-1"], m=1, h=[forcing_expr(scale, start), "xi1"], T_max=6.0,
    )
    desc = ("Q^2 w vanishes on the slice t = 3 for every w, but g switches on "
            f"after t = {start:g}, so solutions do not stay zero")
    return Example("delayed-forcing", spec, 3.0, 2, desc, {"scale": scale, "start": start})


def swap() -> SystemSpec:
    return SystemSpec.from_strings(["1", "-1"], m=1, P=[[0, 1], [1, 0]], autonomous=True)


def one_coupling(p=1.0, speeds=("1", "-1")) -> SystemSpec:
    return SystemSpec.from_strings(list(speeds), m=1, P=[[0, 0], [p, 0]], autonomous=True)


def absorbing(speeds=("1", "-1")) -> SystemSpec:
    return SystemSpec.from_strings(list(speeds), m=1, P=[[0, 0], [0, 0]], autonomous=True)


def upper_triangular_three() -> SystemSpec:
    """Speeds (1, 2, -1) with a strictly upper triangular coupling (index 3)."""
    return SystemSpec.from_strings(
        ["1", "2", "-1"], m=2, P=[[0, 1, 1], [0, 0, 1], [0, 0, 0]], autonomous=True,
    )
