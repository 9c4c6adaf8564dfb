import math

import numpy as np
import pytest

from oracles import sine_coupling_Q
from hypfts import catalog
from hypfts.pifield import BoundaryTrace, InitialData, PiField, sample_Ch
from hypfts.qcalc import (
    QContext,
    apply_Q,
    apply_R,
    apply_S,
    q_bound,
    q_power,
    sr_power,
    stabilization_index,
)
from hypfts.system import SystemSpec


R_BASE = lambda t: 1 + 0.5 * np.sin(t)
S_BASE = lambda t: 0.8 * np.cos(2 * t)


@pytest.fixture(scope="module")
def sine_setup():
    spec = catalog.nonlinear_pair("baseline").spec
    nx, T = 20, 4.0
    w = sample_Ch(spec, T, seed=5, nx=nx)
    ctx = QContext(spec, w.initial(), T, nx)
    return spec, nx, w, ctx


def test_Q_matches_characteristic_formula(sine_setup):
    spec, nx, w, ctx = sine_setup
    phi = w.data[:, :, 0]
    expected = sine_coupling_Q(w.data, phi, R_BASE, S_BASE, nx)
    np.testing.assert_allclose(apply_Q(ctx, w).data, expected, rtol=0, atol=1e-12)


def test_Q_squared_matches_characteristic_formula(sine_setup):
    spec, nx, w, ctx = sine_setup
    phi = w.data[:, :, 0]
    once = sine_coupling_Q(w.data, phi, R_BASE, S_BASE, nx)
    twice = sine_coupling_Q(once, phi, R_BASE, S_BASE, nx)
    np.testing.assert_allclose(q_power(ctx, w, 2).data, twice, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(q_power(ctx, w, 1).data, apply_Q(ctx, w).data)


def test_R_of_zero_is_zero(sine_setup):
    spec, nx, w, ctx = sine_setup
    assert not apply_R(ctx, PiField.zeros(2, ctx.T, ctx.nx, ctx.nt)).values.any()


def test_R_reads_the_in_trace(sine_setup):
    spec, nx, w, ctx = sine_setup
    u = PiField.from_function(lambda X, Tm: np.stack([0 * X, Tm]), 2, ctx.T, ctx.nx, ctx.nt)
    got = apply_R(ctx, u).values[0]
    t = ctx.t
    np.testing.assert_allclose(got, (1 + 0.5 * np.sin(t)) * np.sin(t), atol=1e-15)


def test_R_for_a_linear_boundary_is_a_matrix_product():
    P = np.array([[0.0, 0.7], [-1.3, 0.0]])
    spec = SystemSpec.from_strings(["1", "-1"], m=1, P=P, autonomous=True)
    ctx = QContext(spec, InitialData.zeros(2), 2.0, 10)
    w = sample_Ch(spec, 2.0, seed=2, nx=10)
    Rw = apply_R(ctx, w)
    rng = np.random.default_rng(0)
    for t in rng.uniform(0, 2, 10):
        u_in = np.array([w(1.0, t)[0], w(0.0, t)[1]])
        np.testing.assert_allclose(Rw(t), P @ u_in, atol=1e-14)


def test_S_of_zero_is_zero(sine_setup):
    spec, nx, w, ctx = sine_setup
    zero = BoundaryTrace(ctx.T, np.zeros((2, ctx.nt + 1)))
    assert not apply_S(ctx, zero).data.any()


@pytest.mark.parametrize("damping, factor", [("0", lambda x: 1.0), ("1", lambda x: math.exp(-x))])
def test_S_transports_with_weight(damping, factor):
    spec = SystemSpec.from_strings(["1", "-1"], [damping, "0"], m=1, P=[[0, 0], [0, 0]])
    ctx = QContext(spec, InitialData.zeros(2), 2.0, 10)
    v = BoundaryTrace(2.0, np.stack([ctx.t, ctx.t]))
    Sv = apply_S(ctx, v).data[0]
    for i, x in enumerate(ctx.x):
        for k, t in enumerate(ctx.t):
            if t >= x:
                assert Sv[i, k] == pytest.approx(factor(x) * (t - x), abs=1e-12)


def test_zero_preservation(sine_setup):
    spec, nx, w, ctx = sine_setup
    zctx = ctx.with_phi(InitialData.zeros(2))
    zero = PiField.zeros(2, ctx.T, ctx.nx, ctx.nt)
    assert not q_power(zctx, zero, 5).data.any()


def test_initial_slice_is_pinned(sine_setup):
    spec, nx, w, ctx = sine_setup
    for u in (w, apply_Q(ctx, w), q_power(ctx, w, 3)):
        np.testing.assert_allclose(apply_Q(ctx, u).data[:, :, 0], w.data[:, :, 0], atol=1e-15)


def test_exit_cache_matches_fresh_traces(variable_spec):
    ctx = QContext(variable_spec, InitialData.zeros(2), 1.5, 12)
    assert ctx.self_check(32) <= 1e-9


@pytest.mark.parametrize(
    "speeds, P, T, nx, bound",
    [
        (("1", "-1"), [[0, 1], [1, 0]], 3.0, 16, 4),
        (("2", "-2"), [[0, 1], [1, 0]], 2.0, 8, 5),
        (("2", "-2"), [[0, 0], [1, 0]], 2.0, 8, 5),
    ],
)
def test_stabilization_index_bounds(speeds, P, T, nx, bound):
    spec = SystemSpec.from_strings(list(speeds), m=1, P=P)
    ctx = QContext(spec, InitialData.zeros(2), T, nx)
    q = stabilization_index(ctx)
    assert q <= bound <= q_bound(ctx)
    for seed in range(3):
        w = sample_Ch(spec, T, seed + 50, nx=nx)
        c = ctx.with_phi(w.initial())
        a, b, c2 = (q_power(c, w, q + d).data for d in range(3))
        assert np.max(np.abs(a - b)) <= 1e-10
        assert np.max(np.abs(b - c2)) <= 1e-10


def test_short_horizon_needs_at_most_two_applications(sine_pair):
    ctx = QContext(sine_pair, InitialData.zeros(2), 0.1, 20)
    assert stabilization_index(ctx) == 2
    absorbing_ctx = QContext(catalog.absorbing(), InitialData.zeros(2), 0.1, 20)
    assert stabilization_index(absorbing_ctx) == 1


def test_solutions_are_fixed_points(sine_setup):
    from hypfts.solver import solve_qpower

    spec, nx, w, ctx = sine_setup
    phi = w.initial()
    u = solve_qpower(spec, phi, ctx.T, ctx=ctx)
    assert np.max(np.abs(apply_Q(ctx.with_phi(phi), u).data - u.data)) <= 1e-12


def test_incompatible_field_warns(sine_setup):
    spec, nx, w, ctx = sine_setup
    bad = PiField(ctx.T, w.data + 0.1)
    with pytest.warns(UserWarning, match="not compatible"):
        apply_Q(ctx, bad)


def test_shape_mismatch(sine_setup):
    spec, nx, w, ctx = sine_setup
    with pytest.raises(ValueError):
        apply_R(ctx, PiField.zeros(2, 1.0, 3, 3))


AUTONOMOUS = [
    catalog.swap(),
    catalog.one_coupling(0.8),
    SystemSpec.from_strings(["1.5 + 0.4*sin(3*x)", "-(1 + x^2)"], ["0.2*x", "0"], m=1,
                            h=["0.5*sin(xi2)", "0.4*xi1 + 0.1*xi1^2"], autonomous=True),
]


@pytest.mark.parametrize("spec", AUTONOMOUS, ids=["swap", "coupling", "variable"])
def test_autonomous_shift(spec):
    nx, q = 12, 2
    dt = 1.0 / (nx * 2.0)
    shift = 2.5  # at least q crossing times and a whole number of steps
    horizon = 3.5
    nt_z, s = round(horizon / dt), round(shift / dt)
    big = QContext(spec, InitialData.zeros(2), horizon + shift, nx, nt_z + s)
    small = QContext(spec, InitialData.zeros(2), horizon, nx, nt_z)
    w = sample_Ch(spec, horizon + shift, seed=1, nx=nx, nt=nt_z + s)
    z = PiField(horizon, w.data[:, :, s:].copy())
    lhs = sr_power(small, z, q).data
    rhs = sr_power(big, w, q).data[:, :, s:]
    late = small.t >= shift
    assert np.max(np.abs(lhs[:, :, late] - rhs[:, :, late])) <= 1e-9
