import math

import numpy as np
import pytest

from oracles import sine_coupling, unit_pair_solution, window_zero
from hypfts import catalog
from hypfts.pifield import InitialData, PiField, sample_Ch
from hypfts.qcalc import QContext
from hypfts.solver import (
    IncompatibleDataError,
    compat_correct,
    l2_norm,
    mollify,
    residuals,
    solve_l2,
    solve_marching,
    solve_qpower,
)
from hypfts.system import compatibility_defect

PI = "3.141592653589793"
BUMPY = [f"sin({PI}*x)^2*(1 + x)", f"0.5*sin({PI}*x)^2"]


def test_zero_data_zero_solution(sine_pair):
    phi = InitialData.zeros(2)
    assert not solve_qpower(sine_pair, phi, 2.0, nx=10).data.any()
    assert not solve_marching(sine_pair, phi, 2.0, nx=10).data.any()


def test_transport_with_absorbing_boundary(unit_zero):
    nx, T = 20, 2.0
    u = solve_qpower(unit_zero, BUMPY, T, nx=nx)
    x = np.arange(nx + 1) / nx
    for k in range(0, 2 * nx + 1, 5):
        t = k / nx
        expected = np.where(x > t, np.sin(np.pi * (x - t)) ** 2 * (1 + x - t), 0.0)
        np.testing.assert_allclose(u.data[0, :, k], expected, atol=1e-15)


def test_sine_coupling_matches_independent_recursion():
    spec = catalog.nonlinear_pair("baseline").spec
    nx, T = 16, 3.0
    phi_vals = sample_Ch(spec, T, seed=21, nx=nx).data[:, :, 0]
    phi = InitialData(phi_vals)
    u = solve_qpower(spec, phi, T, nx=nx)
    h1, h2 = sine_coupling(lambda t: 1 + 0.5 * math.sin(t), lambda t: 0.8 * math.cos(2 * t))
    oracle = unit_pair_solution(lambda j, x: float(phi.at(x)[j]), h1, h2)
    for i in range(0, nx + 1, 3):
        for k in range(0, 3 * nx + 1, 4):
            for j in range(2):
                assert u.data[j, i, k] == pytest.approx(oracle(j, i / nx, k / nx), abs=1e-12)


def test_window_of_zeros_empties_the_domain():
    spec = catalog.nonlinear_pair("suf2").spec
    phi = InitialData(sample_Ch(spec, 4.0, seed=3, nx=20).data[:, :, 0])
    u = solve_qpower(spec, phi, 4.0, nx=20)
    late = u.t >= 2.5 + 1.0 - 1e-12
    assert np.max(np.abs(u.data[:, :, late])) <= 1e-10
    assert np.max(np.abs(u.data[:, :, u.t < 2.0])) > 1e-3
    # the oracle agrees that zero boundary values on [1, 2.5] silence the system
    r = lambda t: window_zero(t, 1, 2.5)
    oracle = unit_pair_solution(lambda j, x: float(phi.at(x)[j]), *sine_coupling(r, r))
    assert oracle(0, 0.5, 3.7) == 0.0 and oracle(1, 0.2, 3.6) == 0.0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_marching_agrees_with_q_power(sine_pair, seed):
    phi = InitialData(sample_Ch(sine_pair, 3.0, seed, nx=20).data[:, :, 0])
    a = solve_qpower(sine_pair, phi, 3.0, nx=20)
    b = solve_marching(sine_pair, phi, 3.0, nx=20)
    assert np.max(np.abs(a.data - b.data)) <= 1e-9


def test_marching_agrees_on_variable_coefficients(variable_spec):
    phi = InitialData(sample_Ch(variable_spec, 2.0, 4, nx=12).data[:, :, 0])
    a = solve_qpower(variable_spec, phi, 2.0, nx=12)
    b = solve_marching(variable_spec, phi, 2.0, nx=12)
    assert np.max(np.abs(a.data - b.data)) <= 1e-8


def test_swap_solutions_are_periodic():
    spec = catalog.swap()
    phi = InitialData.from_exprs([f"sin({PI}*x)", f"sin({PI}*x)"])
    nx = 20
    u = solve_marching(spec, phi, 5.0, nx=nx)
    shift = 2 * nx
    np.testing.assert_allclose(u.data[:, :, shift:], u.data[:, :, :-shift], atol=1e-9)
    v = solve_qpower(spec, phi, 5.0, nx=nx)
    assert np.max(np.abs(u.data - v.data)) <= 1e-12


def test_incompatible_data_are_refused(unit_zero):
    with pytest.raises(IncompatibleDataError):
        solve_qpower(unit_zero, ["1", "1"], 1.0, nx=8)
    with pytest.raises(IncompatibleDataError):
        solve_marching(unit_zero, ["1", "1"], 1.0, nx=8)


def test_solving_is_deterministic(variable_spec):
    phi = InitialData(sample_Ch(variable_spec, 1.5, 9, nx=10).data[:, :, 0])
    a = solve_qpower(variable_spec, phi, 1.5, nx=10)
    ctx = QContext(variable_spec, InitialData.zeros(2), 1.5, 10)
    b = solve_qpower(variable_spec, phi, 1.5, ctx=ctx)
    assert np.array_equal(a.data, b.data)


def test_residuals_of_exact_transport(unit_zero):
    u = solve_qpower(unit_zero, BUMPY, 2.0, nx=40)
    res = residuals(unit_zero, u, InitialData.from_exprs(BUMPY))
    assert res.fixed_point <= 1e-9
    assert res.pde <= 1e-9
    assert res.initial <= 1e-15
    assert res.boundary <= 1e-15
    assert "fixed_point" in str(res)


def test_residuals_detect_a_perturbed_node(unit_zero):
    phi = InitialData.from_exprs(BUMPY)
    u = solve_qpower(unit_zero, phi, 2.0, nx=20)
    bad = u.copy()
    eps = 1e-3
    bad.data[0, 10, 5] += eps
    assert residuals(unit_zero, bad, phi).fixed_point >= eps * (1 - 1e-9)


def test_residuals_of_zero(sine_pair):
    res = residuals(sine_pair, PiField.zeros(2, 1.0, 10, 10), InitialData.zeros(2))
    assert res.as_dict()["fixed_point"] == 0.0
    assert res.pde == res.initial == res.boundary == 0.0


def test_variable_coefficients_pde_residual_converges(variable_spec):
    phi = InitialData(compat_correct(
        variable_spec, np.stack([0.3 * np.sin(np.pi * np.linspace(0, 1, 401))] * 2), 0.25))
    errors = []
    for nx in (12, 24):
        u = solve_qpower(variable_spec, phi, 1.0, nx=nx)
        res = residuals(variable_spec, u, phi)
        assert res.fixed_point <= 1e-6
        errors.append(res.pde)
    assert errors[1] < 0.7 * errors[0]


def test_mollifier_keeps_constants():
    vals = mollify(lambda x: np.ones((2,) + np.shape(x)), 0.1, 50)
    np.testing.assert_allclose(vals, 1.0, atol=1e-13)


def test_compat_correction_fixes_the_corners(sine_pair):
    vals = np.tile(np.linspace(0.2, 0.6, 41), (2, 1))
    fixed = compat_correct(sine_pair, vals, 0.2)
    assert np.max(np.abs(compatibility_defect(sine_pair, fixed))) <= 1e-14
    np.testing.assert_array_equal(fixed[:, 10:31], vals[:, 10:31])


def test_l2_norm_of_constant():
    assert l2_norm(np.full((2, 11), 3.0)) == pytest.approx(math.sqrt(18.0))


def test_l2_of_smooth_compatible_data_is_unchanged():
    spec = catalog.swap()
    u, report = solve_l2(spec, lambda x: np.full((2,) + np.shape(x), 0.7), 2.0, nx=40)
    assert np.all(report.distances <= 1e-6)
    assert np.allclose(u.data, 0.7)


def test_step_data_vanish_after_one_crossing(unit_zero):
    step = lambda x: np.stack([np.where(np.asarray(x) <= 0.5, 1.0, 0.0), 0 * np.asarray(x)])
    u, report = solve_l2(unit_zero, step, 2.0, nx=100)
    assert l2_norm(u.slice(1.5)) <= 1e-3
    assert report.monotone
    assert "monotone: True" in str(report)
