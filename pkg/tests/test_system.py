import json
import math

import numpy as np
import pytest

from oracles import crossing_time_quad
from hypfts import catalog
from hypfts.characteristics import SpeedSignError
from hypfts.system import (
    InvalidSpecError,
    SystemSpec,
    compatibility_defect,
    crossing_times,
    nilpotency_index,
    require_valid,
    validate,
)


def test_sine_pair_passes_every_check(sine_pair):
    report = validate(sine_pair)
    assert report.ok
    assert report.checks["speed_sign"].status == "pass"
    assert report.checks["homogeneous"].status == "pass"
    assert report.checks["autonomous"].status == "skipped"
    # |d/dxi2 r sin xi2| <= 1.5 and |d/dxi1 sin^2(s xi1)| <= 0.8
    assert 0.5 < report.gradient_sup <= 1.5 + 1e-6


def test_sign_change_in_speed_is_located():
    spec = SystemSpec.from_strings(["t - 2", "-1"], m=1, P=[[0, 0], [0, 0]])
    check = validate(spec).checks["speed_sign"]
    assert check.status == "fail"
    component, x, t = check.location
    assert component == 1
    assert t < 3.0  # a_1 = t - 2 < 1 there
    assert check.worst == pytest.approx(3.0)  # floor minus a_1 at t = 0


def test_delayed_forcing_is_not_homogeneous():
    spec = catalog.delayed_forcing().spec
    check = validate(spec).checks["homogeneous"]
    assert check.status == "fail"
    component, t = check.location
    assert component == 1 and t > 4.0
    g5 = math.exp(-1.0)
    assert check.worst >= 0.5 * g5


def test_require_valid_blocks_unless_overridden():
    spec = SystemSpec.from_strings(["t - 2", "-1"], m=1, P=[[0, 0], [0, 0]])
    with pytest.raises(InvalidSpecError, match="speed_sign"):
        require_valid(spec)
    assert not require_valid(spec, override=True).ok


def test_autonomy_check_detects_time_dependence():
    spec = SystemSpec.from_strings(["1", "-1"], m=1, h=["sin(t)*xi2", "xi1"], autonomous=True)
    assert validate(spec).checks["autonomous"].status == "fail"
    assert validate(catalog.swap()).checks["autonomous"].status == "pass"


def test_defect_of_zero_data_vanishes(sine_pair):
    np.testing.assert_array_equal(compatibility_defect(sine_pair, np.zeros(2)), [0.0, 0.0])


def test_defect_for_linear_ramps(sine_pair):
    phi = lambda x: np.array([x, 1.0 - x])
    expected = np.array([0.0 - 1.0 * math.sin(1.0), 0.0 - math.sin(0.8 * 1.0) ** 2])
    np.testing.assert_allclose(compatibility_defect(sine_pair, phi), expected, rtol=1e-15)


def test_defect_for_symmetric_constants():
    np.testing.assert_array_equal(compatibility_defect(catalog.swap(), np.ones(2)), [0.0, 0.0])


@pytest.mark.parametrize(
    "P, nu",
    [
        ([[0, 1], [0, 0]], 2),
        ([[0, 1], [1, 0]], None),
        ([[0, 0], [1, 0]], 2),
        ([[1, 0], [0, 1]], None),
        ([[0, 0], [0, 0]], 1),
        ([[0, 1, 1], [0, 0, 1], [0, 0, 0]], 3),
        ([[0, 0, 0], [2, 0, 0], [0, 0, 0]], 2),
        ([[0, 0, 1], [1, 0, 0], [0, 1, 0]], None),
    ],
)
def test_nilpotency_index(P, nu):
    assert nilpotency_index(P) == nu


@pytest.mark.parametrize("seed", range(20))
def test_nilpotency_index_agrees_with_matrix_powers(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 6))
    P = rng.normal(size=(n, n)) * (rng.random((n, n)) < 0.35)
    perm = rng.permutation(n)
    if seed % 2 == 0:  # force an acyclic pattern half of the time
        P = np.triu(P, 1)[np.ix_(perm, perm)]
    nu = nilpotency_index(P)
    A = np.abs(P)
    powers = [np.eye(n)]
    for _ in range(n + 1):
        powers.append(powers[-1] @ A)
    if nu is None:
        assert np.any(powers[n] != 0)
    else:
        assert np.all(powers[nu] == 0)
        assert np.any(powers[nu - 1] != 0)


@pytest.mark.parametrize("speeds, expected", [(("1", "-1"), [1.0, 1.0]), (("2", "-1"), [0.5, 1.0])])
def test_constant_crossing_times(speeds, expected):
    ct = crossing_times(catalog.absorbing(speeds), T=3.0)
    np.testing.assert_allclose(ct[:, 0], expected)
    np.testing.assert_allclose(ct[:, 1], expected)
    assert ct[:, 0].min() == min(expected)


def test_variable_crossing_time_matches_quadrature():
    spec = SystemSpec.from_strings(["2 + sin(x)", "-1"], m=1, P=[[0, 0], [0, 0]])
    ct = crossing_times(spec, T=2.0)
    ref = crossing_time_quad(lambda s: 1.0 / (2.0 + math.sin(s)))
    assert abs(ct[0, 0] - ref) <= 1e-9
    assert abs(ct[0, 1] - ref) <= 1e-9
    assert ct.min() <= 1.0 / spec.speed_floor


def test_crossing_times_refuse_slow_speeds():
    spec = SystemSpec.from_strings(["0.5", "-1"], m=1, P=[[0, 0], [0, 0]])
    with pytest.raises(SpeedSignError):
        crossing_times(spec, 1.0)


@pytest.mark.parametrize("m", [0, 2])
def test_one_signed_systems(m):
    speeds = ["1", "2"] if m == 2 else ["-1", "-2"]
    spec = SystemSpec.from_strings(speeds, m=m, P=[[0, 0], [0, 0]])
    assert validate(spec).ok
    np.testing.assert_allclose(crossing_times(spec, 1.0)[:, 0], [1.0, 0.5])


def test_json_round_trip(tmp_path):
    spec = catalog.nonlinear_pair("suf1").spec
    path = tmp_path / "model.json"
    path.write_text(json.dumps(spec.to_dict()))
    again = SystemSpec.from_json(path)
    assert again.to_dict() == spec.to_dict()
    xi = np.array([[0.3], [-0.2]])
    np.testing.assert_array_equal(again.h(1.7, xi), spec.h(1.7, xi))


def test_json_missing_field(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n": 1, "m": 1, "speeds": ["1"]}))
    with pytest.raises(InvalidSpecError, match="boundary"):
        SystemSpec.from_json(path)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(speeds=["1"], m=2, P=[[0]]),
        dict(speeds=["1", "-1"], m=1, P=[[0]]),
        dict(speeds=["1", "-1"], m=1, h=["xi1"]),
        dict(speeds=["1"], m=1),
    ],
)
def test_malformed_specs(kwargs):
    with pytest.raises(InvalidSpecError):
        SystemSpec.from_strings(**kwargs)
