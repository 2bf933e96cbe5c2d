import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsd1d.drift import (DriftError, DriftSpec, build_coefficients, from_toml, parse_drift,
                         smoothness_probe, to_toml)


@pytest.mark.parametrize("c", [0.5, 1.0, 2.0])
def test_constant_closed_form(c):
    t = build_coefficients(DriftSpec("constant", {"c": c}), 4.0, 64)
    assert float(t.Q(np.array([1.0]))[0]) == 2 * c


def test_linear_closed_form():
    t = build_coefficients(DriftSpec("linear", {"a": 1.0}), 4.0, 64)
    assert float(t.Q(np.array([2.0]))[0]) == 4.0


def test_cubic_expression_by_quadrature():
    t = build_coefficients(parse_drift("x^3"), 4.0, 64)
    assert not t.spec.has_closed_form
    assert float(t.Q(np.array([1.0]))[0]) == pytest.approx(0.5, abs=1e-10)
    y = np.array([0.0, 0.37, 2.0, 3.9, 6.5])  # inside and beyond the table
    np.testing.assert_allclose(t.Q(y), y ** 4 / 2, rtol=1e-10, atol=1e-14)


def test_Q_is_zero_at_origin():
    for spec in (parse_drift("exp(x)-1"), DriftSpec("power", {"a": 2.0, "p": 3.0})):
        t = build_coefficients(spec, 3.0, 32)
        assert t.Q(np.array([0.0]))[0] == 0.0
        assert t.Q_grid[0] == 0.0


@pytest.mark.parametrize("spec, closed", [
    (DriftSpec("power", {"a": 2.0, "p": 3.0}), lambda y: y ** 4),
    (DriftSpec("polynomial", {"coefficients": [1.0, 0.0, 3.0]}), lambda y: 2 * y + 2 * y ** 3),
    (DriftSpec("logistic", {"a": 1.0, "b": 0.5}), lambda y: y ** 2 - y ** 3 / 3),
])
def test_family_closed_forms_match_expression_quadrature(spec, closed):
    y = np.linspace(0, 3, 13)
    np.testing.assert_allclose(spec.Q_closed(y), closed(y), rtol=1e-14, atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(1e-4, 1e-2))
def test_Q_difference_quotient_matches_2q(y, h):
    t = build_coefficients(parse_drift("x^3 + sin(x)"), 4.0, 256)
    dq = (t.Q(np.array([y + h]))[0] - t.Q(np.array([y]))[0]) / h
    # mean of 2q over [y, y+h] differs from 2q(y) by O(h q')
    bound = h * (3 * (y + h) ** 2 + 1) * 1.01 + 1e-8
    assert abs(dq - 2 * float(t.q(y))) <= bound


def test_dQ_is_stable_for_large_arguments():
    t = build_coefficients(parse_drift("x^3"), 4.0, 64)
    a, b = np.array([30.0]), np.array([30.001])
    exact = (b ** 4 - a ** 4) / 2
    np.testing.assert_allclose(t.dQ(a, b), exact, rtol=1e-9)


def test_nonfinite_drift_rejected():
    with pytest.raises(DriftError):
        build_coefficients(parse_drift("log(x)"), 2.0, 32)
    with pytest.raises(DriftError):
        build_coefficients(parse_drift("1/(x-1)"), 2.0, 32)


def test_family_validation():
    with pytest.raises(DriftError):
        DriftSpec("constant", {"a": 1.0})
    with pytest.raises(DriftError):
        DriftSpec("power", {"a": 1.0, "p": -1.0})
    with pytest.raises(DriftError):
        DriftSpec("mystery", {})


def test_toml_round_trip():
    for spec in (parse_drift("2*x^3 + x"), DriftSpec("polynomial", {"coefficients": [0, 1, 0, 2]}),
                 DriftSpec("constant", {"c": 1.5})):
        again = from_toml(to_toml(spec))
        x = np.linspace(0, 2, 9)
        np.testing.assert_array_equal(again.q(x), spec.q(x))


def test_mapping_rejects_unknown_keys():
    with pytest.raises(DriftError):
        DriftSpec.from_mapping({"kind": "constant", "c": 1.0, "d": 2.0})
    with pytest.raises(DriftError):
        DriftSpec.from_mapping({"kind": "expr", "text": "x", "extra": 1})


@pytest.mark.parametrize("text", ["x^3", "exp(x)-1", "x^5", "2*x^3+x", "sin(x)", "0", "1.0"])
def test_smoothness_probe_passes_smooth_drifts(text):
    assert smoothness_probe(parse_drift(text), 10.0).passed


def test_smoothness_probe_flags_sqrt():
    rep = smoothness_probe(parse_drift("sqrt(x)"), 10.0)
    assert not rep.passed
    assert rep.worst_x < 0.01
    assert rep.to_dict()["passed"] is False


def test_smoothness_probe_only_catches_gross_violations():
    # a unit kink is a C^1 violation but far below the 1e3 jump threshold
    assert smoothness_probe(parse_drift("sqrt((x-1)^2)"), 4.0).passed
