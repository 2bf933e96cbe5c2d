import math

import numpy as np
import pytest

from qsd1d.boundary import (Kind, check_hypothesis_h, classification_report, classify_boundary,
                            feller_kind, scale_speed)
from qsd1d.drift import DriftSpec, build_coefficients, parse_drift
from qsd1d.quadrature import IntegralVerdict, Status

# frozen with scipy QUADPACK on finite inner ranges plus the 1/(2q) tail
H_ORACLE = {
    "x^3": 0.8215654505837781,
    "x^5": 0.7166597366174311,
    "2*x^3+x": 0.4348648420997985,
    "exp(x)-1": 0.625,
}
MU_ORACLE = {
    "x^3": 1.077900274770464,
    "x^5": 1.1141324317875694,
    "2*x^3+x": 0.6842134278677544,
    "exp(x)-1": 0.75,
}


def table(text):
    return build_coefficients(parse_drift(text), 16.0, 1024)


@pytest.mark.parametrize("text", sorted(H_ORACLE))
def test_h_convergent_with_value(text):
    t = table(text)
    ss = scale_speed(t)
    h = check_hypothesis_h(t, ss=ss)
    assert h.status is Status.CONVERGENT
    assert h.value == pytest.approx(H_ORACLE[text], rel=1e-8)
    assert ss.mu_total.value == pytest.approx(MU_ORACLE[text], rel=1e-10)
    assert ss.Lambda_at_infinity.divergent


def test_cubic_speed_mass_closed_form():
    # int_0^inf exp(-y^4/2) dy = 2^{1/4} Gamma(5/4)
    ss = scale_speed(table("x^3"))
    assert ss.mu_total.value == pytest.approx(2 ** 0.25 * math.gamma(1.25), rel=1e-12)


@pytest.mark.parametrize("text", ["0", "0.5", "1", "2", "x"])
def test_h_divergent(text):
    assert check_hypothesis_h(table(text)).status is Status.DIVERGENT


def test_divergent_mass_short_circuits():
    h = check_hypothesis_h(table("0"))
    assert h.divergent and math.isinf(h.value)
    assert "infinite" in h.note


@pytest.mark.parametrize("sigma, nu, kind", [
    (Status.CONVERGENT, Status.CONVERGENT, Kind.REGULAR),
    (Status.CONVERGENT, Status.DIVERGENT, Kind.EXIT),
    (Status.DIVERGENT, Status.CONVERGENT, Kind.ENTRANCE),
    (Status.DIVERGENT, Status.DIVERGENT, Kind.NATURAL),
    (Status.INCONCLUSIVE, Status.DIVERGENT, Kind.UNCLASSIFIED),
])
def test_feller_table(sigma, nu, kind):
    assert feller_kind(IntegralVerdict(sigma), IntegralVerdict(nu)) is kind


@pytest.mark.parametrize("text, kind", [
    ("x^3", Kind.ENTRANCE), ("exp(x)-1", Kind.ENTRANCE), ("x^5", Kind.ENTRANCE),
    ("x", Kind.NATURAL), ("1", Kind.NATURAL), ("0", Kind.NATURAL),
])
def test_kind_at_infinity(text, kind):
    assert classify_boundary(table(text), "inf").kind is kind


def test_zero_is_regular_for_smooth_drift():
    b = classify_boundary(table("x^3"), "0")
    assert b.kind is Kind.REGULAR
    assert all(v.convergent for v in b.components.values())


def test_negative_drift_escapes():
    # q = -1 pushes to infinity: the scale function stays bounded
    t = build_coefficients(DriftSpec("constant", {"c": -1.0}), 16.0, 256)
    ss = scale_speed(t)
    assert ss.Lambda_at_infinity.convergent
    assert ss.Lambda_at_infinity.value == pytest.approx(0.5, rel=1e-8)
    rep = classification_report(t)
    assert "escapes" in rep["finite_lifetime"]


def test_report_notes():
    rep = classification_report(table("1.0"))
    assert rep["hypothesis_H"]["status"] == "Divergent"
    assert any("uniqueness not guaranteed; see non-(H) regime" in n for n in rep["notes"])
    rep = classification_report(table("x^3"))
    assert [b["kind"] for b in rep["boundaries"]] == ["Regular", "Entrance"]
    assert "P_x(tau < inf) = 1" in rep["finite_lifetime"]


def test_bad_endpoint():
    with pytest.raises(ValueError):
        classify_boundary(table("x"), "1")
