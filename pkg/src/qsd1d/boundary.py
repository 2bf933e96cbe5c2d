"""Scale function, speed measure, Feller classification and hypothesis (H)."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import expint
from .drift import CoefficientTable, smoothness_probe
from .quadrature import (IntegralVerdict, Status, TailPolicy, classify_improper,
                         integrate_finite)


class InconsistentVerdicts(RuntimeError):
    """(H) converged but a consequence it implies was contradicted."""


class Kind(str, Enum):
    REGULAR = "Regular"
    EXIT = "Exit"
    ENTRANCE = "Entrance"
    NATURAL = "Natural"
    UNCLASSIFIED = "Unclassified"


@dataclass
class ScaleSpeed:
    table: CoefficientTable
    Lambda_at_infinity: IntegralVerdict
    mu_total: IntegralVerdict

    def Lambda(self, x):
        return expint.scale(self.table, x)

    def mu_density(self, y):
        with np.errstate(over="ignore"):
            return np.exp(-self.table.Q(y))

    def mu_head(self, x):
        return expint.mu_head(self.table, x)

    def mu_tail(self, x):
        return expint.mu_tail(self.table, x)


def scale_speed(table: CoefficientTable, policy: TailPolicy | None = None) -> ScaleSpeed:
    def expQ(y):
        with np.errstate(over="ignore"):
            return np.exp(table.Q(y))

    def expmQ(y):
        with np.errstate(over="ignore", under="ignore"):
            return np.exp(-table.Q(y))

    lam = classify_improper(expQ, 0.0, policy=policy)
    mu = classify_improper(expmQ, 0.0, policy=policy)
    return ScaleSpeed(table, lam, mu)


def h_integrand(table: CoefficientTable):
    """``y -> e^{Q(y)} int_y^inf e^{-Q}`` as a vectorised callable."""
    def f(y):
        y = np.asarray(y, dtype=float)
        return expint.tail_ratio(table, y.reshape(-1)).reshape(y.shape)
    return f


def check_hypothesis_h(table: CoefficientTable, policy: TailPolicy | None = None,
                       ss: ScaleSpeed | None = None) -> IntegralVerdict:
    """Verdict on ``int_0^inf e^{Q(y)} (int_y^inf e^{-Q(z)} dz) dy < inf``.

    If the inner integral (the total speed mass) diverges the outer one is
    infinite at every y. A convergent verdict is cross-checked against its
    necessary consequences: finite speed mass and infinite scale at infinity.
    """
    ss = ss or scale_speed(table, policy)
    mu = ss.mu_total
    if mu.divergent:
        return IntegralVerdict(Status.DIVERGENT, value=math.inf, evidence=list(mu.evidence),
                               tail_model=dict(mu.tail_model),
                               note="inner integral int_y^inf e^{-Q} is infinite")
    if not mu.convergent:
        return IntegralVerdict(Status.INCONCLUSIVE, evidence=list(mu.evidence),
                               note="speed-measure mass undecided: " + mu.note)
    verdict = classify_improper(h_integrand(table), 0.0, policy=policy)
    if verdict.convergent and not ss.Lambda_at_infinity.divergent:
        raise InconsistentVerdicts(
            "hypothesis (H) judged convergent but the scale function at infinity "
            f"is {ss.Lambda_at_infinity.status.value}; check quadrature settings")
    return verdict


def feller_sigma_integrand(table: CoefficientTable):
    """``y -> e^{Q(y)} int_0^y e^{-Q}`` (the second Feller integral at infinity)."""
    def f(y):
        y = np.asarray(y, dtype=float)
        flat = y.reshape(-1)
        with np.errstate(over="ignore", invalid="ignore"):
            val = np.exp(table.Q(flat)) * expint.mu_head(table, flat)
        val[flat == 0.0] = 0.0
        return val.reshape(y.shape)
    return f


@dataclass
class BoundaryClassification:
    endpoint: str  # "0" or "inf"
    kind: Kind
    components: dict = field(default_factory=dict)
    note: str = ""

    def to_dict(self) -> dict:
        return {"endpoint": self.endpoint, "kind": self.kind.value, "note": self.note,
                "components": {k: v.to_dict() for k, v in self.components.items()}}


def feller_kind(sigma: IntegralVerdict, nu: IntegralVerdict) -> Kind:
    """Feller's table from the two boundary integrals.

    ``sigma`` finite means the boundary is reachable; ``nu`` finite means the
    process can start from it.
    """
    if sigma.status is Status.INCONCLUSIVE or nu.status is Status.INCONCLUSIVE:
        return Kind.UNCLASSIFIED
    if sigma.convergent and nu.convergent:
        return Kind.REGULAR
    if sigma.convergent:
        return Kind.EXIT
    if nu.convergent:
        return Kind.ENTRANCE
    return Kind.NATURAL


def _local_verdict(f, a: float, b: float) -> IntegralVerdict:
    try:
        val, err = integrate_finite(f, a, b, rel_tol=1e-10)
    except Exception as exc:  # non-finite near the endpoint
        return IntegralVerdict(Status.DIVERGENT, value=math.inf, note=str(exc))
    return IntegralVerdict(Status.CONVERGENT, value=val, error_estimate=err,
                           evidence=[(b, val)])


def classify_boundary(table: CoefficientTable, endpoint: str,
                      policy: TailPolicy | None = None,
                      h_verdict: IntegralVerdict | None = None,
                      smooth: bool | None = None) -> BoundaryClassification:
    if endpoint in ("0", 0):
        d = 1.0
        mud = float(expint.mu_head(table, np.array([d]))[0])

        def sig(y):
            with np.errstate(over="ignore"):
                return np.exp(table.Q(y)) * expint.mu_head(table, y.reshape(-1)).reshape(y.shape)

        def nu(y):
            with np.errstate(over="ignore"):
                return np.exp(table.Q(y)) * (mud - expint.mu_head(table, y.reshape(-1)).reshape(y.shape))

        comps = {"sigma": _local_verdict(sig, 0.0, d), "nu": _local_verdict(nu, 0.0, d)}
        if smooth is None:
            smooth = smoothness_probe(table.spec, table.R).passed
        if smooth:
            return BoundaryClassification("0", Kind.REGULAR, comps,
                                          note="q is C^1 on [0, inf): 0 is regular")
        return BoundaryClassification("0", feller_kind(comps["sigma"], comps["nu"]), comps,
                                      note="smoothness probe failed; kind from local integrals")
    if endpoint not in ("inf", "+inf", math.inf):
        raise ValueError(f"endpoint must be 0 or inf, got {endpoint!r}")
    nu = h_verdict if h_verdict is not None else check_hypothesis_h(table, policy)
    sigma = classify_improper(feller_sigma_integrand(table), 0.0, policy=policy)
    kind = feller_kind(sigma, nu)
    return BoundaryClassification("inf", kind, {"sigma": sigma, "nu": nu})


def classification_report(table: CoefficientTable, policy: TailPolicy | None = None) -> dict:
    """Everything the ``classify`` command prints."""
    probe = smoothness_probe(table.spec, table.R)
    ss = scale_speed(table, policy)
    h = check_hypothesis_h(table, policy, ss=ss)
    at0 = classify_boundary(table, "0", policy, smooth=probe.passed)
    atinf = classify_boundary(table, "inf", policy, h_verdict=h)
    lam = ss.Lambda_at_infinity
    if lam.divergent:
        lifetime = "Lambda(inf) = inf: P_x(tau < inf) = 1 for every x > 0"
    elif lam.convergent:
        lifetime = "Lambda(inf) < inf: the process escapes to infinity with positive probability"
    else:
        lifetime = "undecided: Lambda(inf) verdict inconclusive"
    notes = []
    if h.divergent:
        notes.append("hypothesis (H) fails: uniqueness not guaranteed; see non-(H) regime")
    elif h.status is Status.INCONCLUSIVE:
        notes.append("hypothesis (H) undecided")
    else:
        notes.append("hypothesis (H) holds: exactly one quasi-stationary distribution")
    return {
        "drift": table.spec.to_mapping(),
        "smoothness": probe.to_dict(),
        "hypothesis_H": h.to_dict(),
        "Lambda_at_infinity": lam.to_dict(),
        "mu_total": ss.mu_total.to_dict(),
        "boundaries": [at0.to_dict(), atinf.to_dict()],
        "finite_lifetime": lifetime,
        "notes": notes,
    }
