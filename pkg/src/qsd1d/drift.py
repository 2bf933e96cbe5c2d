"""Drift functions q and the coefficient table built from them.

The diffusion is ``dX = dB - q(X) dt`` killed at 0, so a positive q pushes
the process *towards* the origin. ``Q(y) = int_0^y 2 q``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

import numpy as np

from . import expr
from .quadrature import GL_W, GL_X, cumulative, integrate_finite

# parameter names per family; q(x) in the comments
FAMILIES = {
    "constant": ("c",),             # c
    "linear": ("a",),               # a x
    "power": ("a", "p"),            # a x^p
    "polynomial": ("coefficients",),  # sum_k c_k x^k
    "logistic": ("a", "b"),         # a x - b x^2
}


class DriftError(ValueError):
    pass


@dataclass(frozen=True)
class DriftSpec:
    kind: str
    params: Mapping = field(default_factory=dict)
    text: str | None = None
    ast: object = None

    def __post_init__(self):
        if self.kind == "expr":
            if self.ast is None:
                raise DriftError("expression drift needs an AST")
        elif self.kind in FAMILIES:
            missing = set(FAMILIES[self.kind]) - set(self.params)
            extra = set(self.params) - set(FAMILIES[self.kind])
            if missing or extra:
                raise DriftError(f"{self.kind} drift expects parameters "
                                 f"{FAMILIES[self.kind]}, got {sorted(self.params)}")
            if self.kind == "power" and self.params["p"] < 0:
                raise DriftError("power drift needs p >= 0 (no pole at 0)")
        else:
            raise DriftError(f"unknown drift kind {self.kind!r}")
        params = dict(self.params)
        if "coefficients" in params:
            params["coefficients"] = tuple(float(c) for c in params["coefficients"])
        object.__setattr__(self, "params", MappingProxyType(params))

    # -- evaluation ---------------------------------------------------------
    def q(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        p = self.params
        with np.errstate(all="ignore"):
            if self.kind == "expr":
                return expr.evaluate(self.ast, x)
            if self.kind == "constant":
                return np.full_like(x, float(p["c"]))
            if self.kind == "linear":
                return p["a"] * x
            if self.kind == "power":
                return p["a"] * np.power(x, p["p"])
            if self.kind == "polynomial":
                return np.polynomial.polynomial.polyval(x, p["coefficients"])
            return p["a"] * x - p["b"] * x * x

    @property
    def has_closed_form(self) -> bool:
        return self.kind != "expr"

    def Q_closed(self, y) -> np.ndarray:
        """Closed-form antiderivative Q(y) = int_0^y 2q (families only)."""
        y = np.asarray(y, dtype=float)
        p = self.params
        with np.errstate(over="ignore"):
            if self.kind == "constant":
                return 2.0 * p["c"] * y
            if self.kind == "linear":
                return p["a"] * y * y
            if self.kind == "power":
                e = p["p"] + 1.0
                return 2.0 * p["a"] * np.power(y, e) / e
            if self.kind == "polynomial":
                c = np.asarray(p["coefficients"])
                anti = np.concatenate([[0.0], 2.0 * c / np.arange(1, c.size + 1)])
                return np.polynomial.polynomial.polyval(y, anti)
            if self.kind == "logistic":
                return p["a"] * y * y - 2.0 * p["b"] * y ** 3 / 3.0
        raise DriftError("no closed form for expression drifts")

    def describe(self) -> str:
        if self.kind == "expr":
            return self.text or expr.to_text(self.ast)
        if self.kind == "polynomial":
            return "polynomial" + str(list(self.params["coefficients"]))
        args = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"{self.kind}({args})"

    # -- config -------------------------------------------------------------
    def to_mapping(self) -> dict:
        if self.kind == "expr":
            return {"kind": "expr", "text": self.text or expr.to_text(self.ast)}
        out = {"kind": self.kind}
        for k, v in self.params.items():
            out[k] = list(v) if isinstance(v, tuple) else float(v)
        return out

    @classmethod
    def from_mapping(cls, m: Mapping) -> "DriftSpec":
        m = dict(m)
        kind = m.pop("kind", None)
        if kind is None:
            raise DriftError("drift section needs 'kind'")
        if kind == "expr":
            text = m.pop("text", None)
            if m:
                raise DriftError(f"unknown keys in drift section: {sorted(m)}")
            if not isinstance(text, str):
                raise DriftError("expression drift needs 'text'")
            return parse_drift(text)
        if kind not in FAMILIES:
            raise DriftError(f"unknown drift kind {kind!r}")
        params = {}
        for name in FAMILIES[kind]:
            if name not in m:
                raise DriftError(f"{kind} drift needs {name!r}")
            v = m.pop(name)
            params[name] = [float(c) for c in v] if name == "coefficients" else float(v)
        if m:
            raise DriftError(f"unknown keys in drift section: {sorted(m)}")
        return cls(kind, params)


def parse_drift(text: str) -> DriftSpec:
    """Parse an expression in ``x`` into a drift spec."""
    ast = expr.parse(text)
    return DriftSpec("expr", {}, text=text, ast=ast)


def to_toml(spec: DriftSpec) -> str:
    import tomli_w

    return tomli_w.dumps({"drift": spec.to_mapping()})


def from_toml(text: str) -> DriftSpec:
    import tomli

    data = tomli.loads(text)
    if "drift" not in data:
        raise DriftError("missing [drift] table")
    return DriftSpec.from_mapping(data["drift"])


# --------------------------------------------------------------------------
# coefficient table


class CoefficientTable:
    """Evaluators for q and Q plus cached grid arrays.

    Immutable after construction. ``Q`` works for any ``y >= 0``: closed form
    for parametric families, otherwise exact completion from the nearest
    knot with a 12-point Gauss-Legendre rule (and adaptive quadrature past
    the last knot).
    """

    def __init__(self, spec: DriftSpec, R: float, n: int):
        if not R > 0:
            raise ValueError("R must be positive")
        if n < 16:
            raise ValueError("grid size n must be >= 16")
        self.spec = spec
        self.R = float(R)
        self.n = int(n)
        self.grid = np.linspace(0.0, self.R, self.n + 1)
        qg = spec.q(self.grid)
        if not np.all(np.isfinite(qg)):
            bad = self.grid[~np.isfinite(qg)][0]
            raise DriftError(f"q is not finite at x={bad:g}")
        if spec.has_closed_form:
            self._knots_Q = spec.Q_closed(self.grid)
        else:
            self._knots_Q = cumulative(lambda x: 2.0 * spec.q(x), self.grid, rel_tol=1e-13)
        self._knots_Q[0] = 0.0
        self._knots_Q.flags.writeable = False
        with np.errstate(over="ignore"):
            self.Q_grid = self._knots_Q
            self.expQ_grid = np.exp(self.Q_grid)
            self.expmQ_grid = np.exp(-self.Q_grid)
        for a in (self.grid, self.expQ_grid, self.expmQ_grid):
            a.flags.writeable = False

    def q(self, x) -> np.ndarray:
        return self.spec.q(x)

    def Q(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.spec.has_closed_form:
            return self.spec.Q_closed(y)
        out = np.empty(y.shape)
        flat = y.reshape(-1)
        res = out.reshape(-1)
        inside = flat <= self.R
        if np.any(inside):
            yi = flat[inside]
            j = np.clip(np.searchsorted(self.grid, yi, side="right") - 1, 0, self.n)
            x0 = self.grid[j]
            h = yi - x0
            nodes = x0[:, None] + h[:, None] * GL_X[None, :]
            res[inside] = self._knots_Q[j] + h * (2.0 * self.spec.q(nodes) @ GL_W)
        if np.any(~inside):
            res[~inside] = self._Q_beyond(flat[~inside])
        res[flat == 0.0] = 0.0
        return out

    def _Q_beyond(self, y: np.ndarray) -> np.ndarray:
        order = np.argsort(y)
        ys = y[order]
        vals = np.empty_like(ys)
        cur_x, cur = self.R, float(self._knots_Q[-1])
        f = lambda x: 2.0 * self.spec.q(x)
        for i, t in enumerate(ys):
            if t > cur_x and math.isfinite(cur):
                try:
                    seg, _ = integrate_finite(f, cur_x, t, rel_tol=1e-13)
                except Exception:
                    seg = math.inf
                cur += seg
                cur_x = t
            vals[i] = cur
        out = np.empty_like(vals)
        out[order] = vals
        return out

    def dQ(self, a, b) -> np.ndarray:
        """Q(b) - Q(a) without cancellation when Q itself is large."""
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        a, b = np.broadcast_arrays(a, b)
        Qa, Qb = self.Q(a), self.Q(b)
        with np.errstate(invalid="ignore"):
            diff = Qb - Qa
            big = ~(np.maximum(np.abs(Qa), np.abs(Qb)) <= 1e3 * np.maximum(np.abs(diff), 1.0))
        if np.any(big):
            aa, bb = a[big], b[big]
            total = np.zeros(aa.shape)
            for k in range(4):
                lo = aa + (bb - aa) * (k / 4.0)
                hk = (bb - aa) / 4.0
                nodes = lo[:, None] + hk[:, None] * GL_X[None, :]
                total += hk * (2.0 * self.spec.q(nodes) @ GL_W)
            diff = np.array(diff, dtype=float)
            diff[big] = total
        return diff


def build_coefficients(spec: DriftSpec, R: float, n: int = 1024) -> CoefficientTable:
    return CoefficientTable(spec, R, n)


# --------------------------------------------------------------------------
# regularity


@dataclass
class SmoothnessReport:
    passed: bool
    R: float
    reason: str = ""
    worst_x: float = math.nan
    max_jump: float = 0.0

    def to_dict(self) -> dict:
        return {"passed": self.passed, "R": self.R, "reason": self.reason,
                "worst_x": None if math.isnan(self.worst_x) else self.worst_x,
                "max_jump": self.max_jump}


def _fd_derivative(spec: DriftSpec, x: np.ndarray, h: np.ndarray) -> np.ndarray:
    # centered where the stencil stays in [0, inf), forward otherwise
    central = x - h >= 0.0
    d = np.empty_like(x)
    xc, hc = x[central], h[central]
    d[central] = (spec.q(xc + hc) - spec.q(xc - hc)) / (2.0 * hc)
    xf, hf = x[~central], h[~central]
    d[~central] = (spec.q(xf + hf) - spec.q(xf)) / hf
    return d


def smoothness_probe(spec: DriftSpec, R: float, npoints: int = 2048,
                     factor: float = 1e3) -> SmoothnessReport:
    """Heuristic C^1 check of q on [0, R]; advisory only.

    Fails when q or its finite-difference derivative is not finite, when the
    derivative estimate at a probe point moves by more than ``factor`` times
    its local scale as the step shrinks from 1e-2 to 1e-10 (unbounded
    derivative), or when adjacent probe derivatives jump by more than
    ``factor`` times the smaller of the two.
    """
    x = np.unique(np.concatenate([[0.0], np.geomspace(1e-6, R, npoints // 2),
                                  np.linspace(0.0, R, npoints // 2)]))
    qx = spec.q(x)
    if not np.all(np.isfinite(qx)):
        i = int(np.flatnonzero(~np.isfinite(qx))[0])
        return SmoothnessReport(False, R, "q not finite", float(x[i]), math.inf)
    scale_x = np.maximum(1.0, x)
    d_big = _fd_derivative(spec, x, 1e-2 * scale_x)
    d_small = _fd_derivative(spec, x, 1e-10 * scale_x)
    if not (np.all(np.isfinite(d_big)) and np.all(np.isfinite(d_small))):
        bad = ~(np.isfinite(d_big) & np.isfinite(d_small))
        return SmoothnessReport(False, R, "derivative not finite",
                                float(x[bad][0]), math.inf)
    # rounding noise of the small step
    noise = 1e-15 * np.abs(qx) / (1e-10 * scale_x)
    drift = np.abs(d_small - d_big) - noise
    local = factor * (1.0 + np.abs(d_big))
    if np.any(drift > local):
        i = int(np.argmax(drift / local))
        return SmoothnessReport(False, R, "derivative unbounded under step refinement",
                                float(x[i]), float(drift[i]))
    jumps = np.abs(np.diff(d_big))
    near = factor * (1.0 + np.minimum(np.abs(d_big[:-1]), np.abs(d_big[1:])))
    i = int(np.argmax(jumps / near))
    if jumps[i] > near[i]:
        return SmoothnessReport(False, R, "derivative jump between probe points",
                                float(x[i]), float(jumps[i]))
    return SmoothnessReport(True, R, "", math.nan, float(jumps[i]))
