"""Adaptive quadrature and convergence classification of improper integrals.

Every integrand here is a vectorised callable ``f(x: ndarray) -> ndarray``.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

# Gauss-Kronrod 10/21 (QUADPACK qk21).
_XGK = np.array([
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077208643474695,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
])
_WG = np.array([
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651146,
])

# symmetric 21-node layout on [-1, 1]
NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD_W = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS_W = np.zeros(21)
GAUSS_W[1:10:2] = _WG
GAUSS_W[11:20:2] = _WG[::-1]

GL_X, GL_W = np.polynomial.legendre.leggauss(12)
GL_X = 0.5 * (GL_X + 1.0)  # on [0, 1]
GL_W = 0.5 * GL_W

ABS_TOL = 1e-15


class QuadratureError(RuntimeError):
    pass


class NonFiniteIntegrand(QuadratureError):
    def __init__(self, where: float, overflow: bool):
        super().__init__(f"integrand not finite near x={where:g}")
        self.where = where
        self.overflow = overflow


class SubdivisionLimit(QuadratureError):
    pass


def _gk21(f, a: np.ndarray, b: np.ndarray):
    """Kronrod value and error estimate on each panel [a_i, b_i]."""
    c = 0.5 * (a + b)
    r = 0.5 * (b - a)
    x = c[:, None] + r[:, None] * NODES[None, :]
    fx = np.asarray(f(x), dtype=float)
    if not np.all(np.isfinite(fx)):
        bad = ~np.isfinite(fx)
        where = float(x[bad].flat[0])
        raise NonFiniteIntegrand(where, overflow=bool(np.all(fx[bad] > 0)))
    k = r * (fx @ KRONROD_W)
    g = r * (fx @ GAUSS_W)
    # QUADPACK-style scaling of |K - G|
    resasc = r * (np.abs(fx - (k / np.where(r == 0, 1, 2 * r))[:, None]) @ KRONROD_W)
    err = np.abs(k - g)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where(resasc > 0, scaled, err)
    return k, err


def integrate_finite(f, a: float, b: float, rel_tol: float = 1e-10,
                     abs_tol: float = ABS_TOL, max_panels: int = 4000):
    """Globally adaptive Gauss-Kronrod (10/21) integral of ``f`` over [a, b].

    Returns ``(value, error_estimate)``. Nodes never touch the endpoints, so
    integrable endpoint singularities are handled by repeated bisection.
    """
    if not b > a:
        if a == b:
            return 0.0, 0.0
        raise ValueError("integrate_finite needs a < b")
    k, e = _gk21(f, np.array([a]), np.array([b]))
    heap = [(-e[0], a, b, k[0])]
    total, err = k[0], e[0]
    npanels = 1
    while err > max(abs_tol, rel_tol * abs(total)):
        if npanels >= max_panels:
            raise SubdivisionLimit(
                f"no convergence on [{a:g}, {b:g}] after {npanels} panels "
                f"(value {total:.6g}, error {err:.3g})")
        neg_e, lo, hi, val = heapq.heappop(heap)
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            raise SubdivisionLimit(f"panel at {lo:g} cannot be split further")
        kk, ee = _gk21(f, np.array([lo, mid]), np.array([mid, hi]))
        total += kk[0] + kk[1] - val
        err += ee[0] + ee[1] + neg_e
        heapq.heappush(heap, (-ee[0], lo, mid, kk[0]))
        heapq.heappush(heap, (-ee[1], mid, hi, kk[1]))
        npanels += 1
    # re-sum to shed accumulated cancellation in the running totals
    vals = sorted(item[3] for item in heap)
    errs = sum(-item[0] for item in heap)
    return math.fsum(vals), errs


def cumulative(f, x: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    """``F[i] = int_{x[0]}^{x[i]} f`` for increasing ``x``.

    One vectorised Kronrod pass over all panels; panels whose error estimate
    is too large fall back to :func:`integrate_finite`.
    """
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return np.zeros_like(x)
    a, b = x[:-1], x[1:]
    k, e = _gk21(f, a, b)
    bad = e > np.maximum(ABS_TOL, rel_tol * np.abs(k))
    for i in np.flatnonzero(bad):
        k[i], _ = integrate_finite(f, a[i], b[i], rel_tol=rel_tol)
    return np.concatenate([[0.0], np.cumsum(k)])


# --------------------------------------------------------------------------
# improper integrals on (a, inf)


class Status(str, Enum):
    CONVERGENT = "Convergent"
    DIVERGENT = "Divergent"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class TailPolicy:
    R0: float = 1.0
    K: int = 40
    rel_tol: float = 1e-8
    abs_tol: float = 1e-14
    ceiling: float = 1e12
    consecutive: int = 3
    slope_margin: float = 0.02


@dataclass
class IntegralVerdict:
    status: Status
    value: float = math.nan
    error_estimate: float = math.inf
    evidence: list = field(default_factory=list)  # [(R_k, partial), ...]
    tail_model: dict = field(default_factory=dict)
    note: str = ""

    @property
    def convergent(self) -> bool:
        return self.status is Status.CONVERGENT

    @property
    def divergent(self) -> bool:
        return self.status is Status.DIVERGENT

    def to_dict(self) -> dict:
        d = asdict(self)
        d["status"] = self.status.value
        d["evidence"] = [[_jsonable(r), _jsonable(v)] for r, v in self.evidence]
        d["value"] = _jsonable(self.value)
        d["error_estimate"] = _jsonable(self.error_estimate)
        d["tail_model"] = {k: _jsonable(v) for k, v in self.tail_model.items()}
        return d


def _jsonable(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
    return v


def _local_slope(f_lo: float, f_hi: float) -> float:
    """d log f / d log R between R and 2R."""
    if f_hi <= 0.0:
        return -math.inf
    if f_lo <= 0.0:
        return math.inf
    return math.log(f_hi / f_lo) / math.log(2.0)


def classify_improper(f, a: float = 0.0, rel_tol: float | None = None,
                      policy: TailPolicy | None = None) -> IntegralVerdict:
    """Decide whether ``int_a^inf f`` converges, for eventually nonnegative f.

    Partial integrals are taken at ``R_k = base * 2**k``. Each partial value is
    completed by a power-law tail fitted to f(R_{k-1}), f(R_k); for an
    exponential tail the same formula reduces to f/b asymptotically.

    * Convergent: the tail-completed values pass a Cauchy test for
      ``consecutive`` doublings while the local log-log slope stays below -1.
    * Divergent: a partial value exceeds the ceiling (or overflows), or the
      increments are non-decreasing for ``consecutive`` doublings while the
      slope is >= -1.
    * Inconclusive otherwise, after K doublings.
    """
    policy = policy or TailPolicy()
    tol = policy.rel_tol if rel_tol is None else rel_tol
    m = policy.consecutive
    base = max(policy.R0, 2.0 * a) if a > 0 else policy.R0
    quad_tol = min(1e-11, tol * 1e-3)

    evidence = []
    partial = 0.0
    quad_err = 0.0
    prev_R = a
    prev_f = None
    incs, completed, slopes = [], [], []
    for k in range(policy.K + 1):
        R = base * 2.0 ** k
        try:
            seg, seg_err = integrate_finite(f, prev_R, R, rel_tol=quad_tol,
                                            abs_tol=policy.abs_tol * 1e-3)
        except NonFiniteIntegrand as exc:
            if not exc.overflow:
                return IntegralVerdict(Status.INCONCLUSIVE, evidence=evidence,
                                       note=f"integrand undefined near {exc.where:g}")
            seg, seg_err = math.inf, 0.0
        except SubdivisionLimit as exc:
            return IntegralVerdict(Status.INCONCLUSIVE, evidence=evidence, note=str(exc))
        partial += seg
        quad_err += seg_err
        evidence.append((R, partial))
        if not math.isfinite(partial) or partial > policy.ceiling:
            while len(evidence) < m:
                evidence.append((base * 2.0 ** len(evidence), partial))
            return IntegralVerdict(
                Status.DIVERGENT, value=math.inf, evidence=evidence,
                tail_model={"ceiling": policy.ceiling},
                note="partial integral exceeds divergence ceiling")
        f_R = float(np.asarray(f(np.array([R])))[0])
        if not math.isfinite(f_R):
            return IntegralVerdict(Status.DIVERGENT, value=math.inf, evidence=evidence,
                                   note="integrand overflows")
        incs.append(seg)
        if prev_f is not None:
            s = _local_slope(prev_f, f_R)
            slopes.append(s)
            if s < -1.0:
                tail = 0.0 if f_R == 0.0 or s == -math.inf else f_R * R / (-s - 1.0)
            else:
                tail = math.inf
            completed.append(partial + tail)
        prev_R, prev_f = R, f_R

        if len(completed) >= m + 1:
            last = completed[-(m + 1):]
            diffs = [abs(last[i + 1] - last[i]) for i in range(m)]
            cauchy = all(np.isfinite(last)) and all(
                d <= tol * abs(last[-1]) + policy.abs_tol for d in diffs)
            integrable = all(s < -1.0 - policy.slope_margin for s in slopes[-m:])
            if cauchy and integrable:
                err = max(diffs) + quad_err
                if err <= tol * abs(last[-1]) + policy.abs_tol:
                    return IntegralVerdict(
                        Status.CONVERGENT, value=last[-1], error_estimate=err,
                        evidence=evidence,
                        tail_model={"kind": "power", "slope": slopes[-1],
                                    "tail": last[-1] - partial})
        if len(incs) >= m + 1 and len(slopes) >= m:
            window = incs[-(m + 1):]
            nondecreasing = all(window[i + 1] >= window[i] * (1.0 - 1e-6)
                                for i in range(m)) and window[-1] > 0.0
            flat = all(s >= -1.0 - policy.slope_margin for s in slopes[-m:])
            if nondecreasing and flat:
                return IntegralVerdict(
                    Status.DIVERGENT, value=math.inf, evidence=evidence,
                    tail_model={"kind": "power", "slope": slopes[-1]},
                    note="increments non-decreasing with non-integrable tail slope")
    return IntegralVerdict(Status.INCONCLUSIVE, value=partial, evidence=evidence,
                           tail_model={"kind": "power",
                                       "slope": slopes[-1] if slopes else math.nan},
                           note=f"undecided after {policy.K} doublings")


# --------------------------------------------------------------------------
# suprema


def golden_max(g, lo: float, hi: float, tol: float = 1e-12, maxiter: int = 200):
    """Golden-section search for a maximum of scalar-valued g on [lo, hi]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0

    def G(t):
        return float(np.asarray(g(np.array([t])))[0])

    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    gc, gd = G(c), G(d)
    for _ in range(maxiter):
        if hi - lo <= tol * max(1.0, abs(lo) + abs(hi)):
            break
        if gc >= gd:
            hi, d, gd = d, c, gc
            c = hi - invphi * (hi - lo)
            gc = G(c)
        else:
            lo, c, gc = c, d, gd
            d = lo + invphi * (hi - lo)
            gd = G(d)
    return (c, gc) if gc >= gd else (d, gd)


def sup_scan(g, a: float, b_max: float, refine: bool = True, npoints: int = 4096,
             smallest: float = 1e-8):
    """Supremum of g over (a, b_max]: geometric scan plus golden refinement.

    Scan points are ``a + (b_max - a) * s`` with ``s`` geometric in
    [smallest, 1]. Returns ``(argsup, sup)``.
    """
    if not b_max > a:
        raise ValueError("sup_scan needs a < b_max")
    s = np.geomspace(smallest, 1.0, max(npoints, 2048))
    x = a + (b_max - a) * s
    gx = np.asarray(g(x), dtype=float)
    if not np.all(np.isfinite(gx)):
        bad = x[~np.isfinite(gx)][0]
        raise NonFiniteIntegrand(float(bad), overflow=False)
    i = int(np.argmax(gx))
    best_x, best = float(x[i]), float(gx[i])
    if refine:
        lo = float(x[i - 1]) if i > 0 else a
        hi = float(x[i + 1]) if i + 1 < x.size else float(x[i])
        if hi > lo:
            xr, gr = golden_max(g, lo, hi)
            if gr >= best:
                best_x, best = xr, gr
    return best_x, best
