"""Ground state of L = 1/2 d^2/dx^2 - q d/dx killed at 0, the QSD built from
it, and semigroup diagnostics on the discretised generator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.integrate import solve_ivp

from . import expint
from .drift import CoefficientTable
from .quadrature import IntegralVerdict, TailPolicy, classify_improper, sup_scan

try:
    import numba as nb
    HAVE_NUMBA = True
except Exception:  # pragma: no cover
    HAVE_NUMBA = False

DENSE_EXPM_MAX = 2048
KRYLOV_MAX_NORM_T = 2e4   # above this ||A|| t, use the truncated spectral sum
SPECTRAL_CUT = 40.0


class PreconditionError(ValueError):
    pass


class SpectrumError(RuntimeError):
    pass


class NoSignChange(SpectrumError):
    pass


def _require_h(h_verdict: IntegralVerdict | None, what: str):
    if h_verdict is not None and not h_verdict.convergent:
        raise PreconditionError(
            f"{what} needs hypothesis (H); verdict is {h_verdict.status.value}")


# --------------------------------------------------------------------------
# truncation and the delta bounds


def choose_R(table: CoefficientTable, eps_mass: float = 1e-8, R_max: float = 64.0) -> float:
    """Smallest R with mu[R, inf) < eps_mass * mu(0, inf)."""
    total = float(expint.tail_ratio(table, np.array([0.0]))[0])
    if not math.isfinite(total):
        raise PreconditionError("speed measure has infinite mass")
    target = math.log(eps_mass * total)

    def excess(R):
        r = float(expint.tail_ratio(table, np.array([R]))[0])
        return -float(table.Q(np.array([R]))[0]) + math.log(r) - target

    if excess(R_max) > 0:
        raise PreconditionError(f"mass criterion eps={eps_mass:g} unsatisfiable within R_max={R_max:g}")
    lo, hi = 0.0, R_max
    while hi - lo > 1e-10 * hi:
        mid = 0.5 * (lo + hi)
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    return hi


@dataclass(frozen=True)
class DeltaBounds:
    delta: float
    argsup: float
    lambda1_lo: float
    lambda1_hi: float


def delta_profile(table: CoefficientTable):
    """``x -> Lambda(x) * int_x^inf 2 e^{-Q}``, evaluated as a stable product."""
    def g(x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1)
        return (2.0 * expint.head_ratio(table, flat) * expint.tail_ratio(table, flat)).reshape(x.shape)
    return g


def compute_delta(table: CoefficientTable, h_verdict: IntegralVerdict | None = None,
                  b_max: float | None = None) -> DeltaBounds:
    _require_h(h_verdict, "compute_delta")
    g = delta_profile(table)
    if b_max is None:
        b_max = 4.0 * choose_R(table)
    for _ in range(8):
        x, d = sup_scan(g, 0.0, b_max, refine=True)
        if x < 0.5 * b_max:
            break
        b_max *= 2.0
    else:
        raise SpectrumError("supremum defining delta keeps moving outward")
    return DeltaBounds(d, x, 1.0 / (4.0 * d), 1.0 / d)


# --------------------------------------------------------------------------
# generator


@dataclass(frozen=True)
class GeneratorMatrix:
    """Finite-volume discretisation of L on [0, R].

    Nodes ``x[0..N]``; node 0 carries the absorbing (Dirichlet) condition and
    is not an unknown. ``lower/diag/upper`` are the rows of L for the
    unknowns (in function coordinates); ``logw`` are log mu-weights of the
    unknowns. ``sym_diag/sym_off`` form the symmetric tridiagonal matrix
    W^{1/2} (-L) W^{-1/2}.
    """

    x: np.ndarray
    h: float
    right_bc: str
    lower: np.ndarray
    diag: np.ndarray
    upper: np.ndarray
    logw: np.ndarray
    sym_diag: np.ndarray
    sym_off: np.ndarray
    Q: np.ndarray          # Q at all nodes
    Q_half: np.ndarray     # Q at the N panel midpoints

    @property
    def size(self) -> int:
        return self.diag.size

    @property
    def R(self) -> float:
        return float(self.x[-1])

    @property
    def nodes(self) -> np.ndarray:
        return self.x[1:1 + self.size]

    @property
    def w(self) -> np.ndarray:
        return np.exp(self.logw)

    def apply(self, f: np.ndarray) -> np.ndarray:
        """(L f) at the unknowns; ``f`` holds values at the unknowns."""
        out = self.diag * f
        out[1:] += self.lower[1:] * f[:-1]
        out[:-1] += self.upper[:-1] * f[1:]
        return out

    def inner(self, f, g) -> float:
        return float(np.sum(self.w * f * g))

    def dense(self) -> np.ndarray:
        m = self.size
        A = np.diag(self.diag)
        A[np.arange(1, m), np.arange(m - 1)] = self.lower[1:]
        A[np.arange(m - 1), np.arange(1, m)] = self.upper[:-1]
        return A

    def sym_sparse(self):
        return scipy.sparse.diags([self.sym_off, self.sym_diag, self.sym_off], [-1, 0, 1],
                                  format="csr")

    def semigroup(self, t: float):
        """Dense exp(-t S) from the cached eigendecomposition; None when too large."""
        if self.size > DENSE_EXPM_MAX:
            return None
        vals, vecs = _eigensystem(self)
        return (vecs * np.exp(-t * vals)) @ vecs.T

    def apply_semigroup(self, f: np.ndarray, t: float) -> np.ndarray:
        """``T_t f`` for a function given at the unknowns."""
        if t == 0.0:
            return np.array(f, dtype=float)
        sw = np.exp(0.5 * self.logw)
        v = sw * f
        if self.size <= DENSE_EXPM_MAX:
            vals, vecs = _eigensystem(self)
            vt = vecs @ (np.exp(-t * vals) * (vecs.T @ v))
        elif t * np.max(np.abs(self.sym_diag)) * 2.0 <= KRYLOV_MAX_NORM_T:
            vt = scipy.sparse.linalg.expm_multiply(-t * self.sym_sparse(), v)
        else:
            # Krylov cost grows like ||A|| t; drop modes damped below
            # e^{-SPECTRAL_CUT} relative to the ground mode instead
            vals, vecs = _low_eigensystem(self, SPECTRAL_CUT / t)
            vt = vecs @ (np.exp(-t * vals) * (vecs.T @ v))
        return vt / sw


_EIG_CACHE: dict = {}


def _eigensystem(gen: GeneratorMatrix):
    """Full eigendecomposition of the symmetric form, cached per generator."""
    key = id(gen)
    hit = _EIG_CACHE.get(key)
    if hit is not None and hit[0] is gen:
        return hit[1]
    vals, vecs = scipy.linalg.eigh_tridiagonal(gen.sym_diag, gen.sym_off)
    vals.flags.writeable = False
    vecs.flags.writeable = False
    if len(_EIG_CACHE) >= 8:
        _EIG_CACHE.pop(next(iter(_EIG_CACHE)))
    _EIG_CACHE[key] = (gen, (vals, vecs))
    return vals, vecs


def _low_eigensystem(gen: GeneratorMatrix, width: float):
    """Eigenpairs of the symmetric form below lambda_min + width, cached per
    generator and reused for any narrower request."""
    key = ("low", id(gen))
    hit = _EIG_CACHE.get(key)
    if hit is not None and hit[0] is gen and hit[1][2] >= width:
        return hit[1][:2]
    lo = tridiag_eigenvalues(gen.sym_diag, gen.sym_off, 1)[0]
    vals, vecs = scipy.linalg.eigh_tridiagonal(gen.sym_diag, gen.sym_off, select="v",
                                               select_range=(-np.inf, lo + width))
    if len(_EIG_CACHE) >= 8:
        _EIG_CACHE.pop(next(iter(_EIG_CACHE)))
    _EIG_CACHE[key] = (gen, (vals, vecs, width))
    return vals, vecs


def build_generator(table: CoefficientTable, R: float, n: int,
                    right_bc: str = "neumann") -> GeneratorMatrix:
    """Second-order divergence-form stencil for L on a uniform grid.

    (L f)_i = e^{Q_i}/(2 h c_i) [ e^{-Q_{i+1/2}} (f_{i+1}-f_i)/h
                                  - e^{-Q_{i-1/2}} (f_i-f_{i-1})/h ]
    with c_i = 1/2 on a zero-flux right end. Only differences of Q enter, so
    the matrix stays well scaled however large Q grows.
    """
    if right_bc not in ("neumann", "dirichlet"):
        raise ValueError("right_bc must be 'neumann' or 'dirichlet'")
    if n < 2:
        raise ValueError("need at least 2 intervals")
    N = int(n)
    x = np.linspace(0.0, float(R), N + 1)
    h = float(R) / N
    xm = 0.5 * (x[:-1] + x[1:])
    dl = table.dQ(x[:-1], xm)   # Q_{i+1/2} - Q_i
    dr = table.dQ(xm, x[1:])    # Q_{i+1} - Q_{i+1/2}
    Q = table.Q(x) if table.spec.has_closed_form else np.concatenate([[0.0], np.cumsum(dl + dr)])
    Q_half = Q[:-1] + dl
    m = N if right_bc == "neumann" else N - 1
    i = np.arange(1, m + 1)
    c = np.ones(m)
    if right_bc == "neumann":
        c[-1] = 0.5
    with np.errstate(over="ignore"):
        up = np.exp(-dl[i]) if right_bc == "dirichlet" else np.concatenate([np.exp(-dl[i[:-1]]), [0.0]])
        lo = np.exp(dr[i - 1])
    k = 1.0 / (2.0 * h * h * c)
    upper = k * up
    lower = k * lo
    diag = -(upper + lower)
    logw = -Q[i] + np.log(h * c)
    # symmetric form: off_{i,i+1} = -sqrt(upper_i * lower_{i+1})
    off = -np.exp(0.5 * (dr[i[:-1]] - dl[i[:-1]])) / (2.0 * h * h * np.sqrt(c[:-1] * c[1:]))
    for arr in (x, lower, diag, upper, logw, off, Q, Q_half):
        arr.flags.writeable = False
    return GeneratorMatrix(x, h, right_bc, lower, diag, upper, logw, -diag, off, Q, Q_half)


# --------------------------------------------------------------------------
# symmetric tridiagonal eigenvalues by Sturm bisection


def _sturm_count_py(d, e2, sigma, pivmin):
    count = 0
    qv = d[0] - sigma
    if abs(qv) < pivmin:
        qv = -pivmin
    if qv < 0:
        count += 1
    for i in range(1, d.size):
        qv = d[i] - sigma - e2[i - 1] / qv
        if abs(qv) < pivmin:
            qv = -pivmin
        if qv < 0:
            count += 1
    return count


if HAVE_NUMBA:
    _sturm_count = nb.njit(cache=True)(_sturm_count_py)
else:  # pragma: no cover
    _sturm_count = _sturm_count_py


def sturm_count(d: np.ndarray, e: np.ndarray, sigma: float) -> int:
    """Number of eigenvalues of the symmetric tridiagonal (d, e) below sigma."""
    d = np.ascontiguousarray(d, dtype=float)
    e2 = np.ascontiguousarray(np.asarray(e, dtype=float) ** 2)
    pivmin = np.finfo(float).tiny * max(1.0, float(e2.max()) if e2.size else 1.0)
    return int(_sturm_count(d, e2, float(sigma), pivmin))


def tridiag_eigenvalues(d: np.ndarray, e: np.ndarray, k: int = 1) -> np.ndarray:
    """The k smallest eigenvalues, each by bisection on Sturm counts."""
    d = np.ascontiguousarray(d, dtype=float)
    e = np.asarray(e, dtype=float)
    e2 = np.ascontiguousarray(e ** 2)
    pivmin = np.finfo(float).tiny * max(1.0, float(e2.max()) if e2.size else 1.0)
    ae = np.abs(e)
    rad = np.zeros_like(d)
    rad[:-1] += ae
    rad[1:] += ae
    glo, ghi = float(np.min(d - rad)), float(np.max(d + rad))
    span = max(abs(glo), abs(ghi))
    glo -= 1e-12 * span
    ghi += 1e-12 * span
    out = []
    lo_start = glo
    for j in range(k):
        lo, hi = lo_start, ghi
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if hi - lo <= 2.0 * np.finfo(float).eps * max(abs(lo), abs(hi)) + pivmin or mid in (lo, hi):
                break
            if _sturm_count(d, e2, mid, pivmin) > j:
                hi = mid
            else:
                lo = mid
        out.append(0.5 * (lo + hi))
        lo_start = lo
    return np.array(out)


# --------------------------------------------------------------------------
# ground state


@dataclass
class SpectralResult:
    lambda1: float
    lambda2: float
    x: np.ndarray            # all nodes 0..N
    eta1: np.ndarray         # at all nodes, eta1[0] = 0, mu-normalised
    weights: np.ndarray      # mu-weights at all nodes (0 at node 0)
    mu_density: np.ndarray   # e^{-Q} at all nodes
    R: float
    n: int
    method: str
    residual: float
    right_bc: str = "neumann"
    lambda1_bisection: float = math.nan
    delta: float | None = None
    lambda1_lo: float | None = None
    lambda1_hi: float | None = None
    lambda1_extrapolated: float | None = None
    extra: dict = field(default_factory=dict)

    @property
    def interior(self) -> np.ndarray:
        return self.eta1[1:-1] if self.right_bc == "dirichlet" else self.eta1[1:]

    def summary(self) -> dict:
        d = {k: getattr(self, k) for k in ("lambda1", "lambda2", "R", "n", "method", "residual",
                                          "right_bc", "delta", "lambda1_lo", "lambda1_hi",
                                          "lambda1_extrapolated")}
        d["eta1_max"] = float(np.max(self.eta1))
        d.update(self.extra)
        return d


def _full(gen: GeneratorMatrix, f_unknowns: np.ndarray) -> np.ndarray:
    out = np.zeros(gen.x.size)
    out[1:1 + gen.size] = f_unknowns
    return out


def dirichlet_form(gen: GeneratorMatrix, eta_full: np.ndarray) -> float:
    """-<L eta, eta>_mu as a sum of nonnegative panel terms."""
    with np.errstate(under="ignore"):
        flux = np.exp(-gen.Q_half)
    return float(np.sum(flux * np.diff(eta_full) ** 2) / (2.0 * gen.h))


def inverse_iteration(gen: GeneratorMatrix, sigma: float, maxiter: int = 100,
                      tol: float = 1e-10) -> np.ndarray:
    """Eigenvector of -L nearest ``sigma`` in function coordinates.

    With ``sigma`` at a bisected eigenvalue the solves are nearly singular,
    so successive iterates agree only to ~1e-12; ``tol`` sits above that.
    """
    m = gen.size
    ab = np.zeros((3, m))
    ab[0, 1:] = -gen.upper[:-1]
    ab[1, :] = -gen.diag - sigma
    ab[2, :-1] = -gen.lower[1:]
    v = np.ones(m)
    for it in range(maxiter):
        u = scipy.linalg.solve_banded((1, 1), ab, v, check_finite=False)
        u /= u[np.argmax(np.abs(u))]
        if np.max(np.abs(u - v)) <= tol:
            return u
        v = u
    raise SpectrumError(f"inverse iteration did not converge in {maxiter} iterations")


def ground_state_fd(gen: GeneratorMatrix) -> SpectralResult:
    """Bottom of the spectrum of -L on the grid, with mu-normalised eta1 > 0."""
    lam = tridiag_eigenvalues(gen.sym_diag, gen.sym_off, k=2)
    eta = inverse_iteration(gen, lam[0])
    if eta[np.argmax(np.abs(eta))] < 0:
        eta = -eta
    w = gen.w
    eta /= math.sqrt(float(np.sum(w * eta * eta)))
    full = _full(gen, eta)
    lam1 = dirichlet_form(gen, full)
    res = gen.apply(eta) + lam1 * eta
    residual = math.sqrt(float(np.sum(w * res * res)))
    weights = _full(gen, w)
    with np.errstate(under="ignore"):
        mu_density = np.exp(-gen.Q)
    return SpectralResult(lam1, float(lam[1]), gen.x, full, weights, mu_density, gen.R,
                          gen.x.size - 1, "fd", residual, gen.right_bc,
                          lambda1_bisection=float(lam[0]))


def richardson_lambda1(table: CoefficientTable, R: float, n: int,
                       right_bc: str = "neumann"):
    """FD ground states at n and 2n and the h^2-extrapolated eigenvalue."""
    coarse = ground_state_fd(build_generator(table, R, n, right_bc))
    fine = ground_state_fd(build_generator(table, R, 2 * n, right_bc))
    extrap = (4.0 * fine.lambda1 - coarse.lambda1) / 3.0
    fine.lambda1_extrapolated = extrap
    return extrap, coarse, fine


def _shoot(table: CoefficientTable, lam: float, R: float, rtol: float, dense: bool = False):
    """Integrate 1/2 eta'' - q eta' = -lam eta from 0 with eta(0)=0, eta'(0)=1.

    The state is rescaled whenever it exceeds 1e100; only its direction
    matters for the matching condition.
    """
    def rhs(t, y):
        return [y[1], 2.0 * float(table.q(t)) * y[1] - 2.0 * lam * y[0]]

    def blowup(t, y):
        return abs(y[0]) + abs(y[1]) - 1e100
    blowup.terminal = True

    t0, y0 = 0.0, np.array([0.0, 1.0])
    pieces = []
    scale = 0.0  # log10 of accumulated rescaling
    while True:
        with np.errstate(invalid="ignore", divide="ignore"):
            sol = solve_ivp(rhs, (t0, R), y0, method="RK45", rtol=rtol, atol=1e-300,
                            events=blowup, dense_output=dense)
        if not sol.success:
            raise SpectrumError(f"ODE integration failed: {sol.message}")
        pieces.append((t0, sol.t[-1], sol.sol, scale))
        if sol.status == 1:
            t0 = float(sol.t_events[0][0])
            y0 = np.asarray(sol.y_events[0][0]) * 1e-100
            scale += 100.0
            continue
        return sol.y[:, -1], pieces


def ground_state_shooting(table: CoefficientTable, R: float, bracket, right_bc: str = "neumann",
                          n_grid: int = 2000, rtol: float = 1e-11,
                          lam_tol: float = 1e-10) -> SpectralResult:
    """Eigenvalue by bisection on the sign of the far-end matching function.

    Matching is eta'(R) = 0 (zero flux) or eta(R) = 0 (Dirichlet validation).
    """
    k = 1 if right_bc == "neumann" else 0

    def match(lam):
        y, _ = _shoot(table, lam, R, rtol)
        return math.copysign(1.0, y[k]) if y[k] != 0 else 0.0

    lo, hi = float(bracket[0]), float(bracket[1])
    flo, fhi = match(lo), match(hi)
    if flo == 0.0:
        hi = lo
    elif fhi == 0.0:
        lo = hi
    elif flo == fhi:
        raise NoSignChange(f"matching function has the same sign at {lo:g} and {hi:g}")
    while hi - lo > lam_tol * max(abs(hi), 1e-300):
        mid = 0.5 * (lo + hi)
        fm = match(mid)
        if fm == 0.0:
            lo = hi = mid
            break
        if fm == flo:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)

    gen = build_generator(table, R, n_grid, right_bc)
    _, pieces = _shoot(table, lam, R, rtol, dense=True)
    x = gen.x
    eta = np.zeros(x.size)
    # stitch rescaled pieces back together in log space relative to the last
    last_scale = pieces[-1][3]
    for (a, b, sol, scale) in pieces:
        sel = (x >= a) & (x <= b)
        if np.any(sel):
            eta[sel] = sol(x[sel])[0] * 10.0 ** (scale - last_scale)
    if right_bc == "dirichlet":
        eta[-1] = 0.0
    eta[0] = 0.0
    u = eta[1:1 + gen.size]
    if u[np.argmax(np.abs(u))] < 0:
        eta, u = -eta, -u
    w = gen.w
    nrm = math.sqrt(float(np.sum(w * u * u)))
    eta /= nrm
    u = eta[1:1 + gen.size]
    res = gen.apply(u) + lam * u
    residual = math.sqrt(float(np.sum(w * res * res)))
    with np.errstate(under="ignore"):
        mu_density = np.exp(-gen.Q)
    return SpectralResult(lam, math.nan, x, eta, _full(gen, w), mu_density, float(R), n_grid,
                          "shooting", residual, right_bc)


# --------------------------------------------------------------------------
# the quasi-stationary distribution


@dataclass
class QsdDensity:
    x: np.ndarray
    density: np.ndarray   # w.r.t. Lebesgue
    cdf: np.ndarray
    norm_const: float     # <eta1, 1>_mu

    def cdf_at(self, y) -> np.ndarray:
        return np.interp(y, self.x, self.cdf, left=0.0, right=1.0)

    def quantile(self, u) -> np.ndarray:
        """Inverse of the piecewise-linear cdf."""
        u = np.asarray(u, dtype=float)
        c = self.cdf / self.cdf[-1]
        keep = np.concatenate([[True], np.diff(c) > 0])
        return np.interp(u, c[keep], self.x[keep])

    def mean(self) -> float:
        return float(np.trapezoid(self.x * self.density, self.x))

    def bin_probabilities(self, edges: np.ndarray) -> np.ndarray:
        return np.diff(self.cdf_at(edges))


def build_qsd(result: SpectralResult) -> QsdDensity:
    """nu1 = eta1 mu / <eta1, 1>_mu on the grid of ``result``."""
    if np.any(result.interior <= 0):
        raise SpectrumError("ground state is not positive in the interior")
    c = float(np.sum(result.weights * result.eta1))
    if not c > 0:
        raise SpectrumError("nonpositive normalisation constant; eigenvector sign error")
    dens = result.eta1 * result.mu_density / c
    steps = 0.5 * (dens[1:] + dens[:-1]) * np.diff(result.x)
    cdf = np.concatenate([[0.0], np.cumsum(steps)])
    return QsdDensity(result.x, dens, cdf, c)


# --------------------------------------------------------------------------
# semigroup diagnostics


def conditional_evolution(gen: GeneratorMatrix, phi0: np.ndarray, t: float) -> np.ndarray:
    """Law at time t given survival, as mu-weights summing to one.

    ``phi0`` is the initial law's density w.r.t. mu at the unknowns.
    """
    p = gen.w * gen.apply_semigroup(phi0, t)
    return p / p.sum()


def stationarity_check(qsd: QsdDensity, gen: GeneratorMatrix, times, initial=None) -> dict:
    """L1 distance between the conditioned evolution and nu1 weights."""
    eta = qsd.density[1:1 + gen.size] / np.exp(-gen.Q[1:1 + gen.size])
    target = gen.w * eta
    target = target / target.sum()
    if initial is None:
        phi0 = eta
    else:
        phi0 = np.asarray(initial, dtype=float) / gen.w
    rows = []
    for t in times:
        p = conditional_evolution(gen, phi0, float(t))
        rows.append({"t": float(t), "l1": float(np.sum(np.abs(p - target)))})
    return {"times": [r["t"] for r in rows], "l1": [r["l1"] for r in rows],
            "max_l1": max(r["l1"] for r in rows)}


def _unknowns(gen: GeneratorMatrix, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.size == gen.x.size:
        return f[1:1 + gen.size]
    if f.size == gen.size:
        return f
    raise ValueError("grid function has the wrong length")


def semigroup_product_limit(gen: GeneratorMatrix, ground: SpectralResult, f, g, times) -> dict:
    """e^{lambda1 t} <g, T_t f>_mu against its limit <eta1,f>_mu <eta1,g>_mu."""
    f, g = _unknowns(gen, f), _unknowns(gen, g)
    eta = _unknowns(gen, ground.eta1)
    lam = ground.lambda1
    target = gen.inner(eta, f) * gen.inner(eta, g)
    vals = [math.exp(lam * t) * gen.inner(g, gen.apply_semigroup(f, t)) for t in times]
    err = [abs(v - target) for v in vals]
    rates = []
    floor = 1e-11 * max(abs(target), 1e-300)
    for i in range(len(times) - 1):
        if err[i] > floor and err[i + 1] > floor:
            rates.append(math.log(err[i] / err[i + 1]) / (times[i + 1] - times[i]))
    return {"times": list(map(float, times)), "values": vals, "target": target,
            "relative_error": [e / abs(target) if target else math.inf for e in err],
            "rates": rates, "observed_rate": float(np.median(rates)) if rates else math.nan,
            "spectral_gap": ground.lambda2 - ground.lambda1}


def symmetry_identity_check(gen: GeneratorMatrix, ground: SpectralResult, f, t: float) -> dict:
    """<T_t f, eta1> = <f, T_t eta1> = e^{-lambda1 t} <f, eta1>."""
    f = _unknowns(gen, f)
    eta = _unknowns(gen, ground.eta1)
    a = gen.inner(gen.apply_semigroup(f, t), eta)
    b = gen.inner(f, gen.apply_semigroup(eta, t))
    c = math.exp(-ground.lambda1 * t) * gen.inner(f, eta)
    scale = max(abs(a), abs(b), abs(c), 1e-300)
    return {"t": float(t), "lhs": a, "middle": b, "rhs": c,
            "rel_diff_lhs_middle": abs(a - b) / scale, "rel_diff_middle_rhs": abs(b - c) / scale}


def kernel_domination_check(gen: GeneratorMatrix, ground: SpectralResult, x_nodes, times,
                            eta_floor: float = 1e-14) -> dict:
    """sup_y e^{lambda1 t} r(t,x,y)/eta1(y) per start point x and time t >= 1.

    r(t,x,y) is the transition density w.r.t. mu. Nodes where eta1 is below
    ``eta_floor`` (or whose weight underflows) are excluded and counted.
    """
    times = [float(t) for t in times]
    if any(t < 1.0 for t in times):
        raise PreconditionError("kernel domination is stated for t >= 1")
    eta = _unknowns(gen, ground.eta1)
    logw = gen.logw
    valid = (eta >= eta_floor) & (logw > -1200.0)
    nodes = gen.nodes
    out = []
    for x in x_nodes:
        j = int(np.argmin(np.abs(nodes - x)))
        e_j = np.zeros(gen.size)
        e_j[j] = 1.0
        sups = []
        for t in times:
            E = gen.semigroup(t)
            col = E[:, j] if E is not None else scipy.sparse.linalg.expm_multiply(
                -t * gen.sym_sparse(), e_j)
            r = col * np.exp(-0.5 * (logw + logw[j]))
            ratio = math.exp(ground.lambda1 * t) * r[valid] / eta[valid]
            sups.append(float(np.max(ratio)))
        nonincreasing = all(sups[i + 1] <= sups[i] * (1 + 1e-9) + 1e-12 for i in range(len(sups) - 1))
        out.append({"x": float(nodes[j]), "sup_ratio": sups, "theta": max(sups),
                    "eta1_x": float(eta[j]), "nonincreasing": nonincreasing})
    return {"times": times, "points": out, "excluded_nodes": int(np.sum(~valid)),
            "all_nonincreasing": all(p["nonincreasing"] for p in out)}


def essential_spectrum_test(table: CoefficientTable, n_values, h_verdict: IntegralVerdict | None = None,
                            policy: TailPolicy | None = None) -> dict:
    """s(n) = sup_{r>n} mu[r, inf) int_n^r e^Q, which must decay to 0."""
    _require_h(h_verdict, "essential_spectrum_test")
    s_vals, args, bounds = [], [], []
    for n0 in n_values:
        n0 = float(n0)

        def g(r, n0=n0):
            r = np.asarray(r, dtype=float)
            flat = r.reshape(-1)
            return (expint.tail_ratio(table, flat) * expint.head_ratio(table, flat, lower=n0)).reshape(r.shape)

        b = n0 + max(n0, 4.0)
        for _ in range(8):
            xs, sv = sup_scan(g, n0, b, npoints=2048)
            if xs < n0 + 0.5 * (b - n0):
                break
            b = n0 + 2.0 * (b - n0)
        s_vals.append(sv)
        args.append(xs)
        hv = classify_improper(lambda y: expint.tail_ratio(table, np.asarray(y).reshape(-1)).reshape(np.shape(y)),
                               n0, policy=policy)
        bounds.append(hv.value if hv.convergent else math.inf)
    ns = np.asarray(n_values, dtype=float)
    sv = np.asarray(s_vals)
    pos = sv > 0
    slope = float(np.polyfit(np.log(ns[pos]), np.log(sv[pos]), 1)[0]) if pos.sum() >= 2 else math.nan
    return {"n": ns.tolist(), "s": s_vals, "argsup": args,
            "strictly_decreasing": bool(np.all(np.diff(sv) < 0)),
            "loglog_slope": slope,
            "h_tail_bound": bounds,
            "bounded_by_h_tail": bool(np.all(sv <= np.asarray(bounds) * (1 + 1e-8)))}


def plateau_point(x: np.ndarray, eta: np.ndarray, tol: float = 1e-2) -> float:
    """First node where eta reaches (1 - tol) of its maximum."""
    top = float(np.max(eta))
    return float(x[np.argmax(eta >= (1.0 - tol) * top)])


def boundedness_check(table: CoefficientTable, R: float | None = None, doublings: int = 4,
                      h: float | None = None, tol: float = 0.02, contraction: float = 0.5,
                      plateau_tol: float = 1e-2, interior_frac: float = 0.9,
                      eps_mass: float = 1e-8) -> dict:
    """Ground-state maximum along R, 2R, 4R, ... at fixed grid spacing.

    A bounded eta1 gives maxima that form a Cauchy sequence: the change per
    doubling must fall below ``tol`` and shrink by at least ``contraction``
    from one doubling to the next (an unbounded profile such as log x does
    not contract). Doubling stops once two changes exist and the latest is
    below ``tol``, or when the cell Peclet number q(R) h would exceed 200,
    beyond which the stencil loses accuracy. The strict argmax of an increasing eta1 always sits on
    the last node, so interiority is tested on the plateau point, where eta1
    first comes within ``plateau_tol`` of its maximum.
    """
    if R is None:
        R = choose_R(table, eps_mass)
    if h is None:
        h = R / 1000.0
    Rs, maxima, plateaus, lams = [], [], [], []
    note = ""
    for k in range(doublings + 1):
        Rk = R * 2 ** k
        nk = int(round(Rk / h))
        if abs(float(table.q(Rk))) * h > 200.0:
            note = f"stopped before R={Rk:g}: cell Peclet number above 200"
            break
        g = ground_state_fd(build_generator(table, Rk, nk))
        Rs.append(Rk)
        maxima.append(float(g.eta1.max()))
        plateaus.append(plateau_point(g.x, g.eta1, plateau_tol))
        lams.append(g.lambda1)
        if k >= 2 and abs(maxima[k] - maxima[k - 1]) / maxima[k - 1] < tol:
            break
    m = len(maxima) - 1
    changes = [abs(maxima[k + 1] - maxima[k]) / maxima[k] for k in range(m)]
    ratios = [changes[k + 1] / changes[k] if changes[k] > 0 else 0.0 for k in range(m - 1)]
    first_ok = next((k for k, c in enumerate(changes) if c < tol), None)
    contracting = len(ratios) > 0 and all(r <= contraction for r in ratios)
    fractions = [p / r for p, r in zip(plateaus, Rs)]
    interior = first_ok is not None and all(f <= interior_frac for f in fractions[first_ok:])
    return {"R": Rs, "h": h, "max_eta1": maxima, "relative_change": changes,
            "change_ratio": ratios, "first_doubling_below_tol": first_ok,
            "plateau_x": plateaus, "plateau_fraction": fractions, "lambda1": lams,
            "lambda1_relative_change": [abs(lams[k + 1] - lams[k]) / lams[k] for k in range(m)],
            "note": note,
            "contracting": bool(contracting), "argmax_interior": bool(interior),
            "passed": bool(first_ok is not None and contracting and interior)}


# --------------------------------------------------------------------------
# convenience


def solve_spectrum(table: CoefficientTable, h_verdict: IntegralVerdict | None = None,
                   eps_mass: float = 1e-8, n: int = 2000, R: float | None = None,
                   R_max: float = 64.0) -> SpectralResult:
    """delta bounds, truncation, and the Richardson-extrapolated FD ground state."""
    _require_h(h_verdict, "solve_spectrum")
    if R is None:
        R = choose_R(table, eps_mass, R_max)
    db = compute_delta(table, h_verdict, b_max=4.0 * R)
    extrap, coarse, fine = richardson_lambda1(table, R, n)
    fine.delta = db.delta
    fine.lambda1_lo = db.lambda1_lo
    fine.lambda1_hi = db.lambda1_hi
    fine.extra.update({"delta_argsup": db.argsup, "lambda1_coarse": coarse.lambda1,
                       "eps_mass": eps_mass})
    return fine
