"""Monte Carlo for dX = dB - q(X) dt killed at 0.

Paths are processed in fixed blocks. Block ``b`` owns the counter-based
stream ``Philox(key = seed + b * 2**64)`` and always draws one initial
uniform per path, then one normal and one uniform per path and step, dead
or alive. Results therefore depend only on (seed, config), never on the
number of workers, and runs that differ only in the initial law share
their noise path by path.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .drift import DriftSpec
from .spectrum import GeneratorMatrix, QsdDensity

BLOCK_SIZE = 8192
KS_999 = 1.949   # asymptotic 99.9% quantile of sqrt(n) * KS
KS_99 = 1.628


class InsufficientData(ValueError):
    pass


class ZeroSurvivors(ValueError):
    pass


# --------------------------------------------------------------------------
# initial laws


@dataclass(frozen=True)
class InitialLaw:
    """A law on (0, inf), sampled by inversion of one uniform per path.

    kinds: point(x), uniform(a, b), exponential(rate, shift),
    pareto(alpha, x_min, truncation), custom(x, cdf).
    """

    kind: str
    params: tuple = ()
    table: tuple | None = None  # (x, cdf) for custom laws

    def __post_init__(self):
        k, p = self.kind, self.params
        if k == "point":
            if not (len(p) == 1 and p[0] > 0):
                raise ValueError("point mass needs x > 0")
        elif k == "uniform":
            if not (len(p) == 2 and 0 <= p[0] < p[1]):
                raise ValueError("uniform needs 0 <= a < b")
        elif k == "exponential":
            if not (len(p) == 2 and p[0] > 0 and p[1] >= 0):
                raise ValueError("exponential needs rate > 0 and shift >= 0")
        elif k == "pareto":
            if not (len(p) == 3 and p[0] > 0 and p[1] > 0 and p[2] > p[1]):
                raise ValueError("pareto needs alpha > 0, x_min > 0, truncation > x_min")
        elif k == "custom":
            if self.table is None:
                raise ValueError("custom law needs an (x, cdf) table")
            x, c = (np.asarray(a, dtype=float) for a in self.table)
            if x.shape != c.shape or x.size < 2 or np.any(np.diff(x) <= 0) or np.any(np.diff(c) < 0):
                raise ValueError("custom table must be increasing x with nondecreasing cdf")
            if x[0] < 0 or c[-1] <= 0:
                raise ValueError("custom law must live on [0, inf) and have positive mass")
        else:
            raise ValueError(f"unknown initial law {k!r}")

    @classmethod
    def point(cls, x):
        return cls("point", (float(x),))

    @classmethod
    def uniform(cls, a, b):
        return cls("uniform", (float(a), float(b)))

    @classmethod
    def exponential(cls, rate=1.0, shift=0.0):
        return cls("exponential", (float(rate), float(shift)))

    @classmethod
    def pareto(cls, alpha, x_min, truncation):
        return cls("pareto", (float(alpha), float(x_min), float(truncation)))

    @classmethod
    def custom(cls, x, cdf):
        return cls("custom", (), (tuple(map(float, x)), tuple(map(float, cdf))))

    @classmethod
    def from_qsd(cls, qsd: QsdDensity):
        return cls.custom(qsd.x, qsd.cdf / qsd.cdf[-1])

    def sample(self, u: np.ndarray) -> np.ndarray:
        """Inverse cdf at uniforms in (0, 1)."""
        u = np.asarray(u, dtype=float)
        k, p = self.kind, self.params
        if k == "point":
            return np.full(u.shape, p[0])
        if k == "uniform":
            return p[0] + (p[1] - p[0]) * u
        if k == "exponential":
            return p[1] - np.log1p(-u) / p[0]
        if k == "pareto":
            a, xm, T = p
            return xm * (1.0 - u * (1.0 - (xm / T) ** a)) ** (-1.0 / a)
        x, c = (np.asarray(a, dtype=float) for a in self.table)
        c = c / c[-1]
        keep = np.concatenate([[True], np.diff(c) > 0])
        return np.interp(u, c[keep], x[keep])

    def describe(self) -> str:
        if self.kind == "custom":
            return f"custom({len(self.table[0])} nodes)"
        return f"{self.kind}({', '.join(f'{v:g}' for v in self.params)})"

    def to_mapping(self) -> dict:
        d = {"kind": self.kind, "params": list(self.params)}
        if self.table is not None:
            d["table"] = {"x": list(self.table[0]), "cdf": list(self.table[1])}
        return d


# --------------------------------------------------------------------------
# configuration and results


@dataclass(frozen=True)
class SimConfig:
    dt: float = 1e-3
    t_max: float = 1.0
    n_paths: int = 20000
    seed: int = 12345
    bridge_correction: bool = True
    initial: InitialLaw = field(default_factory=lambda: InitialLaw.point(1.0))
    hist_R: float = 5.0
    n_bins: int = 128
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if not self.t_max >= self.dt:
            raise ValueError("t_max must be at least dt")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if not self.hist_R > 0 or self.n_bins < 1 or self.block_size < 1:
            raise ValueError("histogram and block settings must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(0.0, self.hist_R, self.n_bins + 1)

    def with_initial(self, initial: InitialLaw) -> "SimConfig":
        return replace(self, initial=initial)


@dataclass
class ConditionalEmpirical:
    """Survivors at one observation time.

    ``counts`` bins survivors on (0, hist_R]; survivors beyond hist_R fall in
    the last bin (also counted in ``overflow``) so the histogram has mass 1.
    """

    t: float
    step: int
    n_paths: int
    survivors: int
    edges: np.ndarray
    counts: np.ndarray
    overflow: int
    samples: np.ndarray  # sorted survivor positions

    @property
    def survival_estimate(self) -> float:
        return self.survivors / self.n_paths

    @property
    def survival_stderr(self) -> float:
        p = self.survival_estimate
        return math.sqrt(p * (1.0 - p) / self.n_paths)

    @property
    def mass(self) -> np.ndarray:
        if self.survivors == 0:
            return np.zeros(self.counts.size)
        return self.counts / self.survivors

    @property
    def ecdf_at_edges(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.mass)])

    def mean(self) -> float:
        return float(np.mean(self.samples)) if self.survivors else math.nan


# --------------------------------------------------------------------------
# the simulation kernel


def _drift_step(spec: DriftSpec, x: np.ndarray, dt: float) -> np.ndarray:
    """x - q(x) dt, with the drift flow sub-stepped where one Euler step
    would move a path by more than 5% of its position."""
    qx = spec.q(x)
    out = x - qx * dt
    stiff = np.abs(qx) * dt > 0.05 * np.maximum(x, 1e-300)
    stiff &= x > 1.0
    if np.any(stiff):
        y = x[stiff]
        m = np.minimum(np.ceil(np.abs(qx[stiff]) * dt / (0.05 * y)), 10000).astype(int)
        hs = dt / m
        for j in range(int(m.max())):
            act = j < m
            y[act] = y[act] - spec.q(y[act]) * hs[act]
        out[stiff] = y
    return out


def _run_block(spec: DriftSpec, cfg: SimConfig, block: int, size: int, obs_steps: np.ndarray,
               keep_kill_steps: bool):
    rng = np.random.Generator(np.random.Philox(key=cfg.seed + (block << 64)))
    # open interval (0, 1) so inverse cdfs stay finite
    u0 = rng.random(size) * (1.0 - 2.0 ** -53) + 2.0 ** -54
    x = cfg.initial.sample(u0)
    alive = x > 0
    kill = np.full(size, -1, dtype=np.int64)
    kill[~alive] = 0
    sq = math.sqrt(cfg.dt)
    two_over_dt = 2.0 / cfg.dt
    snaps = {}
    obs_set = {int(k): i for i, k in enumerate(obs_steps)}
    if 0 in obs_set:
        snaps[0] = x[alive].copy()
    idx = np.flatnonzero(alive)
    xa = x[idx]
    last = int(obs_steps.max()) if obs_steps.size else 0
    for k in range(1, last + 1):
        z = rng.standard_normal(size)
        u = rng.random(size)
        if idx.size:
            y = _drift_step(spec, xa, cfg.dt) + sq * z[idx]
            dead = y <= 0.0
            if cfg.bridge_correction:
                pos = ~dead
                p = np.exp(-two_over_dt * xa[pos] * y[pos])
                dead[pos] = u[idx[pos]] < p
            if np.any(dead):
                kill[idx[dead]] = k
                keep = ~dead
                idx, xa = idx[keep], y[keep]
            else:
                xa = y
        if k in obs_set:
            snaps[k] = xa.copy()
    if not keep_kill_steps:
        kill = None
    return snaps, kill


def _empirical(cfg: SimConfig, t: float, step: int, samples: np.ndarray) -> ConditionalEmpirical:
    edges = cfg.edges
    clipped = np.minimum(samples, cfg.hist_R)
    counts, _ = np.histogram(clipped, bins=edges)
    overflow = int(np.sum(samples > cfg.hist_R))
    return ConditionalEmpirical(float(t), int(step), cfg.n_paths, int(samples.size), edges,
                                counts.astype(np.int64), overflow, np.sort(samples))


def _blocks(cfg: SimConfig):
    b, start = 0, 0
    while start < cfg.n_paths:
        size = min(cfg.block_size, cfg.n_paths - start)
        yield b, size
        b += 1
        start += size


def _simulate(spec: DriftSpec, cfg: SimConfig, obs_steps: np.ndarray, workers: int,
              keep_kill_steps: bool):
    blocks = list(_blocks(cfg))
    run = lambda bs: _run_block(spec, cfg, bs[0], bs[1], obs_steps, keep_kill_steps)
    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, blocks))  # map preserves block order
    else:
        results = [run(bs) for bs in blocks]
    return results


def observation_steps(cfg: SimConfig, observation_times) -> np.ndarray:
    steps = []
    for t in observation_times:
        if not 0 < t <= cfg.t_max * (1 + 1e-12):
            raise ValueError(f"observation time {t} outside (0, t_max]")
        steps.append(max(1, int(round(t / cfg.dt))))
    return np.asarray(steps, dtype=np.int64)


def simulate_killed(spec: DriftSpec, cfg: SimConfig, observation_times, workers: int = 1):
    """Conditional empirical laws at each observation time."""
    steps = observation_steps(cfg, observation_times)
    results = _simulate(spec, cfg, steps, workers, False)
    out = []
    for t, k in zip(observation_times, steps):
        samples = np.concatenate([snaps[int(k)] for snaps, _ in results])
        out.append(_empirical(cfg, float(t), int(k), samples))
    return out


def killing_steps(spec: DriftSpec, cfg: SimConfig, workers: int = 1) -> np.ndarray:
    """Per-path killing step (-1 if alive at t_max), in path order."""
    steps = np.array([cfg.n_steps], dtype=np.int64)
    results = _simulate(spec, cfg, steps, workers, True)
    return np.concatenate([kill for _, kill in results])


# --------------------------------------------------------------------------
# estimators


def survival_decay_rate(series, t_burn: float = 0.0) -> tuple[float, float]:
    """Weighted least-squares decay rate of log survival on t >= t_burn.

    Weights are the inverse delta-method variances n p / (1 - p) of
    log p. Returns (rate, standard error).
    """
    pts = [(e.t, e.survival_estimate, e.n_paths) for e in series
           if e.t >= t_burn and e.survivors > 0]
    if len(pts) < 4:
        raise InsufficientData(f"need 4 observation times with survivors after t={t_burn:g}, have {len(pts)}")
    t = np.array([p[0] for p in pts])
    p = np.array([p[1] for p in pts])
    n = np.array([p[2] for p in pts], dtype=float)
    y = np.log(p)
    with np.errstate(divide="ignore"):
        w = np.where(p < 1.0, n * p / np.maximum(1.0 - p, 1e-300), 1e12)
    tb = np.sum(w * t) / np.sum(w)
    sxx = np.sum(w * (t - tb) ** 2)
    slope = np.sum(w * (t - tb) * y) / sxx
    return float(-slope), float(math.sqrt(1.0 / sxx))


def ks_statistic(samples: np.ndarray, cdf) -> float:
    """One-sample Kolmogorov-Smirnov distance for sorted samples."""
    n = samples.size
    if n == 0:
        raise ZeroSurvivors("no samples")
    F = cdf(samples)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))


def two_sample_ks(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.sort(a), np.sort(b)
    allx = np.concatenate([a, b])
    fa = np.searchsorted(a, allx, side="right") / a.size
    fb = np.searchsorted(b, allx, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def yaglom_distance(emp: ConditionalEmpirical, qsd: QsdDensity) -> tuple[float, float]:
    """(KS, binned total variation) between the survivors and nu1."""
    if emp.survivors == 0:
        raise ZeroSurvivors(f"no survivors at t={emp.t:g}")
    ks = ks_statistic(emp.samples, qsd.cdf_at)
    probs = qsd.bin_probabilities(emp.edges)
    probs[-1] += 1.0 - qsd.cdf_at(emp.edges[-1])
    tv = 0.5 * float(np.sum(np.abs(emp.mass - probs)))
    return ks, tv


def noise_floor(survivors: int, level: float = KS_999) -> float:
    return level / math.sqrt(max(survivors, 1))


def attraction_sweep(spec: DriftSpec, cfg_base: SimConfig, initials, qsd: QsdDensity,
                     observation_times, ks_threshold: float = 0.03, workers: int = 1,
                     labels=None) -> dict:
    """Conditioned laws from several initial laws against nu1."""
    labels = labels or [law.describe() for law in initials]
    runs = []
    finals = []
    for label, law in zip(labels, initials):
        series = simulate_killed(spec, cfg_base.with_initial(law), observation_times, workers)
        rows = []
        for e in series:
            if e.survivors:
                ks, tv = yaglom_distance(e, qsd)
            else:
                ks, tv = math.nan, math.nan
            rows.append({"t": e.t, "survivors": e.survivors, "survival": e.survival_estimate,
                         "ks": ks, "tv": tv, "noise_floor": noise_floor(e.survivors)})
        finals.append(series[-1].samples)
        runs.append({"initial": label, "law": law.to_mapping(), "series": rows,
                     "terminal_ks": rows[-1]["ks"],
                     "at_noise_floor": all(r["ks"] <= r["noise_floor"] for r in rows)})
    pairwise = {}
    for i in range(len(runs)):
        for j in range(i + 1, len(runs)):
            if finals[i].size and finals[j].size:
                pairwise[f"{labels[i]} | {labels[j]}"] = two_sample_ks(finals[i], finals[j])
    terminal_ok = all(r["terminal_ks"] < ks_threshold for r in runs)
    pair_ok = all(v < 2 * ks_threshold for v in pairwise.values())
    return {"ks_threshold": ks_threshold, "runs": runs, "pairwise_terminal_ks": pairwise,
            "all_terminal_below_threshold": terminal_ok, "pairwise_agree": pair_ok,
            "success": terminal_ok and pair_ok}


def fd_survival(gen: GeneratorMatrix, x0: float, t: float) -> float:
    """P_{x0}(tau > t) = (T_t 1)(x0) from the discretised semigroup."""
    s = gen.apply_semigroup(np.ones(gen.size), t)
    full = np.concatenate([[0.0], s, [0.0] if gen.right_bc == "dirichlet" else []])
    return float(np.interp(x0, gen.x, full))
