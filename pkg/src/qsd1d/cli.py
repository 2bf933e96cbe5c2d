"""qsd1d: quasi-stationary distributions of diffusions killed at 0.

Exit codes: 0 success, 1 operational error (or a failed pipeline check),
2 inconclusive verdict, 3 hypothesis (H) fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import montecarlo as mc
from . import spectrum as sp
from .boundary import (InconsistentVerdicts, Kind, check_hypothesis_h, classification_report,
                       scale_speed)
from .config import ConfigError, RunConfig, load_config
from .drift import DriftError, build_coefficients, parse_drift, smoothness_probe
from .expr import ParseError
from .quadrature import Status, TailPolicy, _jsonable

EXIT_OK, EXIT_ERROR, EXIT_INCONCLUSIVE, EXIT_H_FAILS = 0, 1, 2, 3
TABLE_R = 16.0
TABLE_N = 1024


class HFails(Exception):
    def __init__(self, report):
        super().__init__("hypothesis (H) fails: theory inapplicable")
        self.report = report


class Undecided(Exception):
    def __init__(self, report):
        super().__init__("hypothesis (H) verdict inconclusive")
        self.report = report


class StageError(Exception):
    def __init__(self, stage, exc):
        super().__init__(f"stage {stage!r} failed: {exc}")
        self.stage = stage


# --------------------------------------------------------------------------
# output helpers


def clean(obj):
    """Recursively convert numpy values and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [clean(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _jsonable(float(obj))
    if isinstance(obj, Kind) or isinstance(obj, Status):
        return obj.value
    return obj


def dumps(report: dict) -> str:
    return json.dumps(clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


class Artifacts:
    """Files destined for the run directory, written in one go."""

    def __init__(self):
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def write(self, out: Path, formats):
        out.mkdir(parents=True, exist_ok=True)
        for name, text in sorted(self.files.items()):
            ext = name.rsplit(".", 1)[-1]
            if ext in ("csv", "json") and ext not in formats:
                continue
            path = out / name
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)


# --------------------------------------------------------------------------
# the shared computation chain


class Session:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        num = cfg.numerics
        self.policy = TailPolicy(rel_tol=num.rel_tol, ceiling=num.ceiling)
        R = num.R if num.R is not None else TABLE_R
        self.table = build_coefficients(cfg.drift, R, TABLE_N)
        self._cache = {}

    def _once(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def smoothness(self):
        return self._once("smooth", lambda: smoothness_probe(self.cfg.drift, self.table.R))

    def classification(self) -> dict:
        return self._once("classify", lambda: classification_report(self.table, self.policy))

    def h_verdict(self):
        def run():
            return check_hypothesis_h(self.table, self.policy, scale_speed(self.table, self.policy))
        return self._once("h", run)

    def require_h(self):
        h = self.h_verdict()
        if h.divergent:
            raise HFails({"command": "gate", "drift": self.cfg.drift.to_mapping(),
                          "hypothesis_H": h.to_dict(),
                          "message": "hypothesis (H) fails: the integral diverges, so the "
                                     "spectral construction and limit theorems do not apply; "
                                     "uniqueness not guaranteed, see non-(H) regime"})
        if not h.convergent:
            raise Undecided({"command": "gate", "drift": self.cfg.drift.to_mapping(),
                             "hypothesis_H": h.to_dict(),
                             "message": "hypothesis (H) verdict inconclusive"})
        return h

    def R(self) -> float:
        num = self.cfg.numerics
        return self._once("R", lambda: num.R if num.R is not None else
                          sp.choose_R(self.table, num.eps_mass, num.R_max))

    def spectrum(self) -> sp.SpectralResult:
        num = self.cfg.numerics
        return self._once("spectrum", lambda: sp.solve_spectrum(
            self.table, self.require_h(), num.eps_mass, num.n, self.R(), num.R_max))

    def shooting(self) -> sp.SpectralResult:
        def run():
            fd = self.spectrum()
            bracket = (0.99 * fd.lambda1_lo, 1.01 * fd.lambda1_hi)
            return sp.ground_state_shooting(self.table, fd.R, bracket, n_grid=self.cfg.numerics.n,
                                            rtol=self.cfg.numerics.shooting_rtol)
        return self._once("shooting", run)

    def qsd(self) -> sp.QsdDensity:
        return self._once("qsd", lambda: sp.build_qsd(self.spectrum()))

    def generator(self) -> sp.GeneratorMatrix:
        return self._once("gen", lambda: sp.build_generator(self.table, self.R(), self.cfg.numerics.n))

    def ground(self) -> sp.SpectralResult:
        return self._once("ground", lambda: sp.ground_state_fd(self.generator()))

    def horizon(self) -> float:
        s = self.cfg.simulation
        if s.t_max is not None:
            return float(s.t_max)
        return s.t_factor / self.spectrum().lambda1

    def sim_config(self, initial: mc.InitialLaw | None = None) -> mc.SimConfig:
        s = self.cfg.simulation
        T = self.horizon()
        hist_R = self.R() if self.h_verdict().convergent else self.table.R
        return mc.SimConfig(dt=s.dt, t_max=T, n_paths=s.n_paths, seed=s.seed,
                            bridge_correction=s.bridge_correction,
                            initial=initial or self.law(s.initial), hist_R=hist_R,
                            n_bins=s.n_bins)

    def law(self, m: dict) -> mc.InitialLaw:
        kind = m["kind"]
        params = list(m.get("params", []))
        if kind == "qsd":
            return mc.InitialLaw.from_qsd(self.qsd())
        if kind == "exponential" and len(params) == 1:
            params.append(0.0)
        return mc.InitialLaw(kind, tuple(float(p) for p in params))

    def times(self) -> list[float]:
        T = self.horizon()
        k = self.cfg.simulation.n_times
        return [T * (j + 1) / k for j in range(k)]


# --------------------------------------------------------------------------
# commands: each returns (exit code, report, artifacts)


def cmd_classify(ses: Session, art: Artifacts):
    rep = dict(ses.classification())
    rep["command"] = "classify"
    kinds = [b["kind"] for b in rep["boundaries"]]
    undecided = rep["hypothesis_H"]["status"] == Status.INCONCLUSIVE.value or Kind.UNCLASSIFIED.value in kinds
    art.add("classify.json", dumps(rep))
    return (EXIT_INCONCLUSIVE if undecided else EXIT_OK), rep


def cmd_check_h(ses: Session, art: Artifacts):
    h = ses.h_verdict()
    rep = {"command": "check-h", "drift": ses.cfg.drift.to_mapping(), "hypothesis_H": h.to_dict()}
    art.add("check_h.json", dumps(rep))
    if h.divergent:
        return EXIT_H_FAILS, rep
    return (EXIT_OK if h.convergent else EXIT_INCONCLUSIVE), rep


def lambda1_report(ses: Session) -> dict:
    fd = ses.spectrum()
    sh = ses.shooting()
    lam = fd.lambda1_extrapolated
    return {"command": "lambda1", "drift": ses.cfg.drift.to_mapping(),
            "R": fd.R, "n": ses.cfg.numerics.n, "eps_mass": ses.cfg.numerics.eps_mass,
            "delta": fd.delta, "delta_argsup": fd.extra["delta_argsup"],
            "lambda1_lower": fd.lambda1_lo, "lambda1_upper": fd.lambda1_hi,
            "lambda1": lam, "lambda1_fd_n": fd.extra["lambda1_coarse"],
            "lambda1_fd_2n": fd.lambda1, "lambda2": fd.lambda2,
            "lambda1_shooting": sh.lambda1,
            "method_relative_difference": abs(lam - sh.lambda1) / lam,
            "residual_fd": fd.residual, "residual_shooting": sh.residual,
            "bracket_satisfied": bool(fd.lambda1_lo <= lam <= fd.lambda1_hi)}


def cmd_lambda1(ses: Session, art: Artifacts):
    rep = lambda1_report(ses)
    art.add("lambda1.json", dumps(rep))
    return EXIT_OK, rep


def groundstate_csv(ses: Session) -> str:
    fd, q = ses.spectrum(), ses.qsd()
    rows = zip(fd.x, fd.eta1, q.density, q.cdf)
    return csv_text(["x", "eta1", "nu1_density", "nu1_cdf"], rows)


def cmd_groundstate(ses: Session, art: Artifacts):
    fd = ses.spectrum()
    rep = {"command": "groundstate", "drift": ses.cfg.drift.to_mapping(),
           "lambda1": fd.lambda1_extrapolated, "lambda1_grid": fd.lambda1, "lambda2": fd.lambda2,
           "R": fd.R, "n": fd.n, "residual": fd.residual,
           "eta1_max": float(np.max(fd.eta1)), "eta1_positive_interior": bool(np.all(fd.interior > 0)),
           "normalisation": "int eta1^2 dmu = 1"}
    art.add("groundstate.json", dumps(rep))
    art.add("groundstate.csv", groundstate_csv(ses))
    return EXIT_OK, rep


def cmd_qsd(ses: Session, art: Artifacts):
    q = ses.qsd()
    quant = {f"q{int(p * 100):02d}": float(q.quantile(p)) for p in (0.05, 0.25, 0.5, 0.75, 0.95)}
    rep = {"command": "qsd", "drift": ses.cfg.drift.to_mapping(),
           "lambda1": ses.spectrum().lambda1_extrapolated,
           "eta1_mu_mass": q.norm_const, "cdf_at_R": float(q.cdf[-1]), "mean": q.mean(),
           "quantiles": quant}
    art.add("qsd.json", dumps(rep))
    art.add("groundstate.csv", groundstate_csv(ses))
    return EXIT_OK, rep


def diagnostics_report(ses: Session) -> dict:
    ses.require_h()
    gen, g = ses.generator(), ses.ground()
    q = sp.build_qsd(g)
    nodes = gen.nodes
    station = sp.stationarity_check(q, gen, [0.5, 1.0, 2.0])
    # nu1 plus a bump: contraction toward nu1
    eta = g.eta1[1:1 + gen.size]
    bump = np.exp(-((nodes - 0.5 * gen.R) ** 2) / 0.02)
    init = gen.w * (eta / np.sum(gen.w * eta) + bump / np.sum(gen.w * bump))
    pert = sp.stationarity_check(q, gen, [0.5, 2.0], initial=init / init.sum())
    gap = g.lambda2 - g.lambda1
    times = list(np.linspace(0.0, 10.0 / gap, 21))
    one = np.ones(gen.size)
    prod = sp.semigroup_product_limit(gen, g, one, one, times)
    ind = ((nodes >= 0.25 * gen.R) & (nodes <= 0.5 * gen.R)).astype(float)
    sym = sp.symmetry_identity_check(gen, g, ind, 1.0)
    xs = [x for x in (0.25, 0.5, 1.0, 2.0) if x < gen.R]
    kern = sp.kernel_domination_check(gen, g, xs, [1.0, 2.0, 4.0, 8.0])
    ess = sp.essential_spectrum_test(ses.table, [1.0, 2.0, 4.0, 8.0], ses.h_verdict(), ses.policy)
    bnd = sp.boundedness_check(ses.table, eps_mass=ses.cfg.numerics.eps_mass)
    return {"command": "diagnose", "drift": ses.cfg.drift.to_mapping(), "R": gen.R,
            "n": gen.x.size - 1, "lambda1": g.lambda1, "lambda2": g.lambda2,
            "stationarity": station, "perturbed_contraction": pert,
            "product_limit": prod, "symmetry_identity": sym, "kernel_domination": kern,
            "essential_spectrum": ess, "boundedness": bnd}


def cmd_diagnose(ses: Session, art: Artifacts):
    rep = diagnostics_report(ses)
    art.add("diagnostics.json", dumps(rep))
    return EXIT_OK, rep


def _series_rows(series, qsd):
    rows = []
    for e in series:
        if qsd is not None and e.survivors:
            ks, tv = mc.yaglom_distance(e, qsd)
        else:
            ks, tv = math.nan, math.nan
        rows.append({"t": e.t, "survivors": e.survivors, "survival": e.survival_estimate,
                     "survival_stderr": e.survival_stderr, "ks": ks, "tv": tv})
    return rows


def _add_series(art: Artifacts, series, rows, qsd):
    cols = ["t", "survivors", "survival", "survival_stderr", "ks", "tv"]
    art.add("simulation.csv", csv_text(cols, [[r[c] for c in cols] for r in rows]))
    for j, e in enumerate(series):
        ref = qsd.bin_probabilities(e.edges) if qsd is not None else np.full(e.counts.size, math.nan)
        body = zip(e.edges[:-1], e.edges[1:], e.counts, e.mass, ref)
        art.add(f"histograms/t{j:03d}.csv",
                csv_text(["bin_left", "bin_right", "count", "mass", "nu1_mass"], body))


def _sim_header(ses: Session, cfg: mc.SimConfig) -> dict:
    return {"drift": ses.cfg.drift.to_mapping(), "seed": cfg.seed, "dt": cfg.dt,
            "t_max": cfg.t_max, "n_paths": cfg.n_paths, "bridge_correction": cfg.bridge_correction,
            "initial": cfg.initial.to_mapping() if cfg.initial.kind != "custom" else {"kind": "qsd"},
            "hist_R": cfg.hist_R, "n_bins": cfg.n_bins, "block_size": cfg.block_size}


def cmd_simulate(ses: Session, art: Artifacts):
    has_qsd = ses.h_verdict().convergent
    if not has_qsd and ses.cfg.simulation.t_max is None:
        ses.require_h()
    cfg = ses.sim_config()
    series = mc.simulate_killed(ses.cfg.drift, cfg, ses.times(), ses.cfg.simulation.workers)
    qsd = ses.qsd() if has_qsd else None
    rows = _series_rows(series, qsd)
    rep = {"command": "simulate", "config": _sim_header(ses, cfg), "series": rows}
    _add_series(art, series, rows, qsd)
    art.add("simulate.json", dumps(rep))
    return EXIT_OK, rep


def yaglom_report(ses: Session, art: Artifacts) -> dict:
    ses.require_h()
    cfg = ses.sim_config()
    fd, qsd = ses.spectrum(), ses.qsd()
    lam = fd.lambda1_extrapolated
    series = mc.simulate_killed(ses.cfg.drift, cfg, ses.times(), ses.cfg.simulation.workers)
    rows = _series_rows(series, qsd)
    _add_series(art, series, rows, qsd)
    last = series[-1]
    ks, tv = rows[-1]["ks"], rows[-1]["tv"]
    ks_bound = mc.KS_99 / math.sqrt(max(last.survivors, 1)) + ses.cfg.simulation.ks_slack
    try:
        rate, se = mc.survival_decay_rate(series, 1.0 / lam)
    except mc.InsufficientData:
        rate, se = math.nan, math.nan
    rate_tol = max(0.05 * lam, 3.0 * se) if math.isfinite(se) else 0.05 * lam
    x0 = cfg.initial.params[0] if cfg.initial.kind == "point" else math.nan
    spectral_prefactor = (float(np.interp(x0, fd.x, fd.eta1)) * qsd.norm_const
                          if math.isfinite(x0) and x0 <= fd.R else math.nan)
    return {"command": "yaglom", "config": _sim_header(ses, cfg), "series": rows,
            "lambda1": lam, "terminal_ks": ks, "terminal_tv": tv, "ks_bound": ks_bound,
            "ks_pass": bool(ks < ks_bound), "decay_rate": rate, "decay_rate_stderr": se,
            "decay_rate_tolerance": rate_tol,
            "decay_pass": bool(math.isfinite(rate) and abs(rate - lam) < rate_tol),
            "mc_prefactor": math.exp(lam * last.t) * last.survival_estimate,
            "mc_prefactor_stderr": math.exp(lam * last.t) * last.survival_stderr,
            "spectral_prefactor": spectral_prefactor,
            "mc_mean": last.mean(), "qsd_mean": qsd.mean()}


def cmd_yaglom(ses: Session, art: Artifacts):
    rep = yaglom_report(ses, art)
    art.add("yaglom.json", dumps(rep))
    return EXIT_OK, rep


def cmd_attract(ses: Session, art: Artifacts):
    ses.require_h()
    s = ses.cfg.simulation
    laws = [ses.law(m) for m in s.attract]
    labels = [m["kind"] if m["kind"] == "qsd" else ses.law(m).describe() for m in s.attract]
    rep = mc.attraction_sweep(ses.cfg.drift, ses.sim_config(), laws, ses.qsd(), ses.times(),
                              ks_threshold=s.ks_threshold, workers=s.workers, labels=labels)
    for r in rep["runs"]:
        if r["law"]["kind"] == "custom":
            r["law"] = {"kind": "qsd"}
    rep = {"command": "attract", "config": _sim_header(ses, ses.sim_config()), **rep}
    cols = ["t", "survivors", "survival", "ks", "tv", "noise_floor"]
    rows = [[r["initial"]] + [row[c] for c in cols] for r in rep["runs"] for row in r["series"]]
    art.add("attract.csv", csv_text(["initial"] + cols, rows))
    art.add("attract.json", dumps(rep))
    return (EXIT_OK if rep["success"] else EXIT_INCONCLUSIVE), rep


def cmd_pipeline(ses: Session, art: Artifacts):
    checks = {}

    def stage(name, fn):
        try:
            return fn()
        except (HFails, Undecided):
            raise
        except Exception as exc:
            raise StageError(name, exc) from exc

    smooth = stage("smoothness", ses.smoothness)
    checks["smoothness"] = bool(smooth.passed or ses.cfg.numerics.allow_nonsmooth)
    cls = stage("classify", ses.classification)
    art.add("classify.json", dumps({**cls, "command": "classify"}))
    try:
        ses.require_h()
    except HFails as exc:
        summary = {"command": "pipeline", "exit_code": EXIT_H_FAILS, "stage": "hypothesis_H",
                   "message": exc.report["message"], "checks": checks,
                   "hypothesis_H": exc.report["hypothesis_H"]}
        art.add("summary.json", dumps(summary))
        return EXIT_H_FAILS, summary
    lam = stage("lambda1", lambda: lambda1_report(ses))
    art.add("lambda1.json", dumps(lam))
    checks["lambda1_bracket"] = lam["bracket_satisfied"]
    checks["method_agreement"] = bool(lam["method_relative_difference"] < 1e-2)
    checks["fd_residual"] = bool(lam["residual_fd"] < 1e-8)
    checks["shooting_residual"] = bool(lam["residual_shooting"] < 1e-4)
    stage("groundstate", lambda: art.add("groundstate.csv", groundstate_csv(ses)))
    q = stage("qsd", ses.qsd)
    checks["qsd_normalised"] = bool(abs(q.cdf[-1] - 1.0) < 1e-8)
    diag = stage("diagnose", lambda: diagnostics_report(ses))
    art.add("diagnostics.json", dumps(diag))
    checks["stationarity"] = bool(diag["stationarity"]["max_l1"] < 1e-6)
    pl = diag["product_limit"]
    checks["product_limit"] = bool(pl["relative_error"][-1] < 1e-4 and
                                   abs(pl["observed_rate"] - pl["spectral_gap"]) < 0.1 * pl["spectral_gap"])
    checks["symmetry_identity"] = bool(max(diag["symmetry_identity"]["rel_diff_lhs_middle"],
                                           diag["symmetry_identity"]["rel_diff_middle_rhs"]) < 1e-10)
    checks["kernel_domination"] = diag["kernel_domination"]["all_nonincreasing"]
    checks["essential_spectrum"] = diag["essential_spectrum"]["strictly_decreasing"]
    checks["eta1_bounded"] = diag["boundedness"]["passed"]
    yag = stage("simulate", lambda: yaglom_report(ses, art))
    art.add("yaglom.json", dumps(yag))
    checks["yaglom_ks"] = yag["ks_pass"]
    checks["decay_rate"] = yag["decay_pass"]
    ok = all(checks.values())
    summary = {"command": "pipeline", "exit_code": EXIT_OK if ok else EXIT_ERROR,
               "stage": "done", "checks": checks, "lambda1": lam["lambda1"],
               "lambda1_bracket": [lam["lambda1_lower"], lam["lambda1_upper"]],
               "terminal_ks": yag["terminal_ks"], "ks_bound": yag["ks_bound"],
               "decay_rate": yag["decay_rate"], "seed": ses.cfg.simulation.seed}
    art.add("summary.json", dumps(summary))
    return summary["exit_code"], summary


COMMANDS = {
    "classify": (cmd_classify, "boundary classification and hypothesis (H)"),
    "check-h": (cmd_check_h, "hypothesis (H) verdict only"),
    "lambda1": (cmd_lambda1, "delta bounds and the bottom of the spectrum"),
    "groundstate": (cmd_groundstate, "ground state eta1 on the grid"),
    "qsd": (cmd_qsd, "quasi-stationary distribution nu1"),
    "diagnose": (cmd_diagnose, "semigroup and spectral diagnostics"),
    "simulate": (cmd_simulate, "Monte Carlo of the killed diffusion"),
    "yaglom": (cmd_yaglom, "Yaglom limit and survival decay against nu1"),
    "attract": (cmd_attract, "conditioned laws from several initial laws"),
    "pipeline": (cmd_pipeline, "full chain with pass/fail checks"),
}
WRITES_BY_DEFAULT = {"groundstate", "qsd", "diagnose", "simulate", "yaglom", "attract", "pipeline"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run configuration")
    common.add_argument("--drift", help="drift expression in x, overrides the config")
    common.add_argument("--seed", type=int, help="simulation seed (unsigned 64-bit)")
    common.add_argument("--out", type=Path, help="run directory for artifacts")
    common.add_argument("--json", action="store_true", help="print the JSON report")
    common.add_argument("--threads", type=int, help="Monte Carlo worker threads")
    common.add_argument("--allow-nonsmooth", action="store_true",
                        help="accept drifts failing the C^1 smoothness probe")
    parser = argparse.ArgumentParser(prog="qsd1d", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def resolve_config(args) -> RunConfig:
    if args.config is not None:
        cfg = load_config(args.config)
    elif args.drift is not None:
        cfg = RunConfig(parse_drift(args.drift))
    else:
        raise ConfigError("need --config or --drift")
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    if args.threads is not None and args.threads < 1:
        raise ConfigError("--threads must be at least 1")
    return cfg.with_overrides(drift=parse_drift(args.drift) if args.drift and args.config else None,
                              seed=args.seed, out=args.out, workers=args.threads,
                              allow_nonsmooth=args.allow_nonsmooth)


def _summary_lines(rep: dict) -> str:
    lines = []
    for k in sorted(rep):
        v = rep[k]
        if isinstance(v, (int, float, str, bool, np.floating)) and k != "command":
            lines.append(f"{k}: {fmt(v)}")
    for k in ("hypothesis_H",):
        if isinstance(rep.get(k), dict):
            lines.append(f"{k}: {rep[k].get('status')}")
    if "boundaries" in rep:
        for b in rep["boundaries"]:
            lines.append(f"boundary {b['endpoint']}: {b['kind']}")
    for k in ("notes",):
        for note in rep.get(k, []):
            lines.append(f"note: {note}")
    if "checks" in rep:
        for k, v in rep["checks"].items():
            lines.append(f"check {k}: {'pass' if v else 'FAIL'}")
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except (ConfigError, DriftError, ParseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    fn = COMMANDS[args.command][0]
    art = Artifacts()
    try:
        ses = Session(cfg)
        if not ses.smoothness().passed and not cfg.numerics.allow_nonsmooth:
            print(f"warning: smoothness probe failed ({ses.smoothness().reason}); "
                  "results assume q in C^1", file=sys.stderr)
        code, rep = fn(ses, art)
    except HFails as exc:
        code, rep = EXIT_H_FAILS, exc.report
        art.add("gate.json", dumps(rep))
        print(f"error: {exc.report['message']}", file=sys.stderr)
    except Undecided as exc:
        code, rep = EXIT_INCONCLUSIVE, exc.report
        print(f"error: {exc.report['message']}", file=sys.stderr)
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (DriftError, InconsistentVerdicts, sp.PreconditionError, sp.SpectrumError,
            mc.ZeroSurvivors, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    out = args.out if args.out is not None else (
        Path(cfg.output.dir) if args.command in WRITES_BY_DEFAULT else None)
    if out is not None:
        art.add("config.toml", cfg.source_text if cfg.source_text is not None else cfg.to_toml())
        art.add("effective_config.toml", cfg.to_toml(replay=True))
        try:
            art.write(out, cfg.output.formats)
        except OSError as exc:
            print(f"error: cannot write {out}: {exc}", file=sys.stderr)
            return EXIT_ERROR
    sys.stdout.write(dumps(rep) if args.json else _summary_lines(rep))
    return code
