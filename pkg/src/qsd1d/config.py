"""Run configuration: a TOML file with drift, numerics, simulation and
output tables, validated against ``schemas/config.schema.json``."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from importlib import resources

import jsonschema
import tomli
import tomli_w

from .drift import DriftSpec, parse_drift


class ConfigError(ValueError):
    pass


def load_schema(name: str) -> dict:
    text = resources.files("qsd1d").joinpath("schemas", name).read_text(encoding="utf-8")
    return json.loads(text)


@dataclass(frozen=True)
class NumericsConfig:
    eps_mass: float = 1e-8
    R_max: float = 64.0
    R: float | None = None
    n: int = 2000
    rel_tol: float = 1e-8
    ceiling: float = 1e12
    shooting_rtol: float = 1e-11
    allow_nonsmooth: bool = False


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = 1e-3
    n_paths: int = 20000
    seed: int = 12345
    bridge_correction: bool = True
    initial: dict = field(default_factory=lambda: {"kind": "point", "params": [1.0]})
    attract: tuple = (
        {"kind": "uniform", "params": [0.0, 1.0]},
        {"kind": "exponential", "params": [1.0]},
        {"kind": "pareto", "params": [1.5, 0.5, 50.0]},
        {"kind": "qsd"},
    )
    t_factor: float = 3.0        # horizon in units of 1/lambda1
    t_max: float | None = None   # overrides t_factor
    n_times: int = 10
    n_bins: int = 128
    workers: int = 1
    ks_slack: float = 0.01
    ks_threshold: float = 0.03


@dataclass(frozen=True)
class OutputConfig:
    dir: str = "runs/default"
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class RunConfig:
    drift: DriftSpec
    numerics: NumericsConfig = field(default_factory=NumericsConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    output: OutputConfig = field(default_factory=OutputConfig)
    source_text: str | None = None  # the TOML exactly as read

    def to_mapping(self) -> dict:
        def strip(d):
            return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items() if v is not None}
        return {"drift": self.drift.to_mapping(), "numerics": strip(asdict(self.numerics)),
                "simulation": strip(asdict(self.simulation)), "output": strip(asdict(self.output))}

    def to_toml(self, replay: bool = False) -> str:
        """TOML for this config; ``replay`` drops settings that cannot change
        results (worker count, output directory)."""
        m = self.to_mapping()
        if replay:
            m["simulation"].pop("workers", None)
            m["output"].pop("dir", None)
        return tomli_w.dumps(m)

    def with_overrides(self, drift: DriftSpec | None = None, seed: int | None = None,
                       out: str | None = None, workers: int | None = None,
                       allow_nonsmooth: bool | None = None) -> "RunConfig":
        cfg = self
        if drift is not None:
            cfg = replace(cfg, drift=drift)
        sim = cfg.simulation
        if seed is not None:
            sim = replace(sim, seed=int(seed))
        if workers is not None:
            sim = replace(sim, workers=int(workers))
        num = cfg.numerics
        if allow_nonsmooth:
            num = replace(num, allow_nonsmooth=True)
        outc = cfg.output if out is None else replace(cfg.output, dir=str(out))
        return replace(cfg, numerics=num, simulation=sim, output=outc)


def config_from_mapping(data: dict, source_text: str | None = None) -> RunConfig:
    try:
        jsonschema.validate(data, load_schema("config.schema.json"))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid config at {where}: {exc.message}") from None
    drift = DriftSpec.from_mapping(data["drift"])
    num = NumericsConfig(**data.get("numerics", {}))
    sim_d = dict(data.get("simulation", {}))
    if "attract" in sim_d:
        sim_d["attract"] = tuple(sim_d["attract"])
    sim = SimulationConfig(**sim_d)
    out_d = dict(data.get("output", {}))
    if "formats" in out_d:
        out_d["formats"] = tuple(out_d["formats"])
    return RunConfig(drift, num, sim, OutputConfig(**out_d), source_text)


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        data = tomli.loads(raw.decode("utf-8"))
    except (tomli.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return config_from_mapping(data, raw.decode("utf-8"))


def default_config(drift_text: str = "x^3") -> RunConfig:
    return RunConfig(parse_drift(drift_text))
