"""YAML tool configuration: loading, validation and round-trip dumping."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import yaml

from . import ratedsl
from .equilibrium import RateSet
from .numerics import DelayGrid, SizeGrid

PRESETS = {
    "ex71": "ex71.yaml",
    "ex71-modified": "ex71_modified.yaml",
    "ex72-stable": "ex72_stable.yaml",
    "ex72-unstable": "ex72_unstable.yaml",
}


class ConfigError(ValueError):
    pass


class ConfigDSLError(ConfigError):
    """An expression in the config failed to parse or validate."""


@dataclass
class ModelSection:
    gamma: str
    mu: str
    beta: str
    w: str
    alpha: float
    theta: float
    m: float


@dataclass
class GridSection:
    ns: int = 2001
    ntau: int = 501
    cfl: float = 0.9


@dataclass
class AnalysisSection:
    lambda_lo: float = -5.0
    lambda_hi: float = 50.0
    lambda_samples: int = 2000
    p_max: Optional[float] = None


@dataclass
class SimSection:
    t_end: float = 40.0
    history_init: str = "0"
    stride: int = 1
    snapshot_times: list = field(default_factory=list)
    ns: Optional[int] = None  # simulation grid; defaults to grid.ns


@dataclass
class OutputSection:
    directory: str = "out"


@dataclass
class ToolConfig:
    model: ModelSection
    grid: GridSection = field(default_factory=GridSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)
    sim: SimSection = field(default_factory=SimSection)
    output: OutputSection = field(default_factory=OutputSection)
    source: str = field(default="<config>", compare=False, repr=False)
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    # derived objects -------------------------------------------------------

    def rates(self) -> RateSet:
        m = self.model
        parsed = {}
        for key in ("gamma", "mu", "beta", "w"):
            parsed[key] = self.parse(("model", key))
        try:
            return RateSet(alpha=m.alpha, theta=m.theta, m=m.m, **parsed)
        except ValueError as exc:
            raise ConfigError(f"{self.source}: {exc}") from exc

    def parse(self, key: tuple):
        section, name = key
        text = getattr(getattr(self, section), name)
        try:
            return ratedsl.parse_expr(str(text))
        except ratedsl.DSLError as exc:
            line = self.lines.get(key)
            where = f"{self.source}:{line}" if line else self.source
            raise ConfigDSLError(f"{where}: {section}.{name}: {exc}") from exc

    def size_grid(self) -> SizeGrid:
        return SizeGrid(self.grid.ns, self.model.m)

    def sim_grid(self) -> SizeGrid:
        return SizeGrid(self.sim.ns or self.grid.ns, self.model.m)

    def delay_grid(self) -> DelayGrid:
        return DelayGrid(self.grid.ntau, self.model.theta)

    def to_dict(self) -> dict:
        return {
            name: dataclasses.asdict(getattr(self, name))
            for name in ("model", "grid", "analysis", "sim", "output")
        }


_SECTIONS = {
    "model": ModelSection,
    "grid": GridSection,
    "analysis": AnalysisSection,
    "sim": SimSection,
    "output": OutputSection,
}

_TYPES = {
    "model": {"gamma": str, "mu": str, "beta": str, "w": str, "alpha": float, "theta": float, "m": float},
    "grid": {"ns": int, "ntau": int, "cfl": float},
    "analysis": {"lambda_lo": float, "lambda_hi": float, "lambda_samples": int, "p_max": (float, type(None))},
    "sim": {"t_end": float, "history_init": str, "stride": int, "snapshot_times": list, "ns": (int, type(None))},
    "output": {"directory": str},
}


def _key_lines(text: str) -> dict:
    lines = {}
    try:
        root = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if not isinstance(root, yaml.MappingNode):
        return lines
    for sk, sv in root.value:
        if isinstance(sv, yaml.MappingNode):
            for k, v in sv.value:
                lines[(sk.value, k.value)] = v.start_mark.line + 1
    return lines


def _coerce(section, key, value, source, lines):
    want = _TYPES[section][key]
    where = f"{source}:{lines.get((section, key), '?')}"
    if want is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if want is str and isinstance(value, (int, float)) and not isinstance(value, bool):
        return str(value)
    if want == (float, type(None)) and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if want is list and isinstance(value, list):
        try:
            return [float(v) for v in value]
        except (TypeError, ValueError):
            raise ConfigError(f"{where}: {section}.{key} must be a list of numbers") from None
    if isinstance(want, tuple):
        ok = isinstance(value, want) and not isinstance(value, bool)
    else:
        ok = isinstance(value, want) and not isinstance(value, bool)
    if not ok:
        raise ConfigError(f"{where}: {section}.{key} has invalid value {value!r}")
    return value


def loads(text: str, source: str = "<config>") -> ToolConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{source}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    lines = _key_lines(text)
    unknown = set(data) - set(_SECTIONS)
    if unknown:
        raise ConfigError(f"{source}: unknown section(s) {sorted(unknown)}")
    if "model" not in data:
        raise ConfigError(f"{source}: missing 'model' section")
    sections = {}
    for name, cls in _SECTIONS.items():
        raw = data.get(name) or {}
        if not isinstance(raw, dict):
            raise ConfigError(f"{source}: section {name!r} must be a mapping")
        bad = set(raw) - set(_TYPES[name])
        if bad:
            line = lines.get((name, sorted(bad)[0]), "?")
            raise ConfigError(f"{source}:{line}: unknown key(s) {sorted(bad)} in section {name!r}")
        values = {k: _coerce(name, k, v, source, lines) for k, v in raw.items()}
        try:
            sections[name] = cls(**values)
        except TypeError as exc:
            raise ConfigError(f"{source}: section {name!r}: {exc}") from exc
    cfg = ToolConfig(**sections, source=source, lines=lines)
    validate(cfg)
    return cfg


def validate(cfg: ToolConfig) -> None:
    """Re-check module-level invariants so bad configs fail at load time."""
    src = cfg.source
    try:
        r = cfg.rates()
        grid = cfg.size_grid()
        cfg.delay_grid()
        cfg.sim_grid()
        r.check_on_grid(grid)
    except ConfigDSLError:
        raise
    except ratedsl.DSLError as exc:
        raise ConfigDSLError(f"{src}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"{src}: {exc}") from exc
    if not 0 < cfg.grid.cfl <= 1:
        raise ConfigError(f"{src}: grid.cfl must lie in (0, 1]")
    a = cfg.analysis
    if not a.lambda_lo < a.lambda_hi:
        raise ConfigError(f"{src}: analysis.lambda_lo must be below lambda_hi")
    if a.lambda_samples < 2:
        raise ConfigError(f"{src}: analysis.lambda_samples must be at least 2")
    if a.p_max is not None and not a.p_max > 0:
        raise ConfigError(f"{src}: analysis.p_max must be positive")
    if not cfg.sim.t_end > 0 or cfg.sim.stride < 1:
        raise ConfigError(f"{src}: sim.t_end must be positive and sim.stride at least 1")
    h = cfg.sim.history_init.strip()
    if h != "equilibrium" and not h.startswith("csv:"):
        e = cfg.parse(("sim", "history_init"))
        extra = ratedsl.variables(e) - {"s", "delta"}
        if extra:
            line = cfg.lines.get(("sim", "history_init"), "?")
            raise ConfigDSLError(f"{src}:{line}: sim.history_init may only use s and delta, not {sorted(extra)}")


def load(path) -> ToolConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text, str(path))


def preset_text(name: str) -> str:
    try:
        fname = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return resources.files("sizestruct.presets").joinpath(fname).read_text(encoding="utf-8")


def load_preset(name: str) -> ToolConfig:
    return loads(preset_text(name), f"preset:{name}")


def dumps(cfg: ToolConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False, default_flow_style=None)
