"""Dataclass configs for every stage and the key=value run file that drives them."""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import typing
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geo import WorldGrid


class ConfigError(ValueError):
    pass


def sub_seed(seed: int, name: str) -> np.random.Generator:
    """Independent generator for a named stage or component, derived from the run seed."""
    tag = int.from_bytes(hashlib.sha256(name.encode("utf-8")).digest()[:4], "little")
    return np.random.default_rng([int(seed), tag])


@dataclass(frozen=True)
class SimConfig:
    seed: int = 42
    n_households: int = 10_000
    n_companies: int = 1_000
    weeks: int = 12
    # per-week probabilities
    household_move_rate: float = 0.01
    company_move_rate: float = 0.02
    # expected trades per household relocation (0.0001 = 0.01%)
    trade_rate: float = 0.0001
    pocket_ap_fraction: float = 0.01
    mixed_ap_fraction: float = 0.02
    violator_fraction: float = 0.02
    # scanner passes per building per week; >= min_obs guarantees weekly prints
    scan_density: int = 4
    rssi_sigma: float = 2.0
    rssi_base: float = 70.0
    path_loss: float = 20.0
    rssi_min: float = 0.0
    rssi_max: float = 100.0
    radio_range_m: float = 80.0
    neighbor_detect_prob: float = 0.9
    scanner_jitter_m: float = 20.0
    n_scanners: int = 500
    households_per_building: int = 6
    members_per_household: tuple[int, int] = (1, 3)
    aps_per_company: tuple[int, int] = (1, 6)
    employees_per_ap: tuple[int, int] = (2, 6)
    sessions_per_week: int = 2
    car_call_prob: float = 0.5
    local_move_fraction: float = 0.6
    city_zipf: float = 1.0
    pocket_stops_per_week: int = 6
    # household move-rate multiplier per month, missing months default to 1
    move_rate_multipliers: tuple[float, ...] = ()
    world: WorldGrid = field(default_factory=WorldGrid)

    def __post_init__(self):
        rates = {
            "household_move_rate": self.household_move_rate,
            "company_move_rate": self.company_move_rate,
            "trade_rate": self.trade_rate,
            "pocket_ap_fraction": self.pocket_ap_fraction,
            "mixed_ap_fraction": self.mixed_ap_fraction,
            "violator_fraction": self.violator_fraction,
            "car_call_prob": self.car_call_prob,
            "local_move_fraction": self.local_move_fraction,
            "neighbor_detect_prob": self.neighbor_detect_prob,
        }
        for name, value in rates.items():
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        if self.n_households < 1:
            raise ConfigError("n_households must be positive")
        if self.n_companies < 0 or self.weeks < 1 or self.scan_density < 1:
            raise ConfigError("n_companies >= 0, weeks >= 1, scan_density >= 1 required")
        if self.rssi_min >= self.rssi_max:
            raise ConfigError("rssi_min must be below rssi_max")
        if any(m < 0 for m in self.move_rate_multipliers):
            raise ConfigError("move_rate_multipliers must be non-negative")

    def move_rate_for_week(self, week: int) -> float:
        month = week // 4
        mult = self.move_rate_multipliers[month] if month < len(self.move_rate_multipliers) else 1.0
        return min(1.0, self.household_move_rate * mult)


@dataclass(frozen=True)
class LabelRules:
    positive_connect_hour: float = 21.0
    positive_disconnect_before: float = 12.0
    car_call_after_hour: float = 21.0
    negative_connect_from: float = 9.0
    negative_connect_until: float = 18.0
    negative_disconnect_from: float = 17.0
    abstain_low: float = 0.4
    abstain_high: float = 0.6
    min_support: int = 3


@dataclass(frozen=True)
class FeatureConfig:
    candidate_radius_m: float = 100.0


@dataclass(frozen=True)
class TrainConfig:
    n_stages: int = 4
    gamma0: float = 0.5
    decay: float = 0.3
    min_leaf: int = 5
    cv_folds: int = 5

    def __post_init__(self):
        if self.n_stages < 1:
            raise ConfigError("n_stages must be at least 1")
        if self.min_leaf < 1:
            raise ConfigError("min_leaf must be at least 1")
        if not 0.0 < self.gamma0 <= 1.0 or self.decay < 0:
            raise ConfigError("gamma0 must lie in (0, 1] and decay must be non-negative")

    def gamma(self, m: int) -> float:
        return self.gamma0 / (1.0 + self.decay * m)


@dataclass(frozen=True)
class DetectConfig:
    threshold: float = 0.1
    min_obs: int = 3
    max_gap: int = 2
    trade_window: int = 2
    pocket_radius_m: float = 5000.0
    use_trade_filter: bool = True
    use_classifier_filter: bool = True
    use_pocket_filter: bool = True


@dataclass(frozen=True)
class AggregateConfig:
    scales: tuple[str, ...] = ("community", "district", "city", "province")
    groups_file: str = ""


@dataclass(frozen=True)
class ReportConfig:
    place: str = ""
    n_top: int = 6
    n_bottom: int = 4


@dataclass(frozen=True)
class InputsConfig:
    """Pre-existing input files; when ``scans`` is set the simulate stage is skipped."""

    scans: str = ""
    sessions: str = ""
    trades: str = ""
    buildings: str = ""
    hierarchy: str = ""


@dataclass(frozen=True)
class RunConfig:
    seed: int = 42
    simulate: SimConfig = field(default_factory=SimConfig)
    label: LabelRules = field(default_factory=LabelRules)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    detect: DetectConfig = field(default_factory=DetectConfig)
    aggregate: AggregateConfig = field(default_factory=AggregateConfig)
    report: ReportConfig = field(default_factory=ReportConfig)
    inputs: InputsConfig = field(default_factory=InputsConfig)

    @property
    def world(self) -> WorldGrid:
        return self.simulate.world


_SECTIONS = {
    "simulate": SimConfig,
    "label": LabelRules,
    "features": FeatureConfig,
    "train": TrainConfig,
    "detect": DetectConfig,
    "aggregate": AggregateConfig,
    "report": ReportConfig,
    "inputs": InputsConfig,
}


def _coerce(raw: str, annotation, default):
    text = raw.strip()
    kind = type(default)
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is tuple:
        parts = [p.strip() for p in text.split(",") if p.strip()]
        args = typing.get_args(annotation)
        elem = args[0] if args else str
        if elem is str:
            return tuple(parts)
        return tuple(elem(p) for p in parts)
    if kind in (int, float, str):
        return kind(text)
    raise ValueError(f"unsupported field type {kind}")


def _build(cls, values: dict[str, str], section: str):
    hints = typing.get_type_hints(cls)
    defaults = cls()
    names = {f.name for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, raw in values.items():
        if key not in names or dataclasses.is_dataclass(getattr(defaults, key)):
            raise ConfigError(f"[{section}] unknown key {key!r}")
        try:
            kwargs[key] = _coerce(raw, hints[key], getattr(defaults, key))
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
    try:
        return cls(**kwargs)
    except (ConfigError, TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def parse_config(text: str, seed_override: int | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    known = set(_SECTIONS) | {"run", "world"}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(f"unknown section [{section}]")

    run = dict(parser["run"]) if parser.has_section("run") else {}
    seed = seed_override
    if seed is None:
        try:
            seed = int(run.pop("seed", 42))
        except ValueError:
            raise ConfigError("[run] seed must be an integer") from None
    else:
        run.pop("seed", None)
    if run:
        raise ConfigError(f"[run] unknown keys {sorted(run)}")

    world = _build(WorldGrid, dict(parser["world"]) if parser.has_section("world") else {}, "world")
    parts = {}
    for name, cls in _SECTIONS.items():
        values = dict(parser[name]) if parser.has_section(name) else {}
        if cls is SimConfig:
            values.pop("seed", None)
            part = _build(cls, values, name)
            part = dataclasses.replace(part, seed=seed, world=world)
        else:
            part = _build(cls, values, name)
        parts[name] = part
    return RunConfig(seed=seed, **parts)


def load_config(path: str | Path | None, seed_override: int | None = None) -> RunConfig:
    if path is None:
        return parse_config("", seed_override)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return _relative_to(parse_config(text, seed_override), Path(path).parent)


def _relative_to(cfg: RunConfig, base: Path) -> RunConfig:
    # file paths inside a config file are relative to that file
    def fix(value: str) -> str:
        return str(base / value) if value and not Path(value).is_absolute() else value

    inputs = dataclasses.replace(cfg.inputs, **{f.name: fix(getattr(cfg.inputs, f.name))
                                                for f in dataclasses.fields(InputsConfig)})
    aggregate = dataclasses.replace(cfg.aggregate, groups_file=fix(cfg.aggregate.groups_file))
    return dataclasses.replace(cfg, inputs=inputs, aggregate=aggregate)


def config_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
