"""File-to-file stages and the full run with its manifest."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import pandas as pd

from . import __version__, gbdt
from .config import DetectConfig, FeatureConfig, LabelRules, RunConfig, SimConfig, TrainConfig
from .features import extract_features, feature_matrix
from .flows import (
    FlowMatrix, density_grid, flow_matrix, group_flows, load_groups, migrations_between, n_months,
    net_immigration, time_series, top_table,
)
from .geo import PlaceHierarchy, Scale, WorldGrid
from .io import read_table, write_table
from .labeler import POSITIVE, label_sessions
from .moves import run_detection
from .simulator import generate_world, simulate

log = logging.getLogger(__name__)

STAGE_VERSIONS = {
    "simulate": "1", "label": "1", "features": "1", "train": "1", "detect": "1", "aggregate": "1", "report": "1",
}
STAGE_ORDER = list(STAGE_VERSIONS)
FLOW_FILE = re.compile(r"^flows_(community|district|city|province)_(\d+)_(\d+)\.csv$")


class StageError(RuntimeError):
    pass


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _require(*paths: Path) -> None:
    for p in paths:
        if not Path(p).is_file():
            raise StageError(f"missing input file: {p}")


# -- stages ------------------------------------------------------------------
def simulate_stage(config: SimConfig, out_dir: Path) -> list[Path]:
    world = generate_world(config)
    result = simulate(world, config)
    out_dir.mkdir(parents=True, exist_ok=True)
    hier = out_dir / "hierarchy.csv"
    world.hierarchy.save(hier)
    return [
        write_table(result.scans, out_dir / "scans.csv", "scans"),
        write_table(result.sessions, out_dir / "sessions.csv", "sessions"),
        write_table(result.trades, out_dir / "trades.csv", "trades"),
        write_table(result.truth, out_dir / "truth.csv", "truth"),
        write_table(world.buildings, out_dir / "buildings.csv", "buildings"),
        write_table(result.placements, out_dir / "placements.csv", "placements"),
        hier,
    ]


def label_stage(sessions: Path, out: Path, rules: LabelRules = LabelRules()) -> list[Path]:
    _require(sessions)
    result = label_sessions(read_table(sessions, "sessions"), rules)
    return [write_table(result.labels, out, "labels")]


def features_stage(scans: Path, sessions: Path, buildings: Path, out: Path,
                   config: FeatureConfig = FeatureConfig()) -> list[Path]:
    _require(scans, sessions, buildings)
    table = extract_features(read_table(scans, "scans"), read_table(sessions, "sessions"),
                             read_table(buildings, "buildings"), config)
    return [write_table(table, out, "features")]


def training_set(features: pd.DataFrame, labels: pd.DataFrame) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    data = features.merge(labels, on="ap_id", how="inner").sort_values("ap_id", kind="stable")
    y = (data["label"] == POSITIVE).to_numpy(dtype=np.int64)
    return feature_matrix(data), y, data["ap_id"].to_numpy()


def train_stage(features: Path, labels: Path, out: Path, config: TrainConfig = TrainConfig()) -> list[Path]:
    _require(features, labels)
    X, y, ids = training_set(read_table(features, "features"), read_table(labels, "labels"))
    model = gbdt.train(X, y, config, sample_ids=ids)
    out.parent.mkdir(parents=True, exist_ok=True)
    gbdt.save(model, out)
    return [out]


def detect_stage(scans: Path, model: Path, trades: Path, features: Path, out: Path, out_locations: Path,
                 grid: WorldGrid, config: DetectConfig = DetectConfig()) -> list[Path]:
    _require(scans, model, trades, features)
    scan_df = read_table(scans, "scans")
    result = run_detection(scan_df, read_table(trades, "trades"), gbdt.load(model),
                           read_table(features, "features"), grid, config)
    return [write_table(result.moves_frame(), out, "moves"), write_table(result.locations, out_locations, "locations")]


def aggregate_stage(locations: Path, hierarchy: Path, from_month: int, to_month: int, scale: Scale | str,
                    out: Path) -> list[Path]:
    _require(locations, hierarchy)
    events = migrations_between(read_table(locations, "locations"), from_month, to_month)
    flow = flow_matrix(events, scale, PlaceHierarchy.load(hierarchy), (from_month, to_month))
    return [write_table(flow.to_frame(), out, "flows")]


def flow_periods(months: int) -> list[tuple[int, int]]:
    periods = [(m, m + 1) for m in range(months - 1)]
    if months > 2:
        periods.append((0, months - 1))
    return periods


def read_flows(flows_dir: Path) -> dict[tuple[str, int, int], FlowMatrix]:
    out = {}
    for path in sorted(Path(flows_dir).glob("flows_*.csv")):
        m = FLOW_FILE.match(path.name)
        if not m:
            continue
        df = read_table(path, "flows")
        scale, t, u = m.group(1), int(m.group(2)), int(m.group(3))
        out[(scale, t, u)] = FlowMatrix.from_frame(df) if len(df) else FlowMatrix(Scale.parse(scale), t, u)
    return out


def report_stage(flows_dir: Path, out_dir: Path, place: str = "", hierarchy: Path | None = None,
                 series_out: Path | None = None, grid: WorldGrid | None = None, groups_file: str = "",
                 n_top: int = 6, n_bottom: int = 4) -> list[Path]:
    """Net tables, top tables, density grids, group flows and one place's series."""
    flows = read_flows(flows_dir)
    if not flows:
        raise StageError(f"no flows_*.csv files in {flows_dir}")
    hier = PlaceHierarchy.load(hierarchy) if hierarchy is not None and Path(hierarchy).is_file() else None
    written: list[Path] = []
    for (scale, t, u), flow in sorted(flows.items()):
        if not flow.counts:
            continue
        net = net_immigration(flow, [p.code for p in hier.places(flow.scale)] if hier else None)
        written.append(write_table(net.to_frame(), out_dir / f"net_{scale}_{t}_{u}.csv", "net"))
        written.append(write_table(top_table(net, n_top, n_bottom, hier), out_dir / f"top_{scale}_{t}_{u}.csv", "top"))
        if scale == "community" and grid is not None:
            written.append(write_table(density_grid(flow, grid), out_dir / f"density_{t}_{u}.csv", "density"))
        if scale == "city" and groups_file and hier is not None:
            groups = load_groups(groups_file, hier)
            written.append(write_table(group_flows(flow, groups, hier), out_dir / f"groups_{t}_{u}.csv", "groups"))
    if place:
        scale = _place_scale(place, hier, flows)
        monthly = {u: f for (s, t, u), f in flows.items() if s == scale and u == t + 1}
        if len(monthly) < 2:
            log.warning("fewer than two monthly %s flows; no series for %s", scale, place)
        else:
            written.append(write_table(time_series(monthly, place), series_out or out_dir / "series.csv", "series"))
    return written


def _place_scale(place: str, hier: PlaceHierarchy | None, flows) -> str:
    if hier is not None:
        try:
            return hier.find(place).scale.label
        except KeyError:
            raise StageError(f"unknown place {place!r}") from None
    for s in ("province", "city", "district", "community"):
        if any(s == k[0] and place in f.places for k, f in flows.items()):
            return s
    raise StageError(f"place {place!r} does not occur in any flow file")


# -- full run --------------------------------------------------------------------
@dataclass
class Manifest:
    config_digest: str
    seed: int
    version: str = __version__
    stage_versions: dict[str, str] = field(default_factory=lambda: dict(STAGE_VERSIONS))
    stages: list[dict] = field(default_factory=list)
    status: str = "running"
    error: str = ""

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def run_pipeline(config: RunConfig, out_dir: str | Path, config_digest: str = "") -> Manifest:
    """Run every stage in order, recording digests and timings in ``manifest.json``.

    A failing stage stops the run; the partial manifest is still written and
    the error is re-raised as StageError.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = Manifest(config_digest, config.seed)
    grid = config.world
    inp = config.inputs
    if inp.scans:
        scans, sessions, trades = Path(inp.scans), Path(inp.sessions), Path(inp.trades)
        buildings, hierarchy = Path(inp.buildings), Path(inp.hierarchy)
    else:
        scans, sessions, trades = out / "scans.csv", out / "sessions.csv", out / "trades.csv"
        buildings, hierarchy = out / "buildings.csv", out / "hierarchy.csv"
    labels, features, model = out / "labels.csv", out / "features.csv", out / "model.txt"
    moves, locations = out / "moves.csv", out / "locations.csv"

    def aggregate_all() -> list[Path]:
        _require(locations, hierarchy)
        locs = read_table(locations, "locations")
        hier = PlaceHierarchy.load(hierarchy)
        written = []
        for t, u in flow_periods(n_months(locs)):
            events = migrations_between(locs, t, u)
            for scale in config.aggregate.scales:
                flow = flow_matrix(events, scale, hier, (t, u))
                written.append(write_table(flow.to_frame(), out / f"flows_{Scale.parse(scale).label}_{t}_{u}.csv", "flows"))
        return written

    def report() -> list[Path]:
        place = config.report.place or _default_place(out)
        return report_stage(out, out, place, hierarchy, None, grid, config.aggregate.groups_file,
                            config.report.n_top, config.report.n_bottom)

    stages: list[tuple[str, list[Path], Callable[[], list[Path]]]] = [
        ("label", [sessions], lambda: label_stage(sessions, labels, config.label)),
        ("features", [scans, sessions, buildings], lambda: features_stage(scans, sessions, buildings, features, config.features)),
        ("train", [features, labels], lambda: train_stage(features, labels, model, config.train)),
        ("detect", [scans, model, trades, features],
         lambda: detect_stage(scans, model, trades, features, moves, locations, grid, config.detect)),
        ("aggregate", [locations, hierarchy], aggregate_all),
        ("report", [], report),
    ]
    if not inp.scans:
        stages.insert(0, ("simulate", [], lambda: simulate_stage(config.simulate, out)))

    try:
        for name, inputs, fn in stages:
            started = time.perf_counter()
            try:
                _require(*inputs)
                outputs = fn()
            except (StageError, FileNotFoundError, ValueError, KeyError) as exc:
                raise StageError(f"stage {name} failed: {exc}") from exc
            manifest.stages.append({
                "name": name,
                "version": STAGE_VERSIONS[name],
                "seconds": round(time.perf_counter() - started, 3),
                "inputs": {_rel(p, out): sha256_file(p) for p in inputs},
                "outputs": {_rel(p, out): sha256_file(p) for p in outputs},
            })
            log.info("stage %s done", name)
    except StageError as exc:
        manifest.status, manifest.error = "failed", str(exc)
        manifest.write(out / "manifest.json")
        raise
    manifest.status = "ok"
    manifest.write(out / "manifest.json")
    return manifest


def _default_place(out: Path) -> str:
    """City with the most inter-city traffic over the whole run, ties by code."""
    flows = {k: f for k, f in read_flows(out).items() if k[0] == "city"}
    if not flows:
        return ""
    longest = max(flows, key=lambda k: (k[2] - k[1], -k[1]))
    f = flows[longest]
    traffic = f.immigration() + f.emigration()
    if not traffic:
        return ""
    return min(traffic, key=lambda p: (-traffic[p], p))


def _rel(path: Path, base: Path) -> str:
    try:
        return str(Path(path).resolve().relative_to(base.resolve()))
    except ValueError:
        return str(path)

