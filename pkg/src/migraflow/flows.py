"""Monthly snapshots, migration events and origin-destination flows at every scale."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .geo import WEEKS_PER_MONTH, PlaceHierarchy, PlaceId, Scale, WorldGrid, weeks_of_month

log = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class MigrationEvent:
    family_id: str
    from_month: int
    to_month: int
    origin: str  # community code
    destination: str


def monthly_snapshot(locations: pd.DataFrame, month: int) -> pd.Series:
    """Where each family was last seen during ``month`` (family_id -> place)."""
    weeks = weeks_of_month(month)
    rows = locations[(locations["week"] >= weeks.start) & (locations["week"] < weeks.stop)]
    if rows.empty:
        raise ValueError(f"month {month} has no location records")
    rows = rows.sort_values("week", kind="stable")
    snap = rows.drop_duplicates("family_id", keep="last").set_index("family_id")["place"]
    return snap.sort_index().rename(f"month_{month}")


def derive_migrations(earlier: pd.Series, later: pd.Series, from_month: int, to_month: int) -> list[MigrationEvent]:
    """Left join ``earlier`` onto ``later``: families whose community changed become events."""
    if from_month >= to_month:
        raise ValueError("from_month must precede to_month")
    joined = earlier.to_frame("origin").join(later.rename("destination"), how="left")
    moved = joined[joined["destination"].notna() & (joined["origin"] != joined["destination"])]
    return [MigrationEvent(str(f), from_month, to_month, str(o), str(d))
            for f, o, d in zip(moved.index, moved["origin"], moved["destination"])]


def migrations_between(locations: pd.DataFrame, from_month: int, to_month: int) -> list[MigrationEvent]:
    return derive_migrations(monthly_snapshot(locations, from_month), monthly_snapshot(locations, to_month),
                             from_month, to_month)


def n_months(locations: pd.DataFrame) -> int:
    return 0 if locations.empty else int(locations["week"].max()) // WEEKS_PER_MONTH + 1


@dataclass
class FlowMatrix:
    """Inter-place counts at one scale, plus the intra-place tally kept apart."""

    scale: Scale
    from_month: int
    to_month: int
    counts: Counter = field(default_factory=Counter)  # (origin, destination) -> n
    intra: Counter = field(default_factory=Counter)  # place -> n

    def __add__(self, other: FlowMatrix) -> FlowMatrix:
        if (self.scale, self.from_month, self.to_month) != (other.scale, other.from_month, other.to_month):
            raise ValueError("can only merge flows of the same scale and period")
        return FlowMatrix(self.scale, self.from_month, self.to_month,
                          self.counts + other.counts, self.intra + other.intra)

    @property
    def places(self) -> list[str]:
        return sorted({p for od in self.counts for p in od} | set(self.intra))

    def immigration(self) -> Counter:
        out = Counter()
        for (_, d), n in self.counts.items():
            out[d] += n
        return out

    def emigration(self) -> Counter:
        out = Counter()
        for (o, _), n in self.counts.items():
            out[o] += n
        return out

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def to_frame(self) -> pd.DataFrame:
        rows = [(self.scale.label, self.from_month, self.to_month, "inter", o, d, n)
                for (o, d), n in sorted(self.counts.items())]
        rows += [(self.scale.label, self.from_month, self.to_month, "intra", p, p, n)
                 for p, n in sorted(self.intra.items())]
        return pd.DataFrame(rows, columns=["scale", "from_month", "to_month", "kind", "origin", "destination", "count"])

    @classmethod
    def from_frame(cls, df: pd.DataFrame) -> FlowMatrix:
        keys = df[["scale", "from_month", "to_month"]].drop_duplicates()
        if len(keys) != 1:
            raise ValueError("flow table must hold exactly one scale and period")
        scale, t, u = keys.iloc[0]
        flow = cls(Scale.parse(scale), int(t), int(u))
        for kind, o, d, n in zip(df["kind"], df["origin"], df["destination"], df["count"]):
            if kind == "inter":
                flow.counts[(o, d)] += int(n)
            elif kind == "intra":
                flow.intra[o] += int(n)
            else:
                raise ValueError(f"unknown flow kind {kind!r}")
        return flow


def flow_matrix(events: Iterable[MigrationEvent], scale: Scale | str, hierarchy: PlaceHierarchy,
                period: tuple[int, int] | None = None) -> FlowMatrix:
    scale = Scale.parse(scale)
    events = list(events)
    if period is None:
        periods = {(e.from_month, e.to_month) for e in events}
        if len(periods) > 1:
            raise ValueError("events span several periods")
        period = periods.pop() if periods else (0, 1)
    up = hierarchy.code_map(Scale.COMMUNITY, scale)
    flow = FlowMatrix(scale, *period)
    for e in events:
        o, d = up[e.origin], up[e.destination]
        if o == d:
            flow.intra[o] += 1
        else:
            flow.counts[(o, d)] += 1
    return flow


def regularize(values: Mapping[str, float]) -> tuple[dict[str, float], bool]:
    """Divide by the maximum value; returns (values, skipped) and skips when max <= 0."""
    if not values:
        return {}, True
    top = max(values.values())
    if top <= 0:
        return {k: float(v) for k, v in values.items()}, True
    return {k: v / top for k, v in values.items()}, False


@dataclass
class NetImmigrationTable:
    scale: Scale
    from_month: int
    to_month: int
    raw: dict[str, int]
    regularized: dict[str, float]
    skipped: bool = False

    def to_frame(self) -> pd.DataFrame:
        places = sorted(self.raw)
        return pd.DataFrame({"scale": self.scale.label, "from_month": self.from_month, "to_month": self.to_month,
                             "place": places, "raw": [self.raw[p] for p in places],
                             "regularized": [self.regularized[p] for p in places]})


def net_immigration(flow: FlowMatrix, places: Iterable[str] | None = None) -> NetImmigrationTable:
    """Immigration minus emigration per place, regularized by the largest value."""
    if not flow.counts and places is None:
        raise ValueError("flow matrix is empty")
    imm, emi = flow.immigration(), flow.emigration()
    keys = sorted(set(imm) | set(emi) | set(places or ()))
    raw = {p: imm[p] - emi[p] for p in keys}
    reg, skipped = regularize(raw)
    if skipped:
        log.warning("no place has positive net immigration; regularization skipped")
    return NetImmigrationTable(flow.scale, flow.from_month, flow.to_month, raw, reg, skipped)


def flow_columns(flow: FlowMatrix) -> pd.DataFrame:
    """Immigration and emigration per place, each regularized by its own column maximum."""
    imm, emi = flow.immigration(), flow.emigration()
    places = sorted(set(imm) | set(emi))
    out = pd.DataFrame({"place": places, "immigration": [imm[p] for p in places],
                        "emigration": [emi[p] for p in places]})
    for col in ("immigration", "emigration"):
        top = out[col].max() if len(out) else 0
        out[f"{col}_regularized"] = out[col] / top if top > 0 else 0.0
    return out


# -- city groups -------------------------------------------------------------
def parse_groups(text: str, hierarchy: PlaceHierarchy | None = None) -> dict[str, frozenset[str]]:
    """Parse ``name:city,city,...`` lines; groups must be disjoint."""
    groups: dict[str, frozenset[str]] = {}
    owner: dict[str, str] = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, sep, members = line.partition(":")
        name = name.strip()
        cities = [c.strip() for c in members.split(",") if c.strip()]
        if not sep or not name or not cities:
            raise ValueError(f"line {n}: expected 'name:city,city,...'")
        if name in groups:
            raise ValueError(f"line {n}: duplicate group {name!r}")
        for c in cities:
            if hierarchy is not None and PlaceId(Scale.CITY, c) not in hierarchy:
                raise ValueError(f"line {n}: unknown city {c!r}")
            if c in owner:
                raise ValueError(f"city {c} belongs to both {owner[c]!r} and {name!r}")
            owner[c] = name
        groups[name] = frozenset(cities)
    return groups


def load_groups(path: str | Path, hierarchy: PlaceHierarchy | None = None) -> dict[str, frozenset[str]]:
    return parse_groups(Path(path).read_text(encoding="utf-8"), hierarchy)


def group_flows(source: Iterable[MigrationEvent] | FlowMatrix, groups: Mapping[str, frozenset[str]],
                hierarchy: PlaceHierarchy) -> pd.DataFrame:
    """Intra-group and directional group-to-group counts of inter-city moves.

    ``source`` is a list of events or a flow matrix at community or city
    scale. Moves touching a city outside every group are ignored.
    """
    if not isinstance(source, FlowMatrix):
        source = flow_matrix(source, Scale.CITY, hierarchy)
    if source.scale > Scale.CITY:
        raise ValueError("group flows need city-scale or finer flows")
    up = hierarchy.code_map(source.scale, Scale.CITY)
    member = {c: g for g, cities in groups.items() for c in cities}
    tally: Counter = Counter()
    for (o, d), n in source.counts.items():
        co, cd = up[o], up[d]
        go, gd = member.get(co), member.get(cd)
        if co == cd or go is None or gd is None:
            continue
        tally[("intra" if go == gd else "inter", go, gd)] += n
    rows = sorted(tally.items(), key=lambda kv: (-kv[1], kv[0]))
    top = rows[0][1] if rows else 0
    return pd.DataFrame([(d, o, g, n, n / top) for (d, o, g), n in rows],
                        columns=["direction", "origin_group", "destination_group", "count", "regularized"])


# -- reporting helpers -------------------------------------------------------------
def time_series(flows: Mapping[int, FlowMatrix], place: str) -> pd.DataFrame:
    """Per-month net immigration, total migration and their ratio for one place.

    ``flows`` maps each month to the flow matrix covering the move into it.
    """
    if len(flows) < 2:
        raise ValueError("a time series needs at least two months")
    rows = []
    for month in sorted(flows):
        f = flows[month]
        imm, emi = f.immigration()[place], f.emigration()[place]
        total = imm + emi
        rows.append((month, imm - emi, total, (imm - emi) / total if total else 0.0, int(total == 0)))
    return pd.DataFrame(rows, columns=["month", "net_immigration", "total_migration", "ratio", "zero_total"])


def top_table(net: NetImmigrationTable, n_top: int = 6, n_bottom: int = 4,
              hierarchy: PlaceHierarchy | None = None) -> pd.DataFrame:
    """Highest ``n_top`` and lowest ``n_bottom`` places, descending, without repeats."""
    if not net.raw:
        raise ValueError("net immigration table is empty")
    ordered = sorted(net.raw, key=lambda p: (-net.regularized[p], p))
    picked = list(range(min(n_top, len(ordered))))
    picked += [i for i in range(max(0, len(ordered) - n_bottom), len(ordered)) if i not in picked]
    rows = []
    for i in picked:
        p = ordered[i]
        pid = PlaceId(net.scale, p)
        name = hierarchy.name(pid) if hierarchy is not None and pid in hierarchy else p
        rows.append((i + 1, p, name, net.regularized[p], net.raw[p]))
    return pd.DataFrame(rows, columns=["rank", "place", "name", "regularized", "raw"])


def density_grid(source: Iterable[MigrationEvent] | FlowMatrix, grid: WorldGrid) -> pd.DataFrame:
    """Net arrivals per grid cell, placing each community at its centre cell."""
    if not isinstance(source, FlowMatrix):
        tally: Counter = Counter()
        for e in source:
            tally[e.destination] += 1
            tally[e.origin] -= 1
    elif source.scale != Scale.COMMUNITY:
        raise ValueError("density grids need community-scale flows")
    else:
        tally = source.immigration()
        tally.subtract(source.emigration())
    rows = []
    for code, n in tally.items():
        if n == 0:
            continue
        cell = grid.cell_of(grid.community_center(code))
        rows.append((cell.row, cell.col, n))
    rows.sort()
    return pd.DataFrame(rows, columns=["cell_row", "cell_col", "net_count"]).astype(np.int64)
