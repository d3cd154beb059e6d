"""Scoring detected locations and migrations against simulator ground truth."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Iterable

import pandas as pd

from .flows import MigrationEvent, migrations_between
from .geo import PlaceHierarchy, Scale


def true_locations(placements: pd.DataFrame, trades: pd.DataFrame | None = None) -> pd.DataFrame:
    """Weekly community of every home router, keyed like detected families.

    Routers stop counting as their original family from the week they are sold.
    """
    home = placements[placements["kind"] == "home"]
    if trades is not None and len(trades):
        sold = trades.groupby("ap_id")["week"].min()
        cut = home["ap_id"].map(sold)
        home = home[cut.isna() | (home["week"] < cut)]
    out = pd.DataFrame({"family_id": home["ap_id"].astype(str).to_numpy(),
                        "week": home["week"].to_numpy(), "place": home["community"].to_numpy()})
    return out.sort_values(["family_id", "week"], ignore_index=True)


def location_accuracy(truth: pd.DataFrame, detected: pd.DataFrame) -> float:
    """Share of true (family, week) records whose detected place matches."""
    merged = truth.merge(detected, on=["family_id", "week"], how="left", suffixes=("_true", "_det"))
    return float((merged["place_true"] == merged["place_det"]).mean()) if len(merged) else 1.0


def _keyed(events: Iterable[MigrationEvent], scale: Scale, hierarchy: PlaceHierarchy) -> set[tuple[str, str, str]]:
    up = hierarchy.code_map(Scale.COMMUNITY, scale)
    return {(e.family_id, up[e.origin], up[e.destination]) for e in events if up[e.origin] != up[e.destination]}


@dataclass(frozen=True)
class Score:
    precision: float
    recall: float
    f1: float
    n_true: int
    n_detected: int


def event_score(truth: Iterable[MigrationEvent], detected: Iterable[MigrationEvent], scale: Scale | str,
                hierarchy: PlaceHierarchy) -> Score:
    """Precision/recall/F1 of (family, origin, destination) tuples at ``scale``."""
    scale = Scale.parse(scale)
    t, d = _keyed(truth, scale, hierarchy), _keyed(detected, scale, hierarchy)
    hit = len(t & d)
    p = hit / len(d) if d else 1.0
    r = hit / len(t) if t else 1.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return Score(p, r, f1, len(t), len(d))


def edge_errors(truth: Iterable[MigrationEvent], detected: Iterable[MigrationEvent], scale: Scale | str,
                hierarchy: PlaceHierarchy, min_true: int = 50) -> pd.DataFrame:
    """Relative count error on every origin-destination edge with at least ``min_true`` true moves."""
    scale = Scale.parse(scale)
    tc = Counter((o, d) for _, o, d in _keyed(truth, scale, hierarchy))
    dc = Counter((o, d) for _, o, d in _keyed(detected, scale, hierarchy))
    rows = [(o, d, n, dc[(o, d)], abs(dc[(o, d)] - n) / n) for (o, d), n in sorted(tc.items()) if n >= min_true]
    return pd.DataFrame(rows, columns=["origin", "destination", "true", "detected", "rel_error"])


def true_migrations(placements: pd.DataFrame, trades: pd.DataFrame | None, from_month: int, to_month: int) -> list[MigrationEvent]:
    return migrations_between(true_locations(placements, trades), from_month, to_month)
