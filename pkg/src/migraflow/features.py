"""Per-AP feature records: building context plus connection statistics."""

from __future__ import annotations

from dataclasses import astuple, dataclass, fields

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .config import FeatureConfig

UNCERTAIN_TYPE = 3
PROPERTY_COLUMNS = ["p_office", "p_residential", "p_mixture", "p_uncertain"]

# hour-of-day windows, [start, end)
DAY_HOURS = (10, 16)
NIGHT_HOURS = (22, 6)


@dataclass(frozen=True)
class FeatureVector:
    prop1_type: int
    prop1_prob: float
    prop2_type: int
    prop2_prob: float
    terminal_history: int
    accumulated_connections: int
    max_simultaneous: int
    day_night_ratio: float

    def as_tuple(self) -> tuple:
        return astuple(self)


FEATURE_NAMES = [f.name for f in fields(FeatureVector)]
NOMINAL_FEATURES = (0, 2)


class NoObservationsError(ValueError):
    pass


def _building_types(buildings: pd.DataFrame) -> np.ndarray:
    return buildings[PROPERTY_COLUMNS].to_numpy().argmax(axis=1)


def building_probabilities(scans: pd.DataFrame, buildings: pd.DataFrame, radius_m: float = 100.0) -> pd.DataFrame:
    """Full AP-to-building probability table: ap_id, building_id, prob.

    Each observation votes for its nearest building within ``radius_m`` with
    weight ``10**(rssi/10) / (1 + distance)``; masses are normalized per AP.
    APs whose observations have no candidate building are absent.
    """
    tree = cKDTree(buildings[["x", "y"]].to_numpy())
    dist, idx = tree.query(scans[["x", "y"]].to_numpy(), distance_upper_bound=radius_m)
    hit = idx < len(buildings)
    rssi = scans["rssi"].to_numpy()[hit]
    mass = np.power(10.0, rssi / 10.0) / (1.0 + dist[hit])
    table = pd.DataFrame(
        {
            "ap_id": scans["ap_id"].to_numpy(dtype=np.int64)[hit],
            "building_id": buildings["building_id"].to_numpy(dtype=np.int64)[idx[hit]],
            "mass": mass,
        }
    )
    table = table.groupby(["ap_id", "building_id"], sort=True, as_index=False)["mass"].sum()
    total = table.groupby("ap_id")["mass"].transform("sum")
    table["prob"] = table["mass"] / total
    return table[["ap_id", "building_id", "prob"]]


def _top2(probs: pd.DataFrame, ap_ids: np.ndarray, btype: dict[int, int]) -> pd.DataFrame:
    ranked = probs.sort_values(["ap_id", "prob", "building_id"], ascending=[True, False, True], kind="stable")
    ranked = ranked.assign(rank=ranked.groupby("ap_id").cumcount())
    out = pd.DataFrame({"ap_id": ap_ids})
    for r in (0, 1):
        part = ranked[ranked["rank"] == r].set_index("ap_id")
        b = part["building_id"].reindex(ap_ids)
        p = part["prob"].reindex(ap_ids)
        out[f"prop{r + 1}_type"] = [btype[int(v)] if pd.notna(v) else UNCERTAIN_TYPE for v in b]
        out[f"prop{r + 1}_prob"] = p.fillna(0.0).to_numpy()
    return out


def assign_buildings(ap_id: int, scans: pd.DataFrame, buildings: pd.DataFrame, radius_m: float = 100.0) -> list[tuple[int | None, float]]:
    """Top-2 (building_id, probability) for one AP, padded with (None, 0.0)."""
    own = scans[scans["ap_id"] == ap_id]
    if own.empty:
        raise NoObservationsError(f"AP {ap_id} has no scan observations")
    probs = building_probabilities(own, buildings, radius_m)
    probs = probs.sort_values(["prob", "building_id"], ascending=[False, True], kind="stable")
    ranked: list[tuple[int | None, float]] = [(int(b), float(p)) for b, p in zip(probs["building_id"], probs["prob"])][:2]
    while len(ranked) < 2:
        ranked.append((None, 0.0))
    return ranked


def ratio_from_counts(day_count: float, night_count: float) -> float:
    return day_count / (night_count + 1.0)


def _slots_in_window(h0: np.ndarray, h1: np.ndarray, hours: np.ndarray) -> np.ndarray:
    """Number of absolute hour slots h in [h0, h1] with h % 24 in ``hours``."""
    mask = np.zeros(24, dtype=np.int64)
    mask[hours] = 1
    prefix = np.concatenate([[0], np.cumsum(mask)])  # prefix[k] = count of hods < k

    def upto(h):  # slots in [0, h)
        q, r = np.divmod(h, 24)
        return q * mask.sum() + prefix[r]

    return upto(h1 + 1) - upto(h0)


def _window_hours(window: tuple[int, int]) -> np.ndarray:
    start, end = window
    return np.arange(start, end) if start < end else np.concatenate([np.arange(start, 24), np.arange(0, end)])


def overlap_hours(connect: np.ndarray, disconnect: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Day-window and night-window hour slots touched by each session."""
    connect = np.asarray(connect, dtype=np.int64)
    disconnect = np.asarray(disconnect, dtype=np.int64)
    h0 = connect // 3600
    h1 = (disconnect - 1) // 3600
    day = _slots_in_window(h0, h1, _window_hours(DAY_HOURS))
    night = _slots_in_window(h0, h1, _window_hours(NIGHT_HOURS))
    return day, night


def day_night_ratio(sessions: pd.DataFrame) -> float:
    """Day-window over smoothed night-window session hours for one AP's sessions."""
    if len(sessions) == 0:
        return 0.0
    day, night = overlap_hours(sessions["connect_ts"].to_numpy(), sessions["disconnect_ts"].to_numpy())
    return ratio_from_counts(float(day.sum()), float(night.sum()))


def session_stats(sessions: pd.DataFrame) -> pd.DataFrame:
    """terminal_history, accumulated_connections, max_simultaneous, day_night_ratio per AP."""
    s = sessions[sessions["connect_ts"] < sessions["disconnect_ts"]]
    ap = s["ap_id"].to_numpy(dtype=np.int64)
    connect = s["connect_ts"].to_numpy(dtype=np.int64)
    disconnect = s["disconnect_ts"].to_numpy(dtype=np.int64)

    g = pd.DataFrame({"ap_id": ap, "terminal_id": s["terminal_id"].to_numpy()})
    stats = pd.DataFrame(
        {
            "terminal_history": g.groupby("ap_id")["terminal_id"].nunique(),
            "accumulated_connections": g.groupby("ap_id").size(),
        }
    )

    # sweep: disconnects sort before connects at equal timestamps (half-open sessions)
    ev_ap = np.concatenate([ap, ap])
    ev_t = np.concatenate([connect, disconnect])
    ev_d = np.concatenate([np.ones(len(ap), dtype=np.int64), -np.ones(len(ap), dtype=np.int64)])
    order = np.lexsort((ev_d, ev_t, ev_ap))
    running = np.cumsum(ev_d[order])  # each AP's block nets to zero
    stats["max_simultaneous"] = pd.Series(running).groupby(ev_ap[order]).max()

    day, night = overlap_hours(connect, disconnect)
    sums = pd.DataFrame({"ap_id": ap, "day": day, "night": night}).groupby("ap_id")[["day", "night"]].sum()
    stats["day_night_ratio"] = sums["day"] / (sums["night"] + 1.0)
    return stats


def extract_features(
    scans: pd.DataFrame, sessions: pd.DataFrame, buildings: pd.DataFrame, config: FeatureConfig = FeatureConfig()
) -> pd.DataFrame:
    """Feature table (ap_id + FeatureVector columns) for every AP with at least one scan."""
    ap_ids = np.unique(scans["ap_id"].to_numpy(dtype=np.int64))
    btype = dict(zip(buildings["building_id"].astype(int), _building_types(buildings).astype(int)))
    probs = building_probabilities(scans, buildings, config.candidate_radius_m)
    out = _top2(probs, ap_ids, btype)
    stats = session_stats(sessions).reindex(ap_ids)
    out["terminal_history"] = stats["terminal_history"].fillna(0).to_numpy(dtype=np.int64)
    out["accumulated_connections"] = stats["accumulated_connections"].fillna(0).to_numpy(dtype=np.int64)
    out["max_simultaneous"] = stats["max_simultaneous"].fillna(0).to_numpy(dtype=np.int64)
    out["day_night_ratio"] = stats["day_night_ratio"].fillna(0.0).to_numpy(dtype=float)
    out["prop1_type"] = out["prop1_type"].astype(np.int64)
    out["prop2_type"] = out["prop2_type"].astype(np.int64)
    return out[["ap_id", *FEATURE_NAMES]]


def extract(ap_id: int, scans: pd.DataFrame, sessions: pd.DataFrame, buildings: pd.DataFrame,
            config: FeatureConfig = FeatureConfig()) -> FeatureVector:
    own_scans = scans[scans["ap_id"] == ap_id]
    if own_scans.empty:
        raise NoObservationsError(f"AP {ap_id} has no scan observations")
    row = extract_features(own_scans, sessions[sessions["ap_id"] == ap_id], buildings, config).iloc[0]
    return row_to_vector(row)


def row_to_vector(row) -> FeatureVector:
    return FeatureVector(
        int(row["prop1_type"]), float(row["prop1_prob"]), int(row["prop2_type"]), float(row["prop2_prob"]),
        int(row["terminal_history"]), int(row["accumulated_connections"]), int(row["max_simultaneous"]),
        float(row["day_night_ratio"]),
    )


def feature_matrix(table: pd.DataFrame) -> np.ndarray:
    return table[FEATURE_NAMES].to_numpy(dtype=float)
