"""Weekly AP fingerprints, relocation detection and pseudo-migration filters.

Two paths compute the same prints: ``build_fingerprint``/``cosine_similarity``
work on one AP with plain dicts, while ``weekly_prints``/``detect_all_moves``
stream whole weeks through sparse matrices.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Hashable, Iterable, Iterator, Mapping

import numpy as np
import pandas as pd
from scipy import sparse

from .config import DetectConfig
from .features import feature_matrix
from .gbdt import StumpEnsemble
from .geo import SECONDS_PER_WEEK, GridCell, WorldGrid


class InsufficientObservations(ValueError):
    pass


@dataclass(frozen=True)
class Fingerprint:
    ap_id: int
    week: int
    weights: Mapping[Hashable, float]  # ("ap", id) or ("cell", row, col) -> weight
    anchor_cell: GridCell


@dataclass(frozen=True, order=True)
class MoveCandidate:
    to_week: int
    ap_id: int
    from_week: int
    similarity: float
    origin: str
    destination: str


def _batch_keys(scans: pd.DataFrame) -> np.ndarray:
    # (scanner, timestamp) packed into one int64: timestamps stay below 2**40
    return (scans["scanner_id"].to_numpy(dtype=np.int64) << 40) | scans["timestamp"].to_numpy(dtype=np.int64)


def _cells(scans: pd.DataFrame, cell_size_m: float) -> tuple[np.ndarray, np.ndarray]:
    rows = np.floor(scans["y"].to_numpy() / cell_size_m).astype(np.int64)
    cols = np.floor(scans["x"].to_numpy() / cell_size_m).astype(np.int64)
    return rows, cols


def build_fingerprint(ap_id: int, week: int, scans: pd.DataFrame, cell_size_m: float = 250.0,
                      min_obs: int = 3) -> Fingerprint:
    """Co-observed neighbour counts plus per-cell observation counts for one AP-week."""
    in_week = scans[scans["timestamp"].to_numpy() // SECONDS_PER_WEEK == week]
    keys = _batch_keys(in_week)
    ap = in_week["ap_id"].to_numpy()
    mine = ap == ap_id
    if mine.sum() < min_obs:
        raise InsufficientObservations(f"AP {ap_id} has {int(mine.sum())} observations in week {week}")
    weights: dict[Hashable, float] = {}
    my_batches = set(keys[mine].tolist())
    for k, other in zip(keys, ap):
        if other != ap_id and k in my_batches:
            weights[("ap", int(other))] = weights.get(("ap", int(other)), 0.0) + 1.0
    rows, cols = _cells(in_week[mine], cell_size_m)
    cell_counts: dict[tuple[int, int], int] = {}
    for r, c in zip(rows.tolist(), cols.tolist()):
        cell_counts[(r, c)] = cell_counts.get((r, c), 0) + 1
    for (r, c), n in cell_counts.items():
        weights[("cell", r, c)] = float(n)
    top = max(cell_counts.values())
    anchor = min(rc for rc, n in cell_counts.items() if n == top)
    return Fingerprint(ap_id, week, weights, GridCell(anchor[0], anchor[1], cell_size_m))


def cosine_similarity(a, b) -> float:
    """Cosine of two sparse non-negative vectors (Fingerprints or mappings)."""
    wa = a.weights if isinstance(a, Fingerprint) else a
    wb = b.weights if isinstance(b, Fingerprint) else b
    sa = math.fsum(v * v for v in wa.values())
    sb = math.fsum(v * v for v in wb.values())
    if sa == 0.0 or sb == 0.0:
        raise ValueError("cosine similarity of a zero vector")
    if len(wb) < len(wa):
        wa, wb = wb, wa
    dot = math.fsum(v * wb[k] for k, v in wa.items() if k in wb)
    # one square root keeps self-similarity exactly 1
    return min(1.0, dot / math.sqrt(sa * sb))


def detect_moves(previous: Mapping[int, Fingerprint], current: Mapping[int, Fingerprint], grid: WorldGrid,
                 threshold: float = 0.1) -> list[MoveCandidate]:
    """Compare two snapshots of prints; APs in only one snapshot are left pending."""
    out = []
    for ap_id in sorted(set(previous) & set(current)):
        a, b = previous[ap_id], current[ap_id]
        sim = cosine_similarity(a, b)
        origin = str(grid.community_of_cells(a.anchor_cell.row, a.anchor_cell.col))
        dest = str(grid.community_of_cells(b.anchor_cell.row, b.anchor_cell.col))
        if sim < threshold and origin != dest:
            out.append(MoveCandidate(b.week, ap_id, a.week, sim, origin, dest))
    return out


@dataclass
class WeekPrints:
    """All prints of one week as rows of a sparse matrix over a shared key space."""

    week: int
    ap_ids: np.ndarray  # sorted, one per row
    matrix: sparse.csr_matrix
    norms: np.ndarray
    anchor_rows: np.ndarray
    anchor_cols: np.ndarray
    communities: np.ndarray
    ap_universe: np.ndarray  # column i < len(ap_universe) is neighbour ap_universe[i]
    cell_cols: int

    def fingerprint(self, ap_id: int, cell_size_m: float) -> Fingerprint:
        i = int(np.searchsorted(self.ap_ids, ap_id))
        if i >= len(self.ap_ids) or self.ap_ids[i] != ap_id:
            raise KeyError(ap_id)
        row = self.matrix.getrow(i)
        n_ap = len(self.ap_universe)
        weights: dict[Hashable, float] = {}
        for col, v in zip(row.indices.tolist(), row.data.tolist()):
            if col < n_ap:
                weights[("ap", int(self.ap_universe[col]))] = float(v)
            else:
                r, c = divmod(col - n_ap, self.cell_cols)
                weights[("cell", r, c)] = float(v)
        return Fingerprint(ap_id, self.week, weights,
                           GridCell(int(self.anchor_rows[i]), int(self.anchor_cols[i]), cell_size_m))


def weekly_prints(scans: pd.DataFrame, grid: WorldGrid, min_obs: int = 3) -> Iterator[WeekPrints]:
    """Yield one WeekPrints per week that has scans, in week order."""
    if scans.empty:
        return
    week = scans["timestamp"].to_numpy(dtype=np.int64) // SECONDS_PER_WEEK
    ap_universe, ap_idx = np.unique(scans["ap_id"].to_numpy(dtype=np.int64), return_inverse=True)
    n_ap = len(ap_universe)
    keys = _batch_keys(scans)
    rows, cols = _cells(scans, grid.cell_size_m)
    rows = np.clip(rows, 0, grid.cell_rows - 1)
    cols = np.clip(cols, 0, grid.cell_cols - 1)
    cell_idx = rows * grid.cell_cols + cols
    n_cells = grid.cell_rows * grid.cell_cols
    order = np.argsort(week, kind="stable")
    bounds = np.flatnonzero(np.diff(week[order])) + 1
    for chunk in np.split(order, bounds):
        w = int(week[chunk[0]])
        a = ap_idx[chunk]
        counts = np.bincount(a, minlength=n_ap)
        kept = np.flatnonzero(counts >= min_obs)
        if len(kept) == 0:
            continue
        _, batch = np.unique(keys[chunk], return_inverse=True)
        ones = np.ones(len(chunk))
        B = sparse.csr_matrix((ones, (batch, a)), shape=(int(batch.max()) + 1, n_ap))
        Bk = B[:, kept]
        co = (B.T @ Bk).T.tocsr()  # kept x all APs
        co = co.tolil()
        co[np.arange(len(kept)), kept] = 0
        co = co.tocsr()
        co.eliminate_zeros()
        K = sparse.csr_matrix((ones, (a, cell_idx[chunk])), shape=(n_ap, n_cells))[kept]
        K.sum_duplicates()
        M = sparse.hstack([co, K], format="csr")
        norms = np.sqrt(np.asarray(M.multiply(M).sum(axis=1)).ravel())
        Kc = K.tocoo()
        # modal cell; ties go to the lowest cell index, i.e. lowest (row, col)
        o = np.lexsort((Kc.col, -Kc.data, Kc.row))
        first = np.ones(len(o), dtype=bool)
        first[1:] = Kc.row[o][1:] != Kc.row[o][:-1]
        anchor = np.empty(len(kept), dtype=np.int64)
        anchor[Kc.row[o][first]] = Kc.col[o][first]
        a_rows, a_cols = np.divmod(anchor, grid.cell_cols)
        yield WeekPrints(w, ap_universe[kept], M, norms, a_rows, a_cols,
                         grid.community_of_cells(a_rows, a_cols), ap_universe, grid.cell_cols)


def _row_positions(ap_ids: np.ndarray, wanted: np.ndarray) -> np.ndarray:
    return np.searchsorted(ap_ids, wanted)


def detect_all_moves(scans: pd.DataFrame, grid: WorldGrid, config: DetectConfig = DetectConfig()
                     ) -> tuple[list[MoveCandidate], pd.DataFrame]:
    """Stream every week, comparing each AP with its most recent print within ``max_gap`` weeks.

    Returns the candidates and the per-(AP, week) anchor table
    (ap_id, week, cell_row, cell_col, community).
    """
    recent: dict[int, WeekPrints] = {}
    last_seen: dict[int, int] = {}
    candidates: list[MoveCandidate] = []
    anchors = []
    for wp in weekly_prints(scans, grid, config.min_obs):
        w = wp.week
        anchors.append(pd.DataFrame({"ap_id": wp.ap_ids, "week": w, "cell_row": wp.anchor_rows,
                                     "cell_col": wp.anchor_cols, "community": wp.communities}))
        prev_week = np.array([last_seen.get(int(a), -10**9) for a in wp.ap_ids], dtype=np.int64)
        comparable = (w - prev_week) <= config.max_gap
        for pw in np.unique(prev_week[comparable]):
            cur_rows = np.flatnonzero(comparable & (prev_week == pw))
            prev = recent[int(pw)]
            prev_rows = _row_positions(prev.ap_ids, wp.ap_ids[cur_rows])
            dot = np.asarray(prev.matrix[prev_rows].multiply(wp.matrix[cur_rows]).sum(axis=1)).ravel()
            sim = np.minimum(1.0, dot / (prev.norms[prev_rows] * wp.norms[cur_rows]))
            moved = (sim < config.threshold) & (prev.communities[prev_rows] != wp.communities[cur_rows])
            for i in np.flatnonzero(moved):
                candidates.append(MoveCandidate(w, int(wp.ap_ids[cur_rows[i]]), int(pw), float(sim[i]),
                                                str(prev.communities[prev_rows[i]]), str(wp.communities[cur_rows[i]])))
        for a in wp.ap_ids.tolist():
            last_seen[a] = w
        recent[w] = wp
        for old in [k for k in recent if k < w - config.max_gap]:
            del recent[old]
    anchor_df = pd.concat(anchors, ignore_index=True) if anchors else pd.DataFrame(
        columns=["ap_id", "week", "cell_row", "cell_col", "community"])
    return sorted(candidates, key=lambda c: (c.ap_id, c.to_week)), anchor_df


# -- pseudo-migration filters ---------------------------------------------
def pocket_aps(scans: pd.DataFrame, cell_size_m: float = 250.0, radius_m: float = 5000.0, min_cells: int = 3) -> set[int]:
    """APs seen in ``min_cells`` cells pairwise at least ``radius_m`` apart within one week."""
    rows, cols = _cells(scans, cell_size_m)
    df = pd.DataFrame({"ap_id": scans["ap_id"].to_numpy(dtype=np.int64),
                       "week": scans["timestamp"].to_numpy(dtype=np.int64) // SECONDS_PER_WEEK,
                       "row": rows, "col": cols}).drop_duplicates()
    span = df.groupby(["ap_id", "week"]).agg(
        n=("row", "size"), r0=("row", "min"), r1=("row", "max"), c0=("col", "min"), c1=("col", "max"))
    extent = np.hypot(span["r1"] - span["r0"], span["c1"] - span["c0"]) * cell_size_m
    suspects = span.index[(span["n"] >= min_cells) & (extent >= radius_m)]
    found: set[int] = set()
    if len(suspects) == 0:
        return found
    sub = df.set_index(["ap_id", "week"]).loc[suspects]
    for (ap, _), grp in sub.groupby(level=[0, 1]):
        if ap in found:
            continue
        pts = (grp[["col", "row"]].to_numpy() + 0.5) * cell_size_m
        if _has_far_clique(pts, radius_m, min_cells):
            found.add(int(ap))
    return found


def _has_far_clique(points: np.ndarray, radius: float, size: int) -> bool:
    d = np.hypot(points[:, None, 0] - points[None, :, 0], points[:, None, 1] - points[None, :, 1])
    far = d >= radius
    for combo in itertools.combinations(range(len(points)), size):
        if all(far[i, j] for i, j in itertools.combinations(combo, 2)):
            return True
    return False


def residential_probability(classifier: StumpEnsemble, features: pd.DataFrame) -> pd.Series:
    return pd.Series(classifier.predict_proba(feature_matrix(features)),
                     index=features["ap_id"].to_numpy(dtype=np.int64), name="p_residential")


def rejection_reasons(candidates: Iterable[MoveCandidate], trades: pd.DataFrame, p_residential: pd.Series,
                      pocket: set[int], config: DetectConfig = DetectConfig()) -> dict[MoveCandidate, set[str]]:
    """Every filter that would drop each candidate: 'trade', 'classifier', 'pocket'."""
    trade_weeks: dict[int, list[int]] = {}
    for ap, wk in zip(trades["ap_id"].tolist(), trades["week"].tolist()):
        trade_weeks.setdefault(int(ap), []).append(int(wk))
    proba = p_residential.to_dict()
    out = {}
    for c in candidates:
        reasons = set()
        if any(abs(wk - c.to_week) <= config.trade_window for wk in trade_weeks.get(c.ap_id, ())):
            reasons.add("trade")
        if proba.get(c.ap_id, 0.0) < 0.5:
            reasons.add("classifier")
        if c.ap_id in pocket:
            reasons.add("pocket")
        out[c] = reasons
    return out


def _active_filters(config: DetectConfig) -> set[str]:
    flags = {"trade": config.use_trade_filter, "classifier": config.use_classifier_filter,
             "pocket": config.use_pocket_filter}
    return {name for name, on in flags.items() if on}


def filter_pseudo_migrations(candidates: list[MoveCandidate], trades: pd.DataFrame, classifier: StumpEnsemble,
                             features: pd.DataFrame, scans: pd.DataFrame | None = None, *,
                             pocket: set[int] | None = None, cell_size_m: float = 250.0,
                             config: DetectConfig = DetectConfig()) -> list[MoveCandidate]:
    """Drop traded APs, non-residential APs and pocket APs, per the enabled filters."""
    if pocket is None:
        pocket = pocket_aps(scans, cell_size_m, config.pocket_radius_m) if scans is not None else set()
    reasons = rejection_reasons(candidates, trades, residential_probability(classifier, features), pocket, config)
    active = _active_filters(config)
    return sorted((c for c in candidates if not (reasons[c] & active)), key=lambda c: (c.ap_id, c.to_week))


def family_locations(residential: Iterable[int], anchors: pd.DataFrame, moves: Iterable[MoveCandidate],
                     n_weeks: int, max_gap: int = 2, breaks: Iterable[tuple[int, int]] = ()) -> pd.DataFrame:
    """Weekly community of every residential AP's family.

    A family's place changes only at an accepted move, or when the AP
    reappears after more than ``max_gap`` unseen weeks. ``breaks`` are
    (ap_id, week) points where the AP changed hands: the old family stops and
    a new family id ``"<ap>#<n>"`` starts. Unseen weeks are forward-filled for
    up to ``max_gap`` weeks.
    """
    residential = set(int(a) for a in residential)
    accepted = {(m.ap_id, m.to_week): m.destination for m in moves}
    breaks = set(breaks)
    sub = anchors[anchors["ap_id"].isin(residential)].sort_values(["ap_id", "week"], kind="stable")
    fam_out, week_out, place_out = [], [], []
    for ap, grp in sub.groupby("ap_id", sort=True):
        seen = dict(zip(grp["week"].tolist(), grp["community"].tolist()))
        family, epoch, place, last = str(ap), 0, None, None
        for w in range(min(seen), n_weeks):
            if w in seen:
                comm = seen[w]
                if place is None or w - last > max_gap:
                    place = comm
                elif (ap, w) in accepted:
                    place = accepted[(ap, w)]
                elif (ap, w) in breaks:
                    epoch += 1
                    family, place = f"{ap}#{epoch}", comm
                last = w
            elif w - last > max_gap:
                continue
            fam_out.append(family)
            week_out.append(w)
            place_out.append(place)
    return pd.DataFrame({"family_id": fam_out, "week": np.asarray(week_out, dtype=np.int64), "place": place_out})


@dataclass
class DetectionResult:
    candidates: list[MoveCandidate]
    moves: list[MoveCandidate]
    locations: pd.DataFrame
    residential: set[int]
    pocket: set[int]

    def moves_frame(self) -> pd.DataFrame:
        return moves_to_frame(self.moves)


def moves_to_frame(moves: Iterable[MoveCandidate]) -> pd.DataFrame:
    rows = [(m.ap_id, m.from_week, m.to_week, m.similarity, m.origin, m.destination) for m in moves]
    return pd.DataFrame(rows, columns=["ap_id", "from_week", "to_week", "similarity", "origin", "destination"]).astype(
        {"ap_id": np.int64, "from_week": np.int64, "to_week": np.int64, "similarity": float})


def run_detection(scans: pd.DataFrame, trades: pd.DataFrame, classifier: StumpEnsemble, features: pd.DataFrame,
                  grid: WorldGrid, config: DetectConfig = DetectConfig(), n_weeks: int | None = None) -> DetectionResult:
    """Candidates, surviving moves and weekly family locations for one scan log."""
    candidates, anchors = detect_all_moves(scans, grid, config)
    pocket = pocket_aps(scans, grid.cell_size_m, config.pocket_radius_m) if config.use_pocket_filter else set()
    proba = residential_probability(classifier, features)
    reasons = rejection_reasons(candidates, trades, proba, pocket, config)
    active = _active_filters(config)
    kept = [c for c in candidates if not (reasons[c] & active)]
    breaks = [(c.ap_id, c.to_week) for c in candidates if "trade" in reasons[c] and "trade" in active]
    residential = set(proba.index[proba.to_numpy() >= 0.5].tolist()) if config.use_classifier_filter \
        else set(proba.index.tolist())
    residential -= pocket
    if n_weeks is None:
        n_weeks = int(scans["timestamp"].max()) // SECONDS_PER_WEEK + 1 if len(scans) else 0
    locations = family_locations(residential, anchors, kept, n_weeks, config.max_gap, breaks)
    return DetectionResult(candidates, kept, locations, residential, pocket)
