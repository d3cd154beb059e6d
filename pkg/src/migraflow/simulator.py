"""Seeded synthetic world: buildings, households, companies, APs and their weekly logs.

The simulator produces the four record streams the pipeline consumes (scans,
sessions, trades) plus ground truth (relocation events and weekly AP
placements) used only for evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.spatial import cKDTree

from .config import SimConfig, sub_seed
from .geo import SECONDS_PER_DAY, SECONDS_PER_WEEK, PlaceHierarchy, Scale, WorldGrid

HOUR = 3600

# building property types, in the order of the property_dist columns
PROPERTY_TYPES = ("office", "residential", "mixture", "uncertain")
OFFICE, RESIDENTIAL, MIXTURE, UNCERTAIN = range(4)

_PROPERTY_BASE = np.array(
    [
        [0.86, 0.04, 0.07, 0.03],  # office
        [0.04, 0.88, 0.05, 0.03],  # residential
        [0.30, 0.20, 0.45, 0.05],  # mixture
        [0.15, 0.25, 0.10, 0.50],  # uncertain
    ]
)

AP_KINDS = ("home", "office", "pocket", "mixed")
TRUTH_KINDS = ("household_move", "company_move", "trade", "pocket_noise")

# terminal id ranges per population, kept disjoint
OFFICE_TERMINAL_BASE = 50_000_000
MIXED_TERMINAL_BASE = 90_000_000

POCKET_SPREAD_M = 6000.0
AP_OFFSET_M = 5.0


@dataclass
class World:
    grid: WorldGrid
    hierarchy: PlaceHierarchy
    buildings: pd.DataFrame  # building_id,x,y,p_office,p_residential,p_mixture,p_uncertain,kind,community
    households: pd.DataFrame  # household_id,building_id,community,n_members,terminal_start
    companies: pd.DataFrame  # company_id,building_id,community
    aps: pd.DataFrame  # ap_id,kind,owner,building_id,x,y,violator,terminal_start,n_terminals
    city_weights: pd.Series
    city_attraction: pd.Series


@dataclass
class SimResult:
    scans: pd.DataFrame  # scanner_id,timestamp,x,y,ap_id,rssi
    sessions: pd.DataFrame  # terminal_id,ap_id,connect_ts,disconnect_ts,car_call_ts
    trades: pd.DataFrame  # ap_id,week,timestamp,seller,buyer
    truth: pd.DataFrame  # kind,ap_id,week,origin,destination
    placements: pd.DataFrame  # ap_id,week,kind,building_id,community


def _place_buildings(rng, grid: WorldGrid, n: int, communities: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    margin = min(150.0, grid.community_size_m / 4)
    xs = np.empty(n)
    ys = np.empty(n)
    for i, code in enumerate(communities):
        x0, y0, x1, y1 = grid.community_bounds(code)
        xs[i] = rng.uniform(x0 + margin, x1 - margin)
        ys[i] = rng.uniform(y0 + margin, y1 - margin)
    return np.round(xs, 2), np.round(ys, 2)


def generate_world(config: SimConfig) -> World:
    """Build the static world for ``config.seed``; a pure function of the config."""
    if config.n_households < 1:
        raise ValueError("world needs at least one household")
    grid = config.world
    if grid.width <= 0 or grid.height <= 0:
        raise ValueError("degenerate world bounds")
    rng = sub_seed(config.seed, "world")
    hierarchy = grid.hierarchy()
    cities = [p.code for p in hierarchy.places(Scale.CITY)]
    comm_to_city = hierarchy.code_map(Scale.COMMUNITY, Scale.CITY)
    city_comms: dict[str, list[str]] = {c: [] for c in cities}
    for comm in sorted(comm_to_city):
        city_comms[comm_to_city[comm]].append(comm)

    ranks = rng.permutation(len(cities)) + 1
    weights = 1.0 / ranks.astype(float) ** config.city_zipf
    weights /= weights.sum()
    attraction = weights * rng.lognormal(0.0, 0.5, len(cities))
    attraction /= attraction.sum()
    city_weights = pd.Series(weights, index=cities, name="weight")
    city_attraction = pd.Series(attraction, index=cities, name="attraction")

    def pick_communities(n: int) -> np.ndarray:
        city_idx = rng.choice(len(cities), size=n, p=weights)
        return np.array([city_comms[cities[i]][rng.integers(len(city_comms[cities[i]]))] for i in city_idx], dtype=object)

    hpb = max(1, config.households_per_building)
    n_house_b = math.ceil(config.n_households / hpb)
    n_comp_b = math.ceil(config.n_companies / 2) if config.n_companies else 0
    house_kinds = rng.choice([RESIDENTIAL, MIXTURE, UNCERTAIN], size=n_house_b, p=[0.85, 0.10, 0.05])
    comp_kinds = rng.choice([OFFICE, MIXTURE], size=n_comp_b, p=[0.8, 0.2])
    kinds = np.concatenate([house_kinds, comp_kinds]).astype(np.int64)
    n_b = len(kinds)
    b_comm = pick_communities(n_b)
    bx, by = _place_buildings(rng, grid, n_b, b_comm)
    props = np.vstack([rng.dirichlet(50.0 * _PROPERTY_BASE[k]) for k in kinds])
    props = np.round(props, 6)
    props[:, 3] = np.round(1.0 - props[:, :3].sum(axis=1), 6)
    props = np.clip(props, 0.0, 1.0)
    buildings = pd.DataFrame(
        {
            "building_id": np.arange(n_b, dtype=np.int64),
            "x": bx,
            "y": by,
            "p_office": props[:, 0],
            "p_residential": props[:, 1],
            "p_mixture": props[:, 2],
            "p_uncertain": props[:, 3],
            "kind": kinds,
            "community": b_comm,
        }
    )
    house_b = np.arange(n_house_b)
    comp_b = np.arange(n_house_b, n_b)

    n_h = config.n_households
    h_building = rng.permutation(np.arange(n_h) % n_house_b)
    lo, hi = config.members_per_household
    n_members = rng.integers(lo, hi + 1, size=n_h)
    term_start = np.concatenate([[0], np.cumsum(n_members)[:-1]])
    households = pd.DataFrame(
        {
            "household_id": np.arange(n_h, dtype=np.int64),
            "building_id": h_building.astype(np.int64),
            "community": b_comm[h_building],
            "n_members": n_members.astype(np.int64),
            "terminal_start": term_start.astype(np.int64),
        }
    )

    n_c = config.n_companies
    c_building = comp_b[rng.integers(len(comp_b), size=n_c)] if n_c else np.zeros(0, dtype=np.int64)
    companies = pd.DataFrame(
        {
            "company_id": np.arange(n_c, dtype=np.int64),
            "building_id": c_building.astype(np.int64),
            "community": b_comm[c_building] if n_c else np.zeros(0, dtype=object),
        }
    )

    # APs: one home AP per household, then office, mixed, pocket
    rows = []
    ap_id = 0
    for h in range(n_h):
        rows.append((ap_id, "home", h, int(h_building[h]), int(term_start[h]), int(n_members[h])))
        ap_id += 1
    alo, ahi = config.aps_per_company
    elo, ehi = config.employees_per_ap
    next_office_term = OFFICE_TERMINAL_BASE
    for c in range(n_c):
        for _ in range(int(rng.integers(alo, ahi + 1))):
            n_emp = int(rng.integers(elo, ehi + 1))
            rows.append((ap_id, "office", c, int(c_building[c]), next_office_term, n_emp))
            next_office_term += n_emp
            ap_id += 1
    mixture_b = np.flatnonzero(kinds == MIXTURE)
    if len(mixture_b) == 0:
        mixture_b = np.arange(n_b)
    n_mixed = int(round(config.mixed_ap_fraction * n_h))
    for b in mixture_b[rng.integers(len(mixture_b), size=n_mixed)]:
        rows.append((ap_id, "mixed", -1, int(b), MIXED_TERMINAL_BASE, 0))
        ap_id += 1
    n_pocket = int(round(config.pocket_ap_fraction * n_h))
    for h in np.sort(rng.choice(n_h, size=min(n_pocket, n_h), replace=False)):
        rows.append((ap_id, "pocket", int(h), -1, int(term_start[h]), int(n_members[h])))
        ap_id += 1
    aps = pd.DataFrame(rows, columns=["ap_id", "kind", "owner", "building_id", "terminal_start", "n_terminals"])
    fixed = aps["building_id"].to_numpy() >= 0
    off = rng.uniform(-AP_OFFSET_M, AP_OFFSET_M, size=(len(aps), 2))
    bidx = np.where(fixed, aps["building_id"].to_numpy(), 0)
    aps["x"] = np.where(fixed, np.round(bx[bidx] + off[:, 0], 2), np.nan)
    aps["y"] = np.where(fixed, np.round(by[bidx] + off[:, 1], 2), np.nan)
    aps["violator"] = (rng.random(len(aps)) < config.violator_fraction) & aps["kind"].isin(["home", "office"]).to_numpy()
    aps = aps[["ap_id", "kind", "owner", "building_id", "x", "y", "violator", "terminal_start", "n_terminals"]]

    return World(grid, hierarchy, buildings, households, companies, aps, city_weights, city_attraction)


class _State:
    """Mutable per-run copy of the world."""

    def __init__(self, world: World):
        aps = world.aps
        self.kind = aps["kind"].to_numpy(dtype=object).copy()
        self.owner = aps["owner"].to_numpy().copy()
        self.building = aps["building_id"].to_numpy().copy()
        self.x = aps["x"].to_numpy().copy()
        self.y = aps["y"].to_numpy().copy()
        self.violator = aps["violator"].to_numpy().copy()
        self.term_start = aps["terminal_start"].to_numpy().copy()
        self.n_terms = aps["n_terminals"].to_numpy().copy()
        self.active = np.ones(len(aps), dtype=bool)
        self.h_building = world.households["building_id"].to_numpy().copy()
        self.h_term_start = world.households["terminal_start"].to_numpy()
        self.h_members = world.households["n_members"].to_numpy()
        self.c_building = world.companies["building_id"].to_numpy().copy()
        self.h_aps: list[list[int]] = [[] for _ in range(len(self.h_building))]
        self.c_aps: list[list[int]] = [[] for _ in range(len(self.c_building))]
        for ap, (k, o) in enumerate(zip(self.kind, self.owner)):
            if k == "home":
                self.h_aps[o].append(ap)
            elif k == "office":
                self.c_aps[o].append(ap)

    def add_ap(self, kind, owner, building, x, y, violator, term_start, n_terms) -> int:
        ap = len(self.kind)
        self.kind = np.append(self.kind, kind)
        self.owner = np.append(self.owner, owner)
        self.building = np.append(self.building, building)
        self.x = np.append(self.x, x)
        self.y = np.append(self.y, y)
        self.violator = np.append(self.violator, violator)
        self.term_start = np.append(self.term_start, term_start)
        self.n_terms = np.append(self.n_terms, n_terms)
        self.active = np.append(self.active, True)
        return ap


def _uniform_int(rng, lo_s: float, hi_s: float, size) -> np.ndarray:
    return rng.integers(int(lo_s), int(hi_s), size=size, endpoint=False)


class _Simulation:
    def __init__(self, world: World, config: SimConfig):
        self.world = world
        self.cfg = config
        self.grid = world.grid
        self.state = _State(world)
        b = world.buildings
        self.bx = b["x"].to_numpy()
        self.by = b["y"].to_numpy()
        self.b_comm = b["community"].to_numpy(dtype=object)
        n_house_b = math.ceil(config.n_households / max(1, config.households_per_building))
        self.house_b = np.arange(n_house_b)
        self.comp_b = np.arange(n_house_b, len(b))
        hier = world.hierarchy
        self.comm_city = hier.code_map(Scale.COMMUNITY, Scale.CITY)
        self.house_b_by_comm: dict[str, np.ndarray] = {}
        for comm, grp in pd.Series(self.house_b).groupby(self.b_comm[self.house_b]):
            self.house_b_by_comm[comm] = grp.to_numpy()
        self.house_comms_by_city: dict[str, list[str]] = {}
        for comm in sorted(self.house_b_by_comm):
            self.house_comms_by_city.setdefault(self.comm_city[comm], []).append(comm)
        self.house_cities = sorted(self.house_comms_by_city)
        attr = world.city_attraction.reindex(self.house_cities).to_numpy()
        self.house_city_attr = attr / attr.sum()
        self.rng_moves = sub_seed(config.seed, "moves")
        self.rng_scans = sub_seed(config.seed, "scans")
        self.rng_sessions = sub_seed(config.seed, "sessions")
        self.rng_pocket = sub_seed(config.seed, "pocket")
        self.truth: list[tuple] = []
        self.trades: list[tuple] = []

    # -- relocation ------------------------------------------------------
    def _relocate(self, ap: int, building: int, rng) -> None:
        st = self.state
        st.building[ap] = building
        dx, dy = rng.uniform(-AP_OFFSET_M, AP_OFFSET_M, size=2)
        st.x[ap] = round(self.bx[building] + dx, 2)
        st.y[ap] = round(self.by[building] + dy, 2)

    def _household_destination(self, h: int, rng) -> int:
        st = self.state
        here = self.b_comm[st.h_building[h]]
        city = self.comm_city[here]
        if rng.random() < self.cfg.local_move_fraction:
            options = [c for c in self.house_comms_by_city[city] if c != here]
            if options:
                dest = options[rng.integers(len(options))]
                cands = self.house_b_by_comm[dest]
                return int(cands[rng.integers(len(cands))])
        others = [i for i, c in enumerate(self.house_cities) if c != city]
        if not others:
            options = [c for c in self.house_comms_by_city[city] if c != here] or [here]
            dest = options[rng.integers(len(options))]
        else:
            p = self.house_city_attr[others]
            dest_city = self.house_cities[others[rng.choice(len(others), p=p / p.sum())]]
            comms = self.house_comms_by_city[dest_city]
            dest = comms[rng.integers(len(comms))]
        cands = self.house_b_by_comm[dest]
        return int(cands[rng.integers(len(cands))])

    def _moves(self, week: int) -> None:
        st, rng, cfg = self.state, self.rng_moves, self.cfg
        rate = cfg.move_rate_for_week(week)
        movers = np.flatnonzero(rng.random(len(st.h_building)) < rate)
        for h in movers:
            origin = self.b_comm[st.h_building[h]]
            dest_b = self._household_destination(int(h), rng)
            if self.b_comm[dest_b] == origin:
                continue
            st.h_building[h] = dest_b
            for ap in st.h_aps[h]:
                self._relocate(ap, dest_b, rng)
                self.truth.append(("household_move", ap, week, origin, self.b_comm[dest_b]))

        cmovers = np.flatnonzero(rng.random(len(st.c_building)) < cfg.company_move_rate)
        for c in cmovers:
            origin = self.b_comm[st.c_building[c]]
            options = self.comp_b[self.b_comm[self.comp_b] != origin]
            if len(options) == 0:
                continue
            dest_b = int(options[rng.integers(len(options))])
            st.c_building[c] = dest_b
            for ap in st.c_aps[c]:
                self._relocate(ap, dest_b, rng)
                self.truth.append(("company_move", ap, week, origin, self.b_comm[dest_b]))

        # trade_rate is expressed per household relocation
        p_trade = cfg.trade_rate * rate
        if p_trade <= 0:
            return
        home = np.flatnonzero((st.kind == "home") & st.active)
        traded = home[rng.random(len(home)) < p_trade]
        n_h = len(st.h_building)
        for ap in traded:
            seller = int(st.owner[ap])
            origin = self.b_comm[st.building[ap]]
            buyer = None
            for _ in range(100):
                cand = int(rng.integers(n_h))
                if cand != seller and self.b_comm[st.h_building[cand]] != origin:
                    buyer = cand
                    break
            if buyer is None:
                continue
            dest_b = int(st.h_building[buyer])
            self._relocate(ap, dest_b, rng)
            st.owner[ap] = buyer
            st.h_aps[seller].remove(ap)
            st.h_aps[buyer].append(ap)
            ts = week * SECONDS_PER_WEEK + int(rng.integers(SECONDS_PER_WEEK))
            self.trades.append((ap, week, ts, seller, buyer))
            self.truth.append(("trade", ap, week, origin, self.b_comm[dest_b]))
            # the seller buys a new router
            sb = int(st.h_building[seller])
            new = st.add_ap("home", seller, sb, 0.0, 0.0, rng.random() < cfg.violator_fraction,
                            st.h_term_start[seller], st.h_members[seller])
            self._relocate(new, sb, rng)
            st.h_aps[seller].append(new)

    # -- observations ----------------------------------------------------
    def _pocket_stops(self, ap: int, rng) -> np.ndarray:
        st, grid = self.state, self.grid
        hb = st.h_building[st.owner[ap]]
        stops = [(self.bx[hb], self.by[hb])]
        far: list[tuple[float, float]] = []
        while len(far) < 3:
            p = (rng.uniform(0, grid.width), rng.uniform(0, grid.height))
            if all(math.dist(p, q) >= POCKET_SPREAD_M for q in far):
                far.append(p)
        stops.extend(far)
        for _ in range(max(0, self.cfg.pocket_stops_per_week - len(stops))):
            stops.append((rng.uniform(0, grid.width), rng.uniform(0, grid.height)))
        return np.array(stops)

    def _scans(self, week: int) -> pd.DataFrame:
        st, cfg, rng = self.state, self.cfg, self.rng_scans
        fixed = np.flatnonzero(st.active & (st.building >= 0))
        tree = cKDTree(np.column_stack([st.x[fixed], st.y[fixed]]))

        n_b = len(self.bx)
        batch_b = np.repeat(np.arange(n_b), cfg.scan_density)
        r = cfg.scanner_jitter_m * np.sqrt(rng.random(len(batch_b)))
        theta = rng.uniform(0, 2 * np.pi, len(batch_b))
        sx = np.round(self.bx[batch_b] + r * np.cos(theta), 2)
        sy = np.round(self.by[batch_b] + r * np.sin(theta), 2)
        btree = cKDTree(np.column_stack([sx, sy]))
        pairs = btree.sparse_distance_matrix(tree, cfg.radio_range_m, output_type="ndarray")
        bi = pairs["i"].astype(np.int64)
        aj = fixed[pairs["j"]]
        dist = pairs["v"]
        order = np.lexsort((aj, bi))
        bi, aj, dist = bi[order], aj[order], dist[order]
        own = st.building[aj] == batch_b[bi]
        keep = own | (rng.random(len(bi)) < cfg.neighbor_detect_prob)
        bi, aj, dist = bi[keep], aj[keep], dist[keep]

        # pocket APs: one single-AP batch per stop
        pockets = np.flatnonzero(st.active & (st.kind == "pocket"))
        p_x, p_y, p_ap = [], [], []
        for ap in pockets:
            stops = self._pocket_stops(int(ap), self.rng_pocket)
            p_x.append(stops[:, 0])
            p_y.append(stops[:, 1])
            p_ap.append(np.full(len(stops), ap))
            far = stops[np.argmax(np.hypot(stops[:, 0] - stops[0, 0], stops[:, 1] - stops[0, 1]))]
            origin = self.b_comm[st.h_building[st.owner[ap]]]
            self.truth.append(("pocket_noise", int(ap), week, origin, self.grid.community_at(far[0], far[1])))
        if p_ap:
            p_x = np.round(np.clip(np.concatenate(p_x), 0, self.grid.width - 0.01), 2)
            p_y = np.round(np.clip(np.concatenate(p_y), 0, self.grid.height - 0.01), 2)
            p_ap = np.concatenate(p_ap).astype(np.int64)
        else:
            p_x = p_y = np.zeros(0)
            p_ap = np.zeros(0, dtype=np.int64)

        n_batches = len(batch_b) + len(p_ap)
        if n_batches > SECONDS_PER_WEEK:
            raise ValueError("too many scan batches for unique weekly timestamps")
        slot = rng.permutation(n_batches)
        ts = week * SECONDS_PER_WEEK + (slot * SECONDS_PER_WEEK) // n_batches
        scanner = rng.integers(cfg.n_scanners, size=n_batches)

        all_x = np.concatenate([sx[bi], p_x])
        all_y = np.concatenate([sy[bi], p_y])
        all_ap = np.concatenate([aj, p_ap])
        all_d = np.concatenate([dist, np.full(len(p_ap), 5.0)])
        all_batch = np.concatenate([bi, len(batch_b) + np.arange(len(p_ap))])
        rssi = np.maximum(0.0, cfg.rssi_base - cfg.path_loss * np.log10(np.maximum(all_d, 1.0)))
        rssi = rssi + rng.normal(0.0, cfg.rssi_sigma, len(rssi))
        rssi = np.round(np.clip(rssi, cfg.rssi_min, cfg.rssi_max), 2)
        return pd.DataFrame(
            {
                "scanner_id": scanner[all_batch],
                "timestamp": ts[all_batch].astype(np.int64),
                "x": all_x,
                "y": all_y,
                "ap_id": all_ap.astype(np.int64),
                "rssi": rssi,
            }
        )

    def _sessions(self, week: int) -> pd.DataFrame:
        st, cfg, rng = self.state, self.cfg, self.rng_sessions
        ws = week * SECONDS_PER_WEEK
        active = st.active
        home_sched = active & (((st.kind == "home") & ~st.violator) | ((st.kind == "office") & st.violator))
        office_sched = active & (((st.kind == "office") & ~st.violator) | ((st.kind == "home") & st.violator))
        frames = []
        k = cfg.sessions_per_week

        def pairs(mask):
            aps = np.flatnonzero(mask)
            # home APs take their current owner's members; office APs their employees
            starts = np.where(st.kind[aps] == "home", st.h_term_start[np.where(st.kind[aps] == "home", st.owner[aps], 0)], st.term_start[aps])
            counts = np.where(st.kind[aps] == "home", st.h_members[np.where(st.kind[aps] == "home", st.owner[aps], 0)], st.n_terms[aps])
            ap_rep = np.repeat(aps, counts)
            offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
            return ap_rep, np.repeat(starts, counts) + offs

        if k > 0:
            ap_h, t_h = pairs(home_sched)
            days = np.argsort(rng.random((len(ap_h), 7)), axis=1)[:, :k]
            ap_h, t_h, days = np.repeat(ap_h, k), np.repeat(t_h, k), days.ravel()
            n = len(ap_h)
            connect = ws + days * SECONDS_PER_DAY + _uniform_int(rng, 18 * HOUR, 24 * HOUR, n)
            disconnect = ws + (days + 1) * SECONDS_PER_DAY + _uniform_int(rng, 6.5 * HOUR, 9 * HOUR, n)
            car = np.where(rng.random(n) < cfg.car_call_prob, connect + _uniform_int(rng, 0, 900, n), -1)
            frames.append((t_h, ap_h, connect, disconnect, car))

            ap_o, t_o = pairs(office_sched)
            days = np.argsort(rng.random((len(ap_o), 5)), axis=1)[:, : min(k, 5)]
            kk = days.shape[1]
            ap_o, t_o, days = np.repeat(ap_o, kk), np.repeat(t_o, kk), days.ravel()
            n = len(ap_o)
            connect = ws + days * SECONDS_PER_DAY + _uniform_int(rng, 8.5 * HOUR, 10.5 * HOUR, n)
            disconnect = ws + days * SECONDS_PER_DAY + _uniform_int(rng, 17 * HOUR, 20 * HOUR, n)
            frames.append((t_o, ap_o, connect, disconnect, np.full(n, -1)))

        mixed = np.flatnonzero(active & (st.kind == "mixed"))
        if len(mixed):
            ap_m = np.repeat(mixed, 6)
            n = len(ap_m)
            t_m = MIXED_TERMINAL_BASE + rng.integers(0, 100_000, n)
            days = rng.integers(0, 7, n)
            connect = ws + days * SECONDS_PER_DAY + _uniform_int(rng, 7 * HOUR, 22 * HOUR, n)
            disconnect = connect + _uniform_int(rng, 0.25 * HOUR, 2 * HOUR, n)
            frames.append((t_m, ap_m, connect, disconnect, np.full(n, -1)))

        pocket = np.flatnonzero(active & (st.kind == "pocket"))
        if len(pocket):
            ap_p = np.repeat(pocket, 3)
            n = len(ap_p)
            t_p = st.h_term_start[st.owner[ap_p]]
            days = rng.integers(0, 7, n)
            connect = ws + days * SECONDS_PER_DAY + _uniform_int(rng, 8 * HOUR, 18 * HOUR, n)
            disconnect = connect + _uniform_int(rng, 0.5 * HOUR, 3 * HOUR, n)
            frames.append((t_p, ap_p, connect, disconnect, np.full(n, -1)))

        cols = [np.concatenate([f[i] for f in frames]).astype(np.int64) for i in range(5)] if frames else [np.zeros(0, dtype=np.int64)] * 5
        car = pd.array(np.where(cols[4] >= 0, cols[4], 0), dtype="Int64")
        car[cols[4] < 0] = pd.NA
        return pd.DataFrame(
            {"terminal_id": cols[0], "ap_id": cols[1], "connect_ts": cols[2], "disconnect_ts": cols[3], "car_call_ts": car}
        )

    def _placements(self, week: int) -> pd.DataFrame:
        st = self.state
        aps = np.flatnonzero(st.active)
        b = st.building[aps]
        home_b = np.where(b >= 0, b, st.h_building[np.where(st.kind[aps] == "pocket", st.owner[aps], 0)])
        return pd.DataFrame(
            {
                "ap_id": aps.astype(np.int64),
                "week": np.full(len(aps), week, dtype=np.int64),
                "kind": st.kind[aps],
                "building_id": b.astype(np.int64),
                "community": self.b_comm[home_b],
            }
        )

    def run(self) -> SimResult:
        scans, sessions, placements = [], [], []
        for week in range(self.cfg.weeks):
            if week > 0:  # week 0 is the baseline every later week is compared with
                self._moves(week)
            placements.append(self._placements(week))
            scans.append(self._scans(week))
            sessions.append(self._sessions(week))
        scan_df = pd.concat(scans, ignore_index=True).sort_values(["timestamp", "ap_id"], kind="stable", ignore_index=True)
        sess_df = pd.concat(sessions, ignore_index=True).sort_values(["connect_ts", "ap_id", "terminal_id"], kind="stable", ignore_index=True)
        trades = pd.DataFrame(self.trades, columns=["ap_id", "week", "timestamp", "seller", "buyer"]).astype(
            {"ap_id": np.int64, "week": np.int64, "timestamp": np.int64, "seller": np.int64, "buyer": np.int64}
        )
        truth = pd.DataFrame(self.truth, columns=["kind", "ap_id", "week", "origin", "destination"]).astype(
            {"ap_id": np.int64, "week": np.int64}
        )
        truth = truth.sort_values(["week", "kind", "ap_id"], kind="stable", ignore_index=True)
        place_df = pd.concat(placements, ignore_index=True)
        return SimResult(scan_df, sess_df, trades, truth, place_df)


def simulate(world: World, config: SimConfig) -> SimResult:
    """Run ``config.weeks`` weeks of relocations, scans and sessions over ``world``."""
    if config.weeks < 2:
        raise ValueError("simulation needs at least two weeks")
    return _Simulation(world, config).run()


def final_aps(world: World, result: SimResult) -> pd.DataFrame:
    """AP table including routers bought mid-run, with their kinds."""
    last = result.placements.drop_duplicates("ap_id", keep="last")[["ap_id", "kind"]]
    return last.sort_values("ap_id", ignore_index=True)
