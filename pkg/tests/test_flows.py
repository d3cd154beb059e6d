import math

import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import diff_snapshots, last_location

from migraflow.config import SimConfig
from migraflow.evaluate import true_locations
from migraflow.flows import (
    FlowMatrix, MigrationEvent, density_grid, derive_migrations, flow_columns, flow_matrix, group_flows,
    migrations_between, monthly_snapshot, net_immigration, parse_groups, regularize, time_series, top_table,
)
from migraflow.geo import PlaceId, Scale, WorldGrid
from migraflow.simulator import generate_world, simulate

GRID = WorldGrid()
HIER = GRID.hierarchy()
COMMUNITIES = [p.code for p in HIER.places(Scale.COMMUNITY)]
TO_CITY = HIER.code_map(Scale.COMMUNITY, Scale.CITY)


def locs(rows):
    return pd.DataFrame(rows, columns=["family_id", "week", "place"])


def ev(o, d, fam="f", t=0, u=1):
    return MigrationEvent(fam, t, u, o, d)


def community_in(city, k=0):
    return [c for c in COMMUNITIES if TO_CITY[c] == city][k]


# -- snapshots and joins --------------------------------------------------------------
def test_latest_record_wins():
    table = locs([("1", 0, "A"), ("1", 1, "A"), ("1", 2, "A"), ("1", 3, "B"), ("2", 4, "C")])
    assert monthly_snapshot(table, 0).to_dict() == {"1": "B"}
    assert monthly_snapshot(locs([("1", 0, "A")]), 0).to_dict() == {"1": "A"}
    with pytest.raises(ValueError):
        monthly_snapshot(table, 3)


def test_left_join_cases():
    a = pd.Series({"1": "A", "2": "A", "3": "A"})
    b = pd.Series({"1": "A", "2": "B", "4": "C"})
    assert derive_migrations(a, b, 0, 1) == [MigrationEvent("2", 0, 1, "A", "B")]
    with pytest.raises(ValueError):
        derive_migrations(a, b, 1, 1)


location_tables = st.lists(
    st.tuples(st.integers(0, 19).map(str), st.integers(0, 11), st.sampled_from("ABCDE")),
    min_size=1, max_size=120, unique_by=lambda r: (r[0], r[1]),
).map(locs)


@given(location_tables, st.integers(0, 2), st.integers(1, 2))
def test_joins_match_brute_force(table, t, k):
    u = t + k
    months = set(table["week"] // 4)
    if t not in months or u not in months:
        return
    assert monthly_snapshot(table, t).to_dict() == last_location(table, t)
    got = {(e.family_id, e.origin, e.destination) for e in migrations_between(table, t, u)}
    assert got == diff_snapshots(last_location(table, t), last_location(table, u))


@given(location_tables)
def test_pairwise_composition_equals_direct_diffs(table):
    if set(table["week"] // 4) != {0, 1, 2}:
        return
    snaps = [last_location(table, m) for m in range(3)]
    for t in (0, 1):
        got = {(e.family_id, e.origin, e.destination) for e in migrations_between(table, t, t + 1)}
        assert got == diff_snapshots(snaps[t], snaps[t + 1])


# -- flow matrices -----------------------------------------------------------------
def test_intra_city_move_is_tallied_apart():
    city = "P04-C0"
    f = flow_matrix([ev(community_in(city, 0), community_in(city, 5))], "city", HIER)
    assert f.counts == {} and f.intra == {city: 1}


def test_inter_province_move():
    o, d = community_in("P00-C0"), community_in("P08-C3")
    f = flow_matrix([ev(o, d)], "province", HIER)
    assert f.counts == {("P00", "P08"): 1} and not f.intra
    assert FlowMatrix.from_frame(f.to_frame()) == f


events_st = st.lists(st.tuples(st.sampled_from(COMMUNITIES), st.sampled_from(COMMUNITIES))
                     .filter(lambda od: od[0] != od[1]), max_size=60).map(
    lambda ods: [ev(o, d, fam=str(i)) for i, (o, d) in enumerate(ods)])


def test_row_and_column_sums():
    rng = np.random.default_rng(4)
    pairs = rng.choice(len(COMMUNITIES), size=(1000, 2))
    events = [ev(COMMUNITIES[a], COMMUNITIES[b], str(i)) for i, (a, b) in enumerate(pairs) if a != b]
    for scale in Scale:
        up = HIER.code_map(Scale.COMMUNITY, scale)
        f = flow_matrix(events, scale, HIER)
        imm, emi, intra = {}, {}, {}
        for e in events:
            o, d = up[e.origin], up[e.destination]
            if o == d:
                intra[o] = intra.get(o, 0) + 1
            else:
                imm[d] = imm.get(d, 0) + 1
                emi[o] = emi.get(o, 0) + 1
        assert dict(f.immigration()) == imm and dict(f.emigration()) == emi and dict(f.intra) == intra
        assert f.total + sum(f.intra.values()) == len(events)


@given(events_st)
def test_conservation_and_rollup(events):
    flows = {s: flow_matrix(events, s, HIER, (0, 1)) for s in Scale}
    for f in flows.values():
        if f.counts:
            assert sum(net_immigration(f).raw.values()) == 0
    for fine, coarse in ((Scale.COMMUNITY, Scale.DISTRICT), (Scale.DISTRICT, Scale.CITY), (Scale.CITY, Scale.PROVINCE)):
        up = HIER.code_map(fine, coarse)
        rolled, intra = {}, {}
        for p, n in flows[fine].intra.items():
            intra[up[p]] = intra.get(up[p], 0) + n
        for (o, d), n in flows[fine].counts.items():
            if up[o] == up[d]:
                intra[up[o]] = intra.get(up[o], 0) + n
            else:
                rolled[(up[o], up[d])] = rolled.get((up[o], up[d]), 0) + n
        assert dict(flows[coarse].counts) == rolled
        assert dict(flows[coarse].intra) == intra


@given(events_st, st.integers(0, 60))
def test_merging_partitions_is_independent_of_the_cut(events, cut):
    whole = flow_matrix(events, "city", HIER, (0, 1))
    parts = flow_matrix(events[:cut], "city", HIER, (0, 1)) + flow_matrix(events[cut:], "city", HIER, (0, 1))
    assert parts == whole


def test_merge_rejects_mismatched_periods():
    with pytest.raises(ValueError):
        FlowMatrix(Scale.CITY, 0, 1) + FlowMatrix(Scale.CITY, 1, 2)


# -- net immigration ----------------------------------------------------------------
def flow_from(counts, scale=Scale.PROVINCE):
    from collections import Counter
    return FlowMatrix(scale, 0, 1, Counter(counts))


def test_net_in_minus_out():
    f = flow_from({("X", "P"): 5, ("P", "Y"): 3})
    assert net_immigration(f).raw["P"] == 2


def test_net_of_symmetric_matrix_is_zero():
    f = flow_from({("A", "B"): 4, ("B", "A"): 4, ("A", "C"): 1, ("C", "A"): 1})
    table = net_immigration(f)
    assert set(table.raw.values()) == {0} and table.skipped


def test_regularization_reference_values():
    raw = dict(zip("ABCDEFGHIJ", (100, 69, 58, 22, 20, 19, -29, -32, -37, -51)))
    expected = (1.00, 0.69, 0.58, 0.22, 0.20, 0.19, -0.29, -0.32, -0.37, -0.51)
    for scale in (1, 3, 17):
        reg, skipped = regularize({k: v * scale for k, v in raw.items()})
        assert not skipped
        assert all(abs(reg[k] - p) <= 0.005 for k, p in zip("ABCDEFGHIJ", expected))


@given(st.dictionaries(st.text("abcdef", min_size=1, max_size=3), st.integers(-50, 50), min_size=1))
def test_regularization_keeps_ranking(raw):
    reg, skipped = regularize(raw)
    if skipped:
        assert max(raw.values()) <= 0
        return
    assert max(reg.values()) == 1.0
    for a in raw:
        for b in raw:
            assert (raw[a] < raw[b]) == (reg[a] < reg[b])


def test_empty_flow_needs_places():
    with pytest.raises(ValueError):
        net_immigration(FlowMatrix(Scale.CITY, 0, 1))
    table = net_immigration(FlowMatrix(Scale.CITY, 0, 1), ["P00-C0"])
    assert table.raw == {"P00-C0": 0} and table.skipped


def test_columns_have_their_own_divisor():
    cols = flow_columns(flow_from({("A", "B"): 4, ("A", "C"): 2, ("C", "B"): 1}))
    cols = cols.set_index("place")
    assert cols["immigration_regularized"].max() == 1.0 == cols["emigration_regularized"].max()
    assert cols.loc["C", "emigration_regularized"] == pytest.approx(1 / 6)


# -- groups -----------------------------------------------------------------------
GROUPS_TEXT = """
# two clusters
west: P00-C0, P00-C1
east: P04-C0,P04-C1,P04-C2
"""


def test_group_counts_by_hand():
    groups = parse_groups(GROUPS_TEXT, HIER)
    c = community_in
    events = [
        ev(c("P00-C0"), c("P00-C1")),  # intra west
        ev(c("P00-C1"), c("P00-C0")),  # intra west
        ev(c("P00-C0", 0), c("P00-C0", 3)),  # same city, ignored
        ev(c("P00-C0"), c("P04-C2")),  # west -> east
        ev(c("P00-C1"), c("P04-C0")),  # west -> east
        ev(c("P04-C1"), c("P00-C0")),  # east -> west
        ev(c("P04-C0"), c("P04-C2")),  # intra east
        ev(c("P04-C0"), c("P08-C0")),  # outside, ignored
        ev(c("P08-C1"), c("P00-C0")),  # outside, ignored
        ev(c("P00-C1"), c("P04-C1")),  # west -> east
    ]
    got = group_flows(events, groups, HIER)
    table = {(r.direction, r.origin_group, r.destination_group): r.count for r in got.itertuples()}
    assert table == {("inter", "west", "east"): 3, ("intra", "west", "west"): 2,
                     ("inter", "east", "west"): 1, ("intra", "east", "east"): 1}
    assert got["regularized"].tolist() == [1.0, 2 / 3, 1 / 3, 1 / 3]
    city_flow = flow_matrix(events, "city", HIER)
    pd.testing.assert_frame_equal(group_flows(city_flow, groups, HIER), got)


def test_group_spec_errors():
    with pytest.raises(ValueError, match="both"):
        parse_groups("a:P00-C0\nb:P00-C0,P00-C1")
    with pytest.raises(ValueError, match="unknown city"):
        parse_groups("a:P99-C0", HIER)
    with pytest.raises(ValueError):
        parse_groups("just words")


# -- series, top tables and density --------------------------------------------------
def test_series_examples():
    flows = {1: flow_from({("X", "P"): 10, ("P", "X"): 10}), 2: flow_from({("X", "P"): 15, ("P", "Y"): 5}),
             3: flow_from({("X", "Y"): 2})}
    s = time_series(flows, "P").set_index("month")
    assert tuple(s.loc[1, ["net_immigration", "total_migration", "ratio"]]) == (0, 20, 0.0)
    assert tuple(s.loc[2, ["net_immigration", "total_migration", "ratio"]]) == (10, 20, 0.5)
    assert s.loc[3, "ratio"] == 0.0 and s.loc[3, "zero_total"] == 1
    with pytest.raises(ValueError):
        time_series({1: flows[1]}, "P")


def net_of(raw):
    reg, skipped = regularize(raw)
    from migraflow.flows import NetImmigrationTable
    return NetImmigrationTable(Scale.PROVINCE, 0, 1, raw, reg, skipped)


def test_top_table_layout():
    raw = dict(zip("ABCDEFGHIJ", (100, 69, 58, 22, 20, 19, -29, -32, -37, -51)))
    t = top_table(net_of(dict(reversed(list(raw.items())))))
    assert t["place"].tolist() == list("ABCDEFGHIJ")
    assert t["regularized"].is_monotonic_decreasing and t["rank"].tolist() == list(range(1, 11))


def test_top_table_small_inputs():
    t = top_table(net_of({"B": 3, "A": 3, "C": -1}))
    assert t["place"].tolist() == ["A", "B", "C"]
    assert top_table(net_of({"A": 2}))["place"].tolist() == ["A"]
    t = top_table(net_of({p: i for i, p in enumerate("ABCDEFGHIJKL")}), 6, 4)
    assert len(t) == 10 and t["rank"].tolist() == [1, 2, 3, 4, 5, 6, 9, 10, 11, 12]


def test_density_grid_places_at_centres():
    o, d = COMMUNITIES[0], COMMUNITIES[-1]
    grid = density_grid([ev(o, d), ev(o, d, fam="g")], GRID)
    cells = {(r, c): n for r, c, n in grid.itertuples(index=False)}
    co = GRID.cell_of(GRID.community_center(o))
    cd = GRID.cell_of(GRID.community_center(d))
    assert cells == {(co.row, co.col): -2, (cd.row, cd.col): 2}
    f = flow_matrix([ev(o, d), ev(o, d, fam="g")], "community", HIER)
    pd.testing.assert_frame_equal(density_grid(f, GRID), grid)
    with pytest.raises(ValueError):
        density_grid(flow_matrix([ev(o, d)], "city", HIER), GRID)


# -- simulated series --------------------------------------------------------------
def test_doubled_move_rate_shows_in_the_series():
    cfg = SimConfig(seed=8, n_households=10_000, n_companies=0, weeks=16, household_move_rate=0.03,
                    move_rate_multipliers=(1, 1, 2, 1), pocket_ap_fraction=0.0)
    world = generate_world(cfg)
    sim = simulate(world, cfg)
    table = true_locations(sim.placements, sim.trades)
    flows = {u: flow_matrix(migrations_between(table, u - 1, u), "province", HIER, (u - 1, u)) for u in (1, 2, 3)}
    totals = pd.concat([time_series(flows, p.code) for p in HIER.places(Scale.PROVINCE)]).groupby("month")[
        "total_migration"].sum()
    ratio = totals[2] / ((totals[1] + totals[3]) / 2)
    assert 1.5 <= ratio <= 2.6, ratio
    assert math.isclose(totals.sum(), 2 * sum(f.total for f in flows.values()))
