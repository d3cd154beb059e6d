import numpy as np
import pandas as pd
import pytest

from migraflow.config import SimConfig
from migraflow.geo import SECONDS_PER_WEEK
from migraflow.io import columns
from migraflow.simulator import final_aps, generate_world, simulate

TINY = SimConfig(seed=5, n_households=400, n_companies=40, weeks=4, household_move_rate=0.05)


@pytest.fixture(scope="module")
def tiny():
    world = generate_world(TINY)
    return world, simulate(world, TINY)


def test_same_seed_same_output(tiny):
    world, sim = tiny
    again = simulate(generate_world(TINY), TINY)
    pd.testing.assert_frame_equal(sim.scans, again.scans)
    pd.testing.assert_frame_equal(sim.sessions, again.sessions)
    pd.testing.assert_frame_equal(sim.truth, again.truth)


def test_different_seed_differs(tiny):
    other = SimConfig(**{**TINY.__dict__, "seed": 6})
    assert not simulate(generate_world(other), other).scans.equals(tiny[1].scans)


def test_record_schemas(tiny):
    world, sim = tiny
    assert list(sim.scans.columns) == columns("scans")
    assert list(sim.sessions.columns) == columns("sessions")
    assert list(sim.trades.columns) == columns("trades")
    assert list(sim.truth.columns) == columns("truth")
    assert list(world.buildings.columns) == columns("buildings")
    assert list(sim.placements.columns) == columns("placements")


def test_scans_are_well_formed(tiny):
    world, sim = tiny
    s = sim.scans
    assert s["rssi"].between(0, 100).all()
    assert (s["timestamp"] >= 0).all() and (s["timestamp"] < TINY.weeks * SECONDS_PER_WEEK).all()
    assert s["x"].between(0, world.grid.width).all() and s["y"].between(0, world.grid.height).all()
    # one sighting per AP per batch
    assert not s.duplicated(["scanner_id", "timestamp", "ap_id"]).any()


def test_sessions_are_well_formed(tiny):
    s = tiny[1].sessions
    assert (s["connect_ts"] < s["disconnect_ts"]).all()
    car = s.dropna(subset=["car_call_ts"])
    assert (car["car_call_ts"] >= car["connect_ts"]).all() and (car["car_call_ts"] <= car["disconnect_ts"]).all()


def test_property_distributions_sum_to_one(tiny):
    b = tiny[0].buildings
    total = b[["p_office", "p_residential", "p_mixture", "p_uncertain"]].sum(axis=1)
    assert np.allclose(total, 1.0, atol=1e-5)
    assert (b[["p_office", "p_residential", "p_mixture", "p_uncertain"]] >= 0).all().all()


def test_every_non_pocket_ap_scanned_every_week(tiny):
    world, sim = tiny
    aps = final_aps(world, sim)
    fixed = set(aps.loc[aps["kind"] != "pocket", "ap_id"])
    weeks = sim.scans["timestamp"] // SECONDS_PER_WEEK
    counts = sim.scans.assign(week=weeks).groupby(["ap_id", "week"]).size()
    for w in range(TINY.weeks):
        seen = counts.xs(w, level="week")
        assert fixed <= set(seen.index[seen >= 3])


def test_household_moves_change_community_and_placements(tiny):
    world, sim = tiny
    moves = sim.truth[sim.truth["kind"] == "household_move"]
    assert len(moves) > 0
    assert (moves["origin"] != moves["destination"]).all()
    assert (moves["week"] >= 1).all()  # week 0 is the baseline
    place = sim.placements.set_index(["ap_id", "week"])["community"]
    for ap, week, origin, dest in moves[["ap_id", "week", "origin", "destination"]].itertuples(index=False):
        assert place[(ap, week - 1)] == origin
        assert place[(ap, week)] == dest


def test_company_moves_relocate_all_company_aps(tiny):
    world, sim = tiny
    cm = sim.truth[sim.truth["kind"] == "company_move"]
    owner = world.aps.set_index("ap_id")["owner"]
    for (week, origin, dest), grp in cm.groupby(["week", "origin", "destination"]):
        companies = set(owner[grp["ap_id"]])
        for c in companies:
            company_aps = set(world.aps.loc[(world.aps["kind"] == "office") & (world.aps["owner"] == c), "ap_id"])
            assert company_aps <= set(grp["ap_id"])


def test_pocket_aps_roam_far_every_week(tiny):
    world, sim = tiny
    pockets = world.aps.loc[world.aps["kind"] == "pocket", "ap_id"]
    assert len(pockets) == round(TINY.pocket_ap_fraction * TINY.n_households)
    s = sim.scans[sim.scans["ap_id"].isin(pockets)]
    for (ap, week), grp in s.groupby([s["ap_id"], s["timestamp"] // SECONDS_PER_WEEK]):
        pts = grp[["x", "y"]].to_numpy()
        d = np.hypot(pts[:, None, 0] - pts[None, :, 0], pts[:, None, 1] - pts[None, :, 1])
        assert d.max() >= 6000
    noise = sim.truth[sim.truth["kind"] == "pocket_noise"]
    assert len(noise) == len(pockets) * TINY.weeks


def test_trades_move_ap_to_a_new_household():
    cfg = SimConfig(seed=3, n_households=300, n_companies=0, weeks=6, trade_rate=1.0, household_move_rate=0.2)
    world = generate_world(cfg)
    sim = simulate(world, cfg)
    assert len(sim.trades) > 0
    assert (sim.trades["seller"] != sim.trades["buyer"]).all()
    truth = sim.truth[sim.truth["kind"] == "trade"]
    assert (truth["origin"] != truth["destination"]).all()
    # every seller gets a replacement router
    assert len(final_aps(world, sim)) == len(world.aps) + len(sim.trades)


def test_violator_fraction_roughly_honoured():
    cfg = SimConfig(seed=1, n_households=5000, n_companies=0, weeks=2)
    aps = generate_world(cfg).aps
    home = aps[aps["kind"] == "home"]
    assert 0.01 < home["violator"].mean() < 0.03


def test_needs_two_weeks():
    cfg = SimConfig(n_households=10, n_companies=0, weeks=1)
    with pytest.raises(ValueError):
        simulate(generate_world(cfg), cfg)
