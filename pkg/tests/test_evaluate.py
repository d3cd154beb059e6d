import pandas as pd
import pytest

from migraflow.evaluate import edge_errors, event_score, location_accuracy, true_locations
from migraflow.flows import MigrationEvent
from migraflow.geo import Scale, WorldGrid

HIER = WorldGrid().hierarchy()
COMM = [p.code for p in HIER.places(Scale.COMMUNITY)]
TO_CITY = HIER.code_map(Scale.COMMUNITY, Scale.CITY)


def in_city(city, k=0):
    return [c for c in COMM if TO_CITY[c] == city][k]


def ev(fam, o, d):
    return MigrationEvent(fam, 0, 1, o, d)


def test_true_locations_cut_at_first_trade():
    placements = pd.DataFrame({
        "ap_id": [1, 1, 1, 2, 3], "week": [0, 1, 2, 0, 0], "kind": ["home", "home", "home", "home", "office"],
        "building_id": [0] * 5, "community": ["A", "A", "B", "C", "D"],
    })
    trades = pd.DataFrame({"ap_id": [1], "week": [2]})
    out = true_locations(placements, trades)
    assert out.values.tolist() == [["1", 0, "A"], ["1", 1, "A"], ["2", 0, "C"]]


def test_location_accuracy_counts_missing_as_wrong():
    truth = pd.DataFrame({"family_id": ["1", "1", "2"], "week": [0, 1, 0], "place": ["A", "B", "C"]})
    det = pd.DataFrame({"family_id": ["1", "1"], "week": [0, 1], "place": ["A", "A"]})
    assert location_accuracy(truth, det) == pytest.approx(1 / 3)


def test_event_score_at_city_scale():
    a, b, c = in_city("P00-C0"), in_city("P01-C0"), in_city("P00-C0", 1)
    truth = [ev("1", a, b), ev("2", b, a), ev("3", a, c)]
    detected = [ev("1", a, b), ev("4", a, b), ev("3", a, c)]
    s = event_score(truth, detected, "city", HIER)
    # the within-city move of family 3 does not count at city scale
    assert (s.n_true, s.n_detected) == (2, 2)
    assert s.precision == s.recall == s.f1 == 0.5


def test_edge_errors_threshold():
    a, b = in_city("P00-C0"), in_city("P01-C0")
    truth = [ev(str(i), a, b) for i in range(60)] + [ev("x", b, a)]
    detected = [ev(str(i), a, b) for i in range(57)]
    errs = edge_errors(truth, detected, "city", HIER, min_true=50)
    assert errs.values.tolist() == [["P00-C0", "P01-C0", 60, 57, pytest.approx(0.05)]]
