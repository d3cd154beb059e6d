import pytest
from hypothesis import given
from hypothesis import strategies as st

from migraflow.geo import (
    SECONDS_PER_WEEK, GridCell, HierarchyError, PlaceHierarchy, PlaceId, Scale, WorldGrid, cell_of, month_of,
    week_of, weeks_of_month,
)

ROWS = [
    {"scale": "province", "code": "BJ", "parent_code": "", "name": "Beijing"},
    {"scale": "city", "code": "BJC", "parent_code": "BJ", "name": "Beijing"},
    {"scale": "district", "code": "HD", "parent_code": "BJC", "name": "Haidian"},
    {"scale": "district", "code": "CY", "parent_code": "BJC", "name": "Chaoyang"},
    {"scale": "community", "code": "SDDL", "parent_code": "HD", "name": "Shangdi Dongli"},
    {"scale": "community", "code": "SDXL", "parent_code": "HD", "name": "Shangdi Xili"},
    {"scale": "community", "code": "WJ", "parent_code": "CY", "name": "Wangjing"},
]


@pytest.fixture
def hier():
    return PlaceHierarchy.from_rows(ROWS)


GRID = WorldGrid()
GRID_HIER = GRID.hierarchy()


def test_community_resolves_to_its_district(hier):
    place = hier.get(Scale.COMMUNITY, "SDDL")
    district = hier.resolve_scale(place, "district")
    assert district == PlaceId(Scale.DISTRICT, "HD")
    assert hier.name(district) == "Haidian"


def test_province_resolves_to_itself(hier):
    bj = hier.get("province", "BJ")
    assert hier.resolve_scale(bj, Scale.PROVINCE) == bj
    assert hier.resolve_scale(hier.resolve_scale(bj, Scale.PROVINCE), Scale.PROVINCE) == bj


def test_resolve_errors(hier):
    with pytest.raises(KeyError):
        hier.resolve_scale(PlaceId(Scale.COMMUNITY, "nowhere"), Scale.CITY)
    with pytest.raises(ValueError):
        hier.resolve_scale(hier.get("city", "BJC"), Scale.DISTRICT)


def test_hierarchy_validation():
    with pytest.raises(HierarchyError):  # skips a scale
        PlaceHierarchy({PlaceId(Scale.COMMUNITY, "a"): PlaceId(Scale.CITY, "c"), PlaceId(Scale.CITY, "c"): None})
    with pytest.raises(HierarchyError):  # province with a parent
        PlaceHierarchy({PlaceId(Scale.PROVINCE, "p"): PlaceId(Scale.PROVINCE, "q"), PlaceId(Scale.PROVINCE, "q"): None})
    with pytest.raises(HierarchyError):
        PlaceHierarchy.from_rows(ROWS + [ROWS[0]])  # duplicate code
    with pytest.raises(HierarchyError):
        PlaceHierarchy.from_rows(ROWS + [{"scale": "community", "code": "X", "parent_code": "??", "name": ""}])


def test_hierarchy_file_round_trip(tmp_path, hier):
    path = tmp_path / "h.csv"
    hier.save(path)
    again = PlaceHierarchy.load(path)
    assert again.places() == hier.places()
    assert again.name(again.get("community", "WJ")) == "Wangjing"
    (tmp_path / "bad.csv").write_text("code,scale\nx,city\n", encoding="utf-8")
    with pytest.raises(HierarchyError):
        PlaceHierarchy.load(tmp_path / "bad.csv")


def test_find_is_scale_aware(hier):
    assert hier.find("HD") == PlaceId(Scale.DISTRICT, "HD")
    with pytest.raises(KeyError):
        hier.find("missing")


@pytest.mark.parametrize("ts, week", [(0, 0), (604800, 1), (604799, 0)])
def test_week_of(ts, week):
    assert week_of(ts) == week


def test_week_of_rejects_negative():
    with pytest.raises(ValueError):
        week_of(-1)


@given(st.integers(0, 10**10), st.integers(0, 10**10))
def test_week_of_monotone(a, b):
    lo, hi = sorted((a, b))
    assert week_of(lo) <= week_of(hi)


@given(st.integers(0, 10_000))
def test_each_week_in_exactly_one_month(week):
    months = [m for m in range(week // 4 - 1, week // 4 + 2) if m >= 0 and week in weeks_of_month(m)]
    assert months == [month_of(week)]


def test_cell_of_examples():
    bounds = (1000.0, 1000.0)
    assert cell_of((0.0, 0.0), 250, bounds) == GridCell(0, 0, 250)
    assert cell_of((250.0, 0.0), 250, bounds) == GridCell(0, 1, 250)
    with pytest.raises(ValueError):
        cell_of((1000.0, 10.0), 250, bounds)
    with pytest.raises(ValueError):
        cell_of((-0.1, 10.0), 250, bounds)


@given(st.integers(0, 3), st.integers(0, 3), st.floats(-124.9, 124.9), st.floats(-124.9, 124.9),
       st.floats(-124.9, 124.9), st.floats(-124.9, 124.9))
def test_points_near_a_centre_share_a_cell(r, c, dx1, dy1, dx2, dy2):
    # both points lie within half a cell of the centre, so they are < cell_size/2 * sqrt(2) apart
    cx, cy = (c + 0.5) * 250, (r + 0.5) * 250
    a = cell_of((cx + dx1, cy + dy1), 250, (1000.0, 1000.0))
    b = cell_of((cx + dx2, cy + dy2), 250, (1000.0, 1000.0))
    assert a == b == GridCell(r, c, 250)


def test_grid_cell_validation():
    with pytest.raises(ValueError):
        GridCell(-1, 0, 250)
    with pytest.raises(ValueError):
        GridCell(0, 0, 0)


def test_world_grid_layout():
    assert GRID.width == GRID.height == 36_000
    assert len(GRID_HIER.places(Scale.PROVINCE)) == 9
    assert len(GRID_HIER.places(Scale.CITY)) == 36
    assert len(GRID_HIER.places(Scale.COMMUNITY)) == 576
    assert GRID.community_at(10.0, 10.0) == "P00-C0-D0-M0"
    code = GRID.community_at(20_000.0, 5_000.0)
    x0, y0, x1, y1 = GRID.community_bounds(code)
    assert x0 <= 20_000 < x1 and y0 <= 5_000 < y1


@given(st.floats(0, 35_999.9), st.floats(0, 35_999.9), st.sampled_from(list(Scale)))
def test_resolve_scale_idempotent_and_closed(x, y, scale):
    place = PlaceId(Scale.COMMUNITY, GRID.community_at(x, y))
    once = GRID_HIER.resolve_scale(place, scale)
    assert once in GRID_HIER
    assert GRID_HIER.resolve_scale(once, scale) == once


def test_community_of_cells_matches_point_lookup():
    rows, cols = [0, 5, 6, 143], [0, 5, 6, 143]
    got = GRID.community_of_cells(rows, cols)
    for r, c, code in zip(rows, cols, got):
        assert code == GRID.community_at((c + 0.5) * 250, (r + 0.5) * 250)


def test_week_constant():
    assert SECONDS_PER_WEEK == 7 * 24 * 3600
