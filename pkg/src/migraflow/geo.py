"""Spatial hierarchy, grid cells and the weekly/monthly calendar."""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

SECONDS_PER_DAY = 86_400
SECONDS_PER_WEEK = 7 * SECONDS_PER_DAY
WEEKS_PER_MONTH = 4


class Scale(enum.IntEnum):
    COMMUNITY = 0
    DISTRICT = 1
    CITY = 2
    PROVINCE = 3

    @classmethod
    def parse(cls, text: str | int) -> Scale:
        if isinstance(text, int):
            return cls(text)
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown scale {text!r}") from None

    @property
    def label(self) -> str:
        return self.name.lower()


@dataclass(frozen=True, order=True)
class PlaceId:
    scale: Scale
    code: str


@dataclass(frozen=True, order=True)
class GridCell:
    row: int
    col: int
    cell_size_m: float = field(default=250.0, compare=False)

    def __post_init__(self):
        if self.row < 0 or self.col < 0:
            raise ValueError("grid indices must be non-negative")
        if self.cell_size_m <= 0:
            raise ValueError("cell_size_m must be positive")


class HierarchyError(ValueError):
    pass


class PlaceHierarchy:
    """Forest of places rooted at provinces.

    Codes are unique within a scale; every non-province place has exactly one
    parent one scale up.
    """

    def __init__(self, parents: Mapping[PlaceId, PlaceId | None], names: Mapping[PlaceId, str] | None = None):
        self._parents: dict[PlaceId, PlaceId | None] = dict(parents)
        self._names = dict(names or {})
        self._by_code: dict[tuple[Scale, str], PlaceId] = {}
        for place, parent in self._parents.items():
            self._by_code[(place.scale, place.code)] = place
            if place.scale == Scale.PROVINCE:
                if parent is not None:
                    raise HierarchyError(f"province {place.code} cannot have a parent")
                continue
            if parent is None:
                raise HierarchyError(f"{place.scale.label} {place.code} has no parent")
            if parent.scale != place.scale + 1:
                raise HierarchyError(f"{place.code}: parent must be exactly one scale up")
        for place, parent in self._parents.items():
            if parent is not None and parent not in self._parents:
                raise HierarchyError(f"{place.code}: unknown parent {parent.code}")
        self._cache: dict[tuple[PlaceId, Scale], PlaceId] = {}

    def __contains__(self, place: object) -> bool:
        return place in self._parents

    def __len__(self) -> int:
        return len(self._parents)

    def places(self, scale: Scale | None = None) -> list[PlaceId]:
        return sorted(p for p in self._parents if scale is None or p.scale == scale)

    def parent(self, place: PlaceId) -> PlaceId | None:
        return self._parents[place]

    def name(self, place: PlaceId) -> str:
        return self._names.get(place, place.code)

    def get(self, scale: Scale | str, code: str) -> PlaceId:
        key = (Scale.parse(scale), code)
        if key not in self._by_code:
            raise KeyError(f"unknown {key[0].label} {code!r}")
        return self._by_code[key]

    def find(self, code: str) -> PlaceId:
        """Look a code up at any scale; ambiguous codes are an error."""
        hits = [p for (s, c), p in self._by_code.items() if c == code]
        if not hits:
            raise KeyError(f"unknown place code {code!r}")
        if len(hits) > 1:
            raise KeyError(f"place code {code!r} is ambiguous across scales")
        return hits[0]

    def resolve_scale(self, place: PlaceId, target: Scale | str) -> PlaceId:
        target = Scale.parse(target)
        if place not in self._parents:
            raise KeyError(f"unknown place {place.code!r}")
        if target < place.scale:
            raise ValueError(f"cannot resolve {place.scale.label} {place.code} to finer scale {target.label}")
        key = (place, target)
        hit = self._cache.get(key)
        if hit is None:
            hit = place
            while hit.scale < target:
                hit = self._parents[hit]
            self._cache[key] = hit
        return hit

    def code_map(self, source: Scale, target: Scale) -> dict[str, str]:
        """Code-level lookup table from every place at ``source`` to its ancestor at ``target``."""
        return {p.code: self.resolve_scale(p, target).code for p in self.places(source)}

    # -- text format ----------------------------------------------------
    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scale", "code", "parent_code", "name"])
        for place in sorted(self._parents, key=lambda p: (-p.scale, p.code)):
            parent = self._parents[place]
            writer.writerow([place.scale.label, place.code, parent.code if parent else "", self.name(place)])
        return buf.getvalue()

    @classmethod
    def from_rows(cls, rows: Iterable[Mapping[str, str]]) -> PlaceHierarchy:
        rows = list(rows)
        ids: dict[tuple[Scale, str], PlaceId] = {}
        for row in rows:
            place = PlaceId(Scale.parse(row["scale"]), row["code"])
            if (place.scale, place.code) in ids:
                raise HierarchyError(f"duplicate {place.scale.label} code {place.code!r}")
            ids[(place.scale, place.code)] = place
        parents: dict[PlaceId, PlaceId | None] = {}
        names: dict[PlaceId, str] = {}
        for row in rows:
            place = ids[(Scale.parse(row["scale"]), row["code"])]
            parent_code = (row.get("parent_code") or "").strip()
            if place.scale == Scale.PROVINCE:
                parents[place] = None
            else:
                key = (Scale(place.scale + 1), parent_code)
                if key not in ids:
                    raise HierarchyError(f"{place.code}: unknown parent {parent_code!r}")
                parents[place] = ids[key]
            if row.get("name"):
                names[place] = row["name"]
        return cls(parents, names)

    @classmethod
    def load(cls, path: str | Path) -> PlaceHierarchy:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["scale", "code", "parent_code", "name"]:
                raise HierarchyError(f"{path}: expected header scale,code,parent_code,name")
            return cls.from_rows(reader)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def week_of(timestamp: int | float) -> int:
    if timestamp < 0:
        raise ValueError("timestamp must be non-negative")
    return int(timestamp // SECONDS_PER_WEEK)


def month_of(week: int) -> int:
    return week // WEEKS_PER_MONTH


def weeks_of_month(month: int) -> range:
    return range(WEEKS_PER_MONTH * month, WEEKS_PER_MONTH * (month + 1))


def cell_of(xy: tuple[float, float], cell_size_m: float, bounds: tuple[float, float]) -> GridCell:
    """Bin a planar point into a square cell; the world origin is cell (0, 0)."""
    x, y = xy
    width, height = bounds
    if cell_size_m <= 0:
        raise ValueError("cell_size_m must be positive")
    if not (0 <= x < width and 0 <= y < height):
        raise ValueError(f"point ({x}, {y}) outside world bounds {bounds}")
    return GridCell(int(y // cell_size_m), int(x // cell_size_m), cell_size_m)


@dataclass(frozen=True)
class WorldGrid:
    """Rectangular world nested province > city > district > community.

    Each tuple is (rows, cols) of children per parent.
    """

    provinces: tuple[int, int] = (3, 3)
    cities: tuple[int, int] = (2, 2)
    districts: tuple[int, int] = (2, 2)
    communities: tuple[int, int] = (2, 2)
    community_size_m: float = 1500.0
    cell_size_m: float = 250.0

    def __post_init__(self):
        for dims in (self.provinces, self.cities, self.districts, self.communities):
            if len(dims) != 2 or min(dims) < 1:
                raise ValueError("grid splits must be pairs of positive integers")
        if self.community_size_m <= 0 or self.cell_size_m <= 0:
            raise ValueError("degenerate world bounds")

    @property
    def community_rows(self) -> int:
        return self.provinces[0] * self.cities[0] * self.districts[0] * self.communities[0]

    @property
    def community_cols(self) -> int:
        return self.provinces[1] * self.cities[1] * self.districts[1] * self.communities[1]

    @property
    def width(self) -> float:
        return self.community_cols * self.community_size_m

    @property
    def height(self) -> float:
        return self.community_rows * self.community_size_m

    @property
    def bounds(self) -> tuple[float, float]:
        return (self.width, self.height)

    @property
    def cell_rows(self) -> int:
        return int(np.ceil(self.height / self.cell_size_m))

    @property
    def cell_cols(self) -> int:
        return int(np.ceil(self.width / self.cell_size_m))

    def cell_of(self, xy: tuple[float, float]) -> GridCell:
        return cell_of(xy, self.cell_size_m, self.bounds)

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return ((col + 0.5) * self.cell_size_m, (row + 0.5) * self.cell_size_m)

    # community (r, c) indices -> codes at each scale
    def _codes(self, r: int, c: int) -> tuple[str, str, str, str]:
        mr, mc = self.communities
        dr, dc = self.districts
        cr, cc = self.cities
        pr_, pc_ = self.provinces
        dist_r, dist_c = r // mr, c // mc
        city_r, city_c = dist_r // dr, dist_c // dc
        prov_r, prov_c = city_r // cr, city_c // cc
        province = f"P{prov_r * pc_ + prov_c:02d}"
        city = f"{province}-C{(city_r % cr) * cc + city_c % cc}"
        district = f"{city}-D{(dist_r % dr) * dc + dist_c % dc}"
        community = f"{district}-M{(r % mr) * mc + c % mc}"
        return community, district, city, province

    def community_index(self, x, y):
        """Vectorized (row, col) community indices for planar coordinates."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any((x < 0) | (x >= self.width) | (y < 0) | (y >= self.height)):
            raise ValueError("coordinate outside world bounds")
        r = (y // self.community_size_m).astype(np.int64)
        c = (x // self.community_size_m).astype(np.int64)
        return r, c

    @cached_property
    def community_codes(self) -> np.ndarray:
        """Code for each community, indexed by ``r * community_cols + c``."""
        return np.array(
            [self._codes(r, c)[0] for r in range(self.community_rows) for c in range(self.community_cols)],
            dtype=object,
        )

    def community_at(self, x, y):
        r, c = self.community_index(x, y)
        codes = self.community_codes
        out = codes[r * self.community_cols + c]
        return out if np.ndim(out) else str(out)

    def community_of_cells(self, rows, cols) -> np.ndarray:
        """Community code for each cell center."""
        x = (np.asarray(cols) + 0.5) * self.cell_size_m
        y = (np.asarray(rows) + 0.5) * self.cell_size_m
        x = np.minimum(x, np.nextafter(self.width, 0))
        y = np.minimum(y, np.nextafter(self.height, 0))
        return np.asarray(self.community_at(x, y), dtype=object)

    def community_bounds(self, code: str) -> tuple[float, float, float, float]:
        """(x0, y0, x1, y1) of a community square."""
        r, c = self._community_rc[code]
        s = self.community_size_m
        return (c * s, r * s, (c + 1) * s, (r + 1) * s)

    def community_center(self, code: str) -> tuple[float, float]:
        x0, y0, x1, y1 = self.community_bounds(code)
        return ((x0 + x1) / 2, (y0 + y1) / 2)

    @cached_property
    def _community_rc(self) -> dict[str, tuple[int, int]]:
        return {self._codes(r, c)[0]: (r, c) for r in range(self.community_rows) for c in range(self.community_cols)}

    def hierarchy(self) -> PlaceHierarchy:
        parents: dict[PlaceId, PlaceId | None] = {}
        for r in range(self.community_rows):
            for c in range(self.community_cols):
                community, district, city, province = self._codes(r, c)
                parents[PlaceId(Scale.COMMUNITY, community)] = PlaceId(Scale.DISTRICT, district)
                parents[PlaceId(Scale.DISTRICT, district)] = PlaceId(Scale.CITY, city)
                parents[PlaceId(Scale.CITY, city)] = PlaceId(Scale.PROVINCE, province)
                parents[PlaceId(Scale.PROVINCE, province)] = None
        return PlaceHierarchy(parents)
