"""CSV record formats shared by every stage; all files are UTF-8 with a header row."""

from __future__ import annotations

from pathlib import Path

import pandas as pd

INT = "int64"
FLOAT = "float64"
STR = "str"
OPT_INT = "Int64"

SCHEMAS: dict[str, list[tuple[str, str]]] = {
    "scans": [("scanner_id", INT), ("timestamp", INT), ("x", FLOAT), ("y", FLOAT), ("ap_id", INT), ("rssi", FLOAT)],
    "sessions": [("terminal_id", INT), ("ap_id", INT), ("connect_ts", INT), ("disconnect_ts", INT), ("car_call_ts", OPT_INT)],
    "trades": [("ap_id", INT), ("week", INT), ("timestamp", INT), ("seller", INT), ("buyer", INT)],
    "truth": [("kind", STR), ("ap_id", INT), ("week", INT), ("origin", STR), ("destination", STR)],
    "buildings": [
        ("building_id", INT), ("x", FLOAT), ("y", FLOAT), ("p_office", FLOAT), ("p_residential", FLOAT),
        ("p_mixture", FLOAT), ("p_uncertain", FLOAT), ("kind", INT), ("community", STR),
    ],
    "placements": [("ap_id", INT), ("week", INT), ("kind", STR), ("building_id", INT), ("community", STR)],
    "labels": [("ap_id", INT), ("label", STR), ("support", INT)],
    "features": [
        ("ap_id", INT), ("prop1_type", INT), ("prop1_prob", FLOAT), ("prop2_type", INT), ("prop2_prob", FLOAT),
        ("terminal_history", INT), ("accumulated_connections", INT), ("max_simultaneous", INT), ("day_night_ratio", FLOAT),
    ],
    "moves": [("ap_id", INT), ("from_week", INT), ("to_week", INT), ("similarity", FLOAT), ("origin", STR), ("destination", STR)],
    "locations": [("family_id", STR), ("week", INT), ("place", STR)],
    "flows": [
        ("scale", STR), ("from_month", INT), ("to_month", INT), ("kind", STR),
        ("origin", STR), ("destination", STR), ("count", INT),
    ],
    "net": [("scale", STR), ("from_month", INT), ("to_month", INT), ("place", STR), ("raw", INT), ("regularized", FLOAT)],
    "series": [("month", INT), ("net_immigration", INT), ("total_migration", INT), ("ratio", FLOAT), ("zero_total", INT)],
    "density": [("cell_row", INT), ("cell_col", INT), ("net_count", INT)],
    "top": [("rank", INT), ("place", STR), ("name", STR), ("regularized", FLOAT), ("raw", INT)],
    "groups": [("direction", STR), ("origin_group", STR), ("destination_group", STR), ("count", INT), ("regularized", FLOAT)],
}


class SchemaError(ValueError):
    pass


def columns(kind: str) -> list[str]:
    return [name for name, _ in SCHEMAS[kind]]


def read_table(path: str | Path, kind: str) -> pd.DataFrame:
    """Read and validate one record file; the header must match the schema exactly."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"{kind} file not found: {path}")
    schema = SCHEMAS[kind]
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n").split(",")
    if header != columns(kind):
        raise SchemaError(f"{path}: expected columns {','.join(columns(kind))}, got {','.join(header)}")
    dtypes = {name: (object if t == STR else ("Int64" if t == OPT_INT else t)) for name, t in schema}
    try:
        df = pd.read_csv(path, dtype=dtypes, keep_default_na=False, na_values={n: [""] for n, t in schema if t == OPT_INT})
    except (ValueError, TypeError) as exc:
        raise SchemaError(f"{path}: {exc}") from None
    for name, t in schema:
        if t in (INT, FLOAT) and df[name].isna().any():
            raise SchemaError(f"{path}: missing values in column {name}")
    return df


def write_table(df: pd.DataFrame, path: str | Path, kind: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    out = df[columns(kind)]
    out.to_csv(path, index=False, lineterminator="\n", encoding="utf-8")
    return path
