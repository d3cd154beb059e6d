"""Residential / non-residential AP labels from terminal session timing."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .config import LabelRules
from .geo import SECONDS_PER_DAY

log = logging.getLogger(__name__)

POSITIVE = "positive"
NEGATIVE = "negative"


@dataclass
class LabelResult:
    labels: pd.DataFrame  # ap_id,label,support sorted by ap_id
    skipped: int  # malformed sessions ignored


def session_votes(sessions: pd.DataFrame, rules: LabelRules = LabelRules()) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-session (positive, negative, well_formed) boolean masks."""
    connect = sessions["connect_ts"].to_numpy(dtype=np.int64)
    disconnect = sessions["disconnect_ts"].to_numpy(dtype=np.int64)
    car_col = sessions["car_call_ts"]
    has_car = car_col.notna().to_numpy()
    car = car_col.fillna(-1).to_numpy(dtype=np.int64)

    ok = connect < disconnect
    ok &= ~has_car | ((car >= connect) & (car <= disconnect))

    c_day, c_sec = np.divmod(connect, SECONDS_PER_DAY)
    d_day, d_sec = np.divmod(disconnect, SECONDS_PER_DAY)
    c_hour = c_sec / 3600.0
    d_hour = d_sec / 3600.0

    positive = (
        (c_hour >= rules.positive_connect_hour)
        & (d_day == c_day + 1)
        & (d_hour < rules.positive_disconnect_before)
        & has_car
        & (car >= c_day * SECONDS_PER_DAY + rules.car_call_after_hour * 3600)
    )
    negative = (
        (c_hour >= rules.negative_connect_from)
        & (c_hour < rules.negative_connect_until)
        & (d_day == c_day)
        & (d_hour >= rules.negative_disconnect_from)
    )
    return positive & ok, negative & ok, ok


def label_sessions(sessions: pd.DataFrame, rules: LabelRules = LabelRules()) -> LabelResult:
    pos, neg, ok = session_votes(sessions, rules)
    skipped = int((~ok).sum())
    if skipped:
        log.warning("skipped %d malformed sessions", skipped)
    votes = pd.DataFrame({"ap_id": sessions["ap_id"].to_numpy(dtype=np.int64), "pos": pos, "neg": neg})
    votes = votes[pos | neg]
    tally = votes.groupby("ap_id", sort=True)[["pos", "neg"]].sum()
    n_pos = tally["pos"].to_numpy()
    n_neg = tally["neg"].to_numpy()
    ratio = n_pos / (n_pos + n_neg)
    is_pos = ratio > rules.abstain_high
    is_neg = ratio < rules.abstain_low
    support = np.where(is_pos, n_pos, n_neg)
    keep = (is_pos | is_neg) & (support >= rules.min_support)
    labels = pd.DataFrame(
        {
            "ap_id": tally.index.to_numpy(dtype=np.int64)[keep],
            "label": np.where(is_pos, POSITIVE, NEGATIVE)[keep],
            "support": support[keep].astype(np.int64),
        }
    )
    return LabelResult(labels.reset_index(drop=True), skipped)
