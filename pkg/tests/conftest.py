from __future__ import annotations

from dataclasses import dataclass

import pandas as pd
import pytest
from hypothesis import HealthCheck, settings

from migraflow import gbdt
from migraflow.config import DetectConfig, SimConfig
from migraflow.features import extract_features
from migraflow.labeler import label_sessions
from migraflow.moves import DetectionResult, run_detection
from migraflow.pipeline import training_set
from migraflow.simulator import SimResult, World, generate_world, simulate

settings.register_profile("default", max_examples=100, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@dataclass
class SmallRun:
    config: SimConfig
    world: World
    sim: SimResult
    labels: pd.DataFrame
    features: pd.DataFrame
    model: gbdt.StumpEnsemble
    detection: DetectionResult


@pytest.fixture(scope="session")
def small_run() -> SmallRun:
    cfg = SimConfig(seed=11, n_households=2000, n_companies=200, weeks=12)
    world = generate_world(cfg)
    sim = simulate(world, cfg)
    labels = label_sessions(sim.sessions).labels
    features = extract_features(sim.scans, sim.sessions, world.buildings)
    X, y, ids = training_set(features, labels)
    model = gbdt.train(X, y, sample_ids=ids)
    detection = run_detection(sim.scans, sim.trades, model, features, world.grid, DetectConfig(), cfg.weeks)
    return SmallRun(cfg, world, sim, labels, features, model, detection)
