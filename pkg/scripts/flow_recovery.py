"""Detected vs. true inter-city migrations on a large simulated world.

    python3 scripts/flow_recovery.py --households 50000 --weeks 12
"""

from __future__ import annotations

import argparse
import time

from migraflow import gbdt
from migraflow.config import DetectConfig, SimConfig
from migraflow.evaluate import edge_errors, event_score, location_accuracy, true_locations, true_migrations
from migraflow.features import extract_features
from migraflow.flows import migrations_between
from migraflow.labeler import label_sessions
from migraflow.moves import run_detection
from migraflow.pipeline import training_set
from migraflow.simulator import generate_world, simulate


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--households", type=int, default=50_000)
    ap.add_argument("--companies", type=int, default=None)
    ap.add_argument("--weeks", type=int, default=12)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--scale", default="city")
    args = ap.parse_args()

    t0 = time.perf_counter()
    cfg = SimConfig(seed=args.seed, n_households=args.households,
                    n_companies=args.companies if args.companies is not None else args.households // 10,
                    weeks=args.weeks)
    world = generate_world(cfg)
    sim = simulate(world, cfg)
    print(f"simulated {len(sim.scans)} scans, {len(sim.sessions)} sessions in {time.perf_counter() - t0:.1f}s")

    labels = label_sessions(sim.sessions).labels
    features = extract_features(sim.scans, sim.sessions, world.buildings)
    X, y, ids = training_set(features, labels)
    model = gbdt.train(X, y, sample_ids=ids)
    result = run_detection(sim.scans, sim.trades, model, features, world.grid, DetectConfig(), cfg.weeks)
    print(f"{len(result.candidates)} candidates, {len(result.moves)} kept, {len(result.pocket)} pocket APs")

    acc = location_accuracy(true_locations(sim.placements, sim.trades), result.locations)
    print(f"weekly location accuracy {acc:.4f}")
    last = (cfg.weeks - 1) // 4
    truth = true_migrations(sim.placements, sim.trades, 0, last)
    found = migrations_between(result.locations, 0, last)
    score = event_score(truth, found, args.scale, world.hierarchy)
    print(f"{args.scale} events months 0->{last}: precision {score.precision:.4f} recall {score.recall:.4f} "
          f"f1 {score.f1:.4f} (true {score.n_true}, detected {score.n_detected})")
    edges = edge_errors(truth, found, args.scale, world.hierarchy)
    print(f"{len(edges)} edges with >= 50 true moves; max relative error "
          f"{edges['rel_error'].max() if len(edges) else float('nan'):.4f}")
    print(f"total {time.perf_counter() - t0:.1f}s")


if __name__ == "__main__":
    main()
