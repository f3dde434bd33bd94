#!/usr/bin/env python3
"""End-to-end demo: train the full meta-model matrix on synthetic data.

Writes a synthetic dataset, runs pose filtering and the training matrix
through the CLI, then scores every trained model on the held-out CORESET
partition and prints a ranked table (meta-model Pearson vs. the best
single base-predictor column).

Example:
    python3 scripts/run_synthetic_matrix.py --workdir runs/demo --seed 42
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

import numpy as np

from affistack.cli import load_cohort, load_run_config, main as cli_main
from affistack.evaluate import pearson
from affistack.ingest import Partition
from affistack.pipeline import load_fitted_model, predict_meta
from affistack.pose_rmsd import FilterMode, filter_cohort
from affistack.synth import SynthConfig, write_synthetic_dataset

QUICK_PROTOCOL = {
    "lasso_repeats": 10,
    "enet_repeats_per_ratio": 2,
    "enet_l1_ratios": [0.5, 0.9, 1.0],
    "gbt_search_iters": 5,
    "pc_k_max": 8,
    "pc_sweep": {
        "lasso_repeats": 2,
        "enet_repeats_per_ratio": 1,
        "enet_l1_ratios": [1.0],
        "gbt_search_iters": 1,
        "pc_k_max": 8,
    },
}


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--workdir", type=Path, default=Path("runs/demo"))
    parser.add_argument("--n-complexes", type=int, default=60)
    parser.add_argument("--seed", type=int, default=42)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument(
        "--full-protocol", action="store_true",
        help="library-default search budgets instead of the quick demo ones",
    )
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    # An empty protocol block parses to the library-default (full) budgets;
    # otherwise replace the dataset's demo-scale block with the quick one.
    run_config = {
        "protocol": {} if args.full_protocol else QUICK_PROTOCOL
    }

    start = time.perf_counter()
    config_path = write_synthetic_dataset(
        args.workdir / "data",
        SynthConfig(n_complexes=args.n_complexes),
        args.seed,
        run_config=run_config,
    )
    out = args.workdir / "out"
    print(f"dataset: {config_path}")

    for step in (
        ["filter-poses", "--config", str(config_path), "--out", str(out)],
        ["train", "--config", str(config_path), "--out", str(out),
         "--workers", str(args.workers)],
    ):
        print(f"$ affistack {' '.join(step)}")
        code = cli_main(step)
        if code != 0:
            return code

    config = load_run_config(config_path)
    cohort = load_cohort(config)
    for mode in config.modes:
        filter_cohort(cohort, mode)
    coreset_ids = sorted(
        cid for cid, record in cohort.records.items()
        if record.partition is Partition.CORESET and record.label is not None
    )
    truth = np.array([cohort.records[i].label.value for i in coreset_ids])

    rows = []
    for model_path in sorted(out.glob("*.json")):
        if model_path.name.endswith(".manifest.json"):
            continue
        if model_path.name == "run_manifest.json":
            continue
        fitted = load_fitted_model(model_path)
        predictions = predict_meta(fitted, cohort, Partition.CORESET)
        values = np.array([predictions[i] for i in coreset_ids])
        rows.append((pearson(values, truth), model_path.stem))
    rows.sort(reverse=True)

    best_column, best_column_name = -2.0, ""
    for name, table in sorted(cohort.base_tables.items()):
        matrix = table.matrix(coreset_ids)
        for c, column in enumerate(table.column_ids):
            r = pearson(matrix[:, c], truth)
            if r > best_column:
                best_column, best_column_name = r, f"{name}:{column}"

    elapsed = time.perf_counter() - start
    print(f"\nheld-out CORESET Pearson ({len(coreset_ids)} complexes):")
    for r, name in rows:
        print(f"  {r:+.4f}  {name}")
    print(f"best single base column: {best_column:+.4f}  {best_column_name}")
    print(f"total {elapsed:.1f}s; artifacts in {out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
