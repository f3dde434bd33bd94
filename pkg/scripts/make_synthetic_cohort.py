#!/usr/bin/env python3
"""Write a synthetic benchmark dataset to disk, ready for the CLI.

The dataset mimics the real inputs end to end: per-complex pose SDF files
for both docking tools, docking score tables, base-predictor score tables,
labels, partitions, and a run config. Labels are a noisy linear blend of
the base-predictor column mean and the smina rank-0 energy, so meta-models
have a real (and known) signal to recover.

Example:
    python3 scripts/make_synthetic_cohort.py --out data/synth500 \
        --n-complexes 500 --seed 42
"""

from __future__ import annotations

import argparse
from pathlib import Path

from affistack.cli import load_cohort, load_run_config
from affistack.ingest import Partition
from affistack.synth import SynthConfig, write_synthetic_dataset


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, required=True,
                        help="output directory for the dataset")
    parser.add_argument("--n-complexes", type=int, default=500)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--train-fraction", type=float, default=0.8)
    parser.add_argument("--n-poses", type=int, default=9)
    parser.add_argument("--n-failed", type=int, default=0,
                        help="leading TRAIN complexes with a failed smina run")
    return parser.parse_args()


def main() -> int:
    args = parse_args()
    config = SynthConfig(
        n_complexes=args.n_complexes,
        train_fraction=args.train_fraction,
        n_poses=args.n_poses,
        n_failed=args.n_failed,
    )
    config_path = write_synthetic_dataset(args.out, config, args.seed)
    cohort = load_cohort(load_run_config(config_path))
    by_partition = {p: 0 for p in Partition}
    for record in cohort.records.values():
        by_partition[record.partition] += 1
    counts = ", ".join(
        f"{p.value}={n}" for p, n in sorted(by_partition.items(),
                                            key=lambda kv: kv[0].value)
        if n
    )
    print(f"wrote {config_path}")
    print(f"{len(cohort.records)} complexes ({counts}), "
          f"{len(cohort.base_tables)} score tables, seed {args.seed}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
