"""Deterministic synthetic cohorts for end-to-end tests and demos.

The generator plants a recoverable signal: a latent affinity drives every
deep-learning prediction column (plus per-column noise) and, weakly, the
docking energies; the true label is then constructed as

    label = dl_weight * mean(DL prediction columns)
          + smina_weight * (rank-0 smina energy)
          + Normal(0, label_noise)

so a meta-model that combines the DL mean with the smina energy must beat
any single base column. Geometry is arranged so both filter modes select
the rank-0 poses: rank 0 sits on the reference structure (vinardo's with a
small jitter) and every later rank is displaced well past the 3 A cutoff.

Everything derives from one seed through named RNG streams; the on-disk
writer emits the exact layout the CLI consumes and rounds coordinates to
the SDF's 4-decimal precision so files round-trip bit-exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .ingest import (
    AffinityLabel,
    AssayMethod,
    Atom,
    BasePredictionTable,
    Cohort,
    CohortRecord,
    GroupTag,
    MeasureKind,
    Molecule,
    Partition,
    Pose,
    PoseSet,
    ScoringFunction,
    format_float,
    write_labels,
    write_partitions,
    write_score_table,
    write_sdf,
)
from .seeding import derived_rng

__all__ = ["SynthConfig", "make_synthetic_cohort", "write_synthetic_dataset"]

_ELEMENTS = ("C", "N", "O")

# (architectures, CV instances per architecture, per-cell noise sd)
_TABLE_SHAPES: dict[str, tuple[int, int, float]] = {
    "D1": (2, 3, 1.5),
    "D2": (2, 3, 1.5),
    # Per-column noise is deliberately large relative to the label noise:
    # single columns must stay weak while their mean recovers the latent
    # signal, so stacking has measurable headroom over any one column.
    "D3": (3, 3, 2.0),
    "D1F": (2, 3, 2.0),
    "D2F": (2, 3, 2.0),
}


@dataclass(frozen=True)
class SynthConfig:
    n_complexes: int = 500
    train_fraction: float = 0.8
    n_poses: int = 9
    dl_weight: float = 0.6
    smina_weight: float = 0.3
    label_noise: float = 0.5
    n_failed: int = 0  # leading TRAIN complexes get a failed smina PoseSet

    def __post_init__(self) -> None:
        if self.n_complexes < 10:
            raise DataError("need at least 10 synthetic complexes")
        if not 0.0 < self.train_fraction < 1.0:
            raise DataError("train_fraction must be in (0, 1)")
        if self.n_poses < 1:
            raise DataError("need at least 1 pose per tool")
        if not 0 <= self.n_failed <= self.n_complexes:
            raise DataError("n_failed outside 0..n_complexes")


def _round4(values: np.ndarray) -> np.ndarray:
    # The SDF writer emits %.4f; rounding here makes in-memory cohorts
    # identical to ones re-read from disk.
    return np.round(values, 4)


def _reference_molecule(complex_id: str, rng: np.random.Generator) -> Molecule:
    n_atoms = int(rng.integers(4, 9))
    elements = [str(rng.choice(_ELEMENTS)) for _ in range(n_atoms)]
    coords = _round4(rng.uniform(-4.0, 4.0, size=(n_atoms, 3)))
    atoms = tuple(
        Atom(element=e, position=(float(x), float(y), float(z)))
        for e, (x, y, z) in zip(elements, coords)
    )
    return Molecule(atoms=atoms, source_id=complex_id)


def _displaced(molecule: Molecule, offset: np.ndarray, source_id: str) -> Molecule:
    atoms = tuple(
        Atom(
            element=a.element,
            position=tuple(
                float(v) for v in _round4(np.asarray(a.position) + offset)
            ),
        )
        for a in molecule.atoms
    )
    return Molecule(atoms=atoms, source_id=source_id)


def _pose_set(
    complex_id: str,
    tool: ScoringFunction,
    reference: Molecule,
    base_energy: float,
    n_poses: int,
    rng: np.random.Generator,
    *,
    failed: bool,
) -> PoseSet:
    energies = [base_energy + 0.4 * rank for rank in range(n_poses)]
    if failed:
        poses = tuple(
            Pose(rank=r, energy=e, molecule=None)
            for r, e in enumerate(energies)
        )
        return PoseSet(
            complex_id=complex_id,
            scoring_function=tool,
            poses=poses,
            failed=True,
        )
    poses = []
    for rank, energy in enumerate(energies):
        if rank == 0:
            if tool is ScoringFunction.SMINA:
                molecule = reference
            else:
                jitter = rng.normal(0.0, 0.03, size=3)
                molecule = _displaced(reference, jitter, complex_id)
        else:
            direction = rng.normal(0.0, 1.0, size=3)
            direction /= max(1e-9, float(np.linalg.norm(direction)))
            molecule = _displaced(
                reference, direction * (5.0 + rank), complex_id
            )
        poses.append(Pose(rank=rank, energy=energy, molecule=molecule))
    return PoseSet(
        complex_id=complex_id,
        scoring_function=tool,
        poses=tuple(poses),
        failed=False,
    )


def make_synthetic_cohort(
    config: SynthConfig = SynthConfig(), seed: int = 0
) -> Cohort:
    """Build the cohort in memory; the writer serializes this exact object."""
    n = config.n_complexes
    ids = [f"SYN{i:04d}" for i in range(n)]
    rng_latent = derived_rng(seed, "latent")
    latent = rng_latent.normal(6.0, 2.0, size=n)
    rng_dock = derived_rng(seed, "docking")
    smina_base = _round4(-0.35 * latent + rng_dock.normal(0.0, 0.8, size=n))
    vinardo_base = _round4(-0.25 * latent + rng_dock.normal(0.0, 1.0, size=n))

    tables: dict[str, BasePredictionTable] = {}
    for name, (n_arch, n_inst, noise_sd) in _TABLE_SHAPES.items():
        rng_table = derived_rng(seed, "table", name)
        column_ids = tuple(
            f"{name.lower()}-a{a}|cv{c}"
            for a in range(n_arch)
            for c in range(n_inst)
        )
        values = latent[:, None] + rng_table.normal(
            0.0, noise_sd, size=(n, len(column_ids))
        )
        tables[name] = BasePredictionTable(
            group_tag=GroupTag(name),
            column_ids=column_ids,
            rows={ids[i]: values[i] for i in range(n)},
        )

    # The label construction mirrors what a stacked model should recover:
    # the mean over the fine-tuned + PDB-trained columns plus the smina
    # rank-0 energy (== the docking feature both filter modes select).
    dap_matrix = np.hstack(
        [tables[name].matrix(ids) for name in ("D1F", "D2F", "D3")]
    )
    dl_mean = dap_matrix.mean(axis=1)
    rng_label = derived_rng(seed, "label")
    labels = (
        config.dl_weight * dl_mean
        + config.smina_weight * smina_base
        + rng_label.normal(0.0, config.label_noise, size=n)
    )

    n_train = int(round(n * config.train_fraction))
    records: dict[str, CohortRecord] = {}
    for i, complex_id in enumerate(ids):
        rng_mol = derived_rng(seed, "molecule", complex_id)
        reference = _reference_molecule(complex_id, rng_mol)
        partition = Partition.TRAIN if i < n_train else Partition.CORESET
        failed_smina = i < config.n_failed and partition is Partition.TRAIN
        pose_sets = {
            ScoringFunction.SMINA: _pose_set(
                complex_id,
                ScoringFunction.SMINA,
                reference,
                float(smina_base[i]),
                config.n_poses,
                derived_rng(seed, "poses", complex_id, "smina"),
                failed=failed_smina,
            ),
            ScoringFunction.VINARDO: _pose_set(
                complex_id,
                ScoringFunction.VINARDO,
                reference,
                float(vinardo_base[i]),
                config.n_poses,
                derived_rng(seed, "poses", complex_id, "vinardo"),
                failed=False,
            ),
        }
        records[complex_id] = CohortRecord(
            complex_id=complex_id,
            partition=partition,
            label=AffinityLabel(
                complex_id=complex_id,
                value=float(np.round(labels[i], 6)),
                measure_kind=MeasureKind.KD,
                assay_method=AssayMethod.XRAY,
                year=2016,
            ),
            pose_sets=pose_sets,
            experimental_pose=reference,
            ligand=None,
        )
    return Cohort(records=records, base_tables=tables)


def _docking_scores_tsv(cohort: Cohort, tool: ScoringFunction) -> str:
    lines = ["complex_id\trank\tenergy"]
    for complex_id in sorted(cohort.records):
        pose_set = cohort.records[complex_id].pose_sets[tool]
        for pose in pose_set.poses:
            lines.append(
                f"{complex_id}\t{pose.rank}\t{format_float(pose.energy)}"
            )
    return "\n".join(lines) + "\n"


def write_synthetic_dataset(
    out_dir: Path,
    config: SynthConfig = SynthConfig(),
    seed: int = 0,
    *,
    run_config: dict | None = None,
) -> Path:
    """Write the full on-disk dataset plus a ready-to-run config file.

    Returns the path of the written config JSON. ``run_config`` overrides
    entries of the default run configuration (matrix, protocol budgets).
    """
    out = Path(out_dir)
    cohort = make_synthetic_cohort(config, seed)
    (out / "tables").mkdir(parents=True, exist_ok=True)
    (out / "docking").mkdir(exist_ok=True)
    (out / "poses").mkdir(exist_ok=True)
    (out / "expt").mkdir(exist_ok=True)

    labels = [
        record.label
        for record in cohort.records.values()
        if record.label is not None
    ]
    (out / "labels.tsv").write_text(write_labels(labels), encoding="utf-8")
    (out / "partitions.tsv").write_text(
        write_partitions(
            {i: r.partition for i, r in cohort.records.items()}
        ),
        encoding="utf-8",
    )
    for name, table in cohort.base_tables.items():
        (out / "tables" / f"{name}.tsv").write_text(
            write_score_table(table), encoding="utf-8"
        )
    for tool in ScoringFunction:
        (out / "docking" / f"{tool.value}.tsv").write_text(
            _docking_scores_tsv(cohort, tool), encoding="utf-8"
        )
    for complex_id, record in cohort.records.items():
        for tool, pose_set in record.pose_sets.items():
            if pose_set.failed:
                continue  # a missing pose file is how "failed" is stored
            molecules = [p.molecule for p in pose_set.poses if p.molecule]
            (out / "poses" / f"{complex_id}_{tool.value}.sdf").write_text(
                write_sdf(molecules), encoding="utf-8"
            )
        if record.experimental_pose is not None:
            (out / "expt" / f"{complex_id}.sdf").write_text(
                write_sdf([record.experimental_pose]), encoding="utf-8"
            )

    payload = {
        "seed": seed,
        "out_dir": "runs",
        "data": {
            "labels": "labels.tsv",
            "partitions": "partitions.tsv",
            "tables": {
                name: f"tables/{name}.tsv" for name in sorted(cohort.base_tables)
            },
            "docking_scores": {
                tool.value: f"docking/{tool.value}.tsv"
                for tool in ScoringFunction
            },
            "poses_dir": "poses",
            "experimental_dir": "expt",
        },
        "matrix": {
            "groups": ["E", "EW", "ED3", "ED-A-P"],
            "algorithms": ["LinReg", "Lasso", "ElasticNet", "XGB"],
            "modes": ["VvS"],
            "cutoffs": [101.0],
        },
        # Demo-scale search budgets: the library defaults (100 LASSO
        # repeats, 100 GBT draws, 22-component sweeps) are sized for real
        # cohorts and take tens of minutes on the 16-cell synthetic
        # matrix. Drop this block to train with the full protocol.
        "protocol": {
            "lasso_repeats": 20,
            "enet_repeats_per_ratio": 3,
            "enet_l1_ratios": [0.5, 0.9, 1.0],
            "gbt_search_iters": 10,
            "pc_k_max": 8,
            "pc_sweep": {
                "lasso_repeats": 2,
                "enet_repeats_per_ratio": 1,
                "enet_l1_ratios": [1.0],
                "gbt_search_iters": 1,
                "pc_k_max": 8,
            },
        },
        "screening": {"ascending": True},
    }
    if run_config:
        for key, value in run_config.items():
            if (
                key in payload
                and isinstance(payload[key], dict)
                and isinstance(value, dict)
            ):
                payload[key].update(value)
            else:
                payload[key] = value
    config_path = out / "config.json"
    config_path.write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return config_path
