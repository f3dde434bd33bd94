"""Reproducible orchestration: CV plans, meta-model training, prediction.

One master seed drives everything. Each run-matrix cell (feature group ×
filter mode × cutoff × algorithm) derives its own seed from the cell's
identity, so cells can run in any order, on any number of workers, and
still produce byte-identical artifacts. Model files carry a run manifest
with input content hashes and every resolved seed — and deliberately no
timestamps, so rerunning an unchanged cell reproduces the file exactly
(which is also how resume detects completed cells).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ._version import VERSION
from .errors import DataError, SchemaError
from .features import (
    FeatureGroup,
    FeatureGroupSpec,
    FeatureMatrix,
    assemble_features,
    pca_source_table,
    write_feature_matrix,
)
from .ingest import Cohort, Partition, format_float
from .learners import (
    GBTModel,
    LinearModel,
    MetaAlgorithm,
    ProtocolParams,
    fit_algorithm,
    model_from_json_dict,
    model_to_json_dict,
    shuffled_fold_indices,
)
from .pca import (
    PCABasis,
    fit_pca,
    optimize_pc_count_detailed,
    pca_basis_from_json_dict,
    pca_basis_to_json_dict,
)
from .pose_rmsd import FilterMode, RmsdFilterMode, apply_rmsd_cutoff, filter_cohort
from .seeding import derived_rng, mixed_seed

__all__ = [
    "CvPlan",
    "FittedMetaModel",
    "MatrixCell",
    "cell_seed",
    "cohort_fingerprint",
    "fitted_model_from_json_dict",
    "fitted_model_to_json_dict",
    "load_fitted_model",
    "model_file_name",
    "predict_meta",
    "repeated_kfold",
    "run_matrix",
    "save_fitted_model",
    "train_meta_model",
    "write_json_atomic",
    "write_text_atomic",
]


# ---------------------------------------------------------------------------
# Cross-validation plan
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CvPlan:
    """Repeated k-fold assignments: assignments[repeat][fold] = test rows."""

    n_rows: int
    folds: int
    repeats: int
    seed: int
    assignments: tuple[tuple[tuple[int, ...], ...], ...]

    def __post_init__(self) -> None:
        if len(self.assignments) != self.repeats:
            raise DataError("one assignment block per repeat required")
        for block in self.assignments:
            if len(block) != self.folds:
                raise DataError("one test set per fold required")
            flat = sorted(i for fold in block for i in fold)
            if flat != list(range(self.n_rows)):
                raise DataError("folds must partition all rows exactly")
            sizes = {len(fold) for fold in block}
            if max(sizes) - min(sizes) > 1:
                raise DataError("fold sizes must differ by at most 1")


def repeated_kfold(
    n: int, folds: int = 5, repeats: int = 10, seed: int = 1701
) -> CvPlan:
    """Deterministic shuffled k-fold plan, one fresh shuffle per repeat."""
    if n < folds:
        raise DataError(f"cannot split {n} rows into {folds} folds")
    if repeats < 1:
        raise DataError("repeats must be >= 1")
    assignments = []
    for repeat in range(repeats):
        rng = derived_rng(seed, "kfold-repeat", repeat)
        block = tuple(
            tuple(int(i) for i in fold)
            for fold in shuffled_fold_indices(n, folds, rng)
        )
        assignments.append(block)
    return CvPlan(
        n_rows=n,
        folds=folds,
        repeats=repeats,
        seed=seed,
        assignments=tuple(assignments),
    )


# ---------------------------------------------------------------------------
# Fitted model bundle
# ---------------------------------------------------------------------------


@dataclass
class FittedMetaModel:
    spec: FeatureGroupSpec
    algorithm: MetaAlgorithm
    model: LinearModel | GBTModel
    pca: PCABasis | None = None
    pc_count: int | None = None
    run_manifest: dict | None = None

    def __post_init__(self) -> None:
        if self.spec.group.is_pca_based:
            if self.pca is None or self.pc_count is None:
                raise DataError(
                    f"group {self.spec.group.label} requires pca and pc_count"
                )
        else:
            if self.pca is not None or self.pc_count is not None:
                raise DataError(
                    f"group {self.spec.group.label} takes no pca/pc_count"
                )


def model_file_name(spec: FeatureGroupSpec, algorithm: MetaAlgorithm) -> str:
    """`<group>_<mode-tag>_<cutoff>_<algo>.json`, e.g. ED2-F_VvS_101.0_LinReg."""
    return (
        f"{spec.group.label}_{spec.rmsd_mode.tag}_"
        f"{format_float(spec.rmsd_mode.cutoff)}_{algorithm.value}.json"
    )


def cell_seed(
    master_seed: int, spec: FeatureGroupSpec, algorithm: MetaAlgorithm
) -> int:
    """Per-cell seed derived from the cell's identity, not its position."""
    return mixed_seed(
        master_seed,
        spec.group.label,
        spec.rmsd_mode.tag,
        format_float(spec.rmsd_mode.cutoff),
        algorithm.value,
    )


# ---------------------------------------------------------------------------
# Content fingerprints
# ---------------------------------------------------------------------------


def _hash_update_floats(h, values) -> None:
    h.update(np.ascontiguousarray(values, dtype=np.float64).tobytes())


def cohort_fingerprint(cohort: Cohort) -> str:
    """SHA-256 over every input the pipeline can read from a cohort.

    Covers record identities, partitions, labels, pose ranks/energies and
    coordinates, experimental/ligand structures, and all base tables —
    but not filter_results, which are derived, so the fingerprint is
    stable across filtering.
    """
    h = hashlib.sha256()
    for complex_id in sorted(cohort.records):
        record = cohort.records[complex_id]
        h.update(complex_id.encode())
        h.update(record.partition.value.encode())
        if record.label is not None:
            h.update(b"label")
            _hash_update_floats(h, [record.label.value])
        for sf in sorted(record.pose_sets, key=lambda s: s.value):
            pose_set = record.pose_sets[sf]
            h.update(sf.value.encode())
            h.update(b"failed" if pose_set.failed else b"ok")
            for pose in pose_set.poses:
                _hash_update_floats(h, [float(pose.rank), pose.energy])
                if pose.molecule is not None:
                    for atom in pose.molecule.atoms:
                        h.update(atom.element.encode())
                        _hash_update_floats(h, atom.position)
        for name, molecule in (
            ("expt", record.experimental_pose),
            ("ligand", record.ligand),
        ):
            if molecule is not None:
                h.update(name.encode())
                for atom in molecule.atoms:
                    h.update(atom.element.encode())
                    _hash_update_floats(h, atom.position)
    for name in sorted(cohort.base_tables):
        table = cohort.base_tables[name]
        h.update(name.encode())
        for column_id in table.column_ids:
            h.update(column_id.encode())
        for complex_id in sorted(table.rows):
            h.update(complex_id.encode())
            _hash_update_floats(h, table.rows[complex_id])
    return h.hexdigest()


def _matrix_fingerprint(matrix: FeatureMatrix) -> str:
    return hashlib.sha256(write_feature_matrix(matrix).encode()).hexdigest()


def _params_payload(params: ProtocolParams) -> dict:
    """JSON-canonical view of the protocol budgets (for manifests/resume)."""
    return json.loads(json.dumps(dataclasses.asdict(params)))


# ---------------------------------------------------------------------------
# Training and prediction
# ---------------------------------------------------------------------------


def _ensure_filter_results(cohort: Cohort, mode: FilterMode) -> None:
    missing = [
        i
        for i, record in cohort.records.items()
        if mode not in record.filter_results
    ]
    if missing:
        filter_cohort(cohort, mode)


def train_meta_model(
    cohort: Cohort,
    spec: FeatureGroupSpec,
    algorithm: MetaAlgorithm,
    seed: int = 0,
    *,
    params: ProtocolParams = ProtocolParams(),
) -> FittedMetaModel:
    """Train one run-matrix cell end to end.

    Applies ``spec``'s RMSD cutoff to TRAIN, fits PCA on the survivors'
    predictions and sweeps the component count for PCA-based groups,
    assembles the feature matrix, and runs the algorithm's full selection
    protocol. The returned manifest records the cohort fingerprint, the
    assembled-matrix hash, and every derived seed.
    """
    _ensure_filter_results(cohort, spec.rmsd_mode.mode)
    n_train_before = len(cohort.ids(Partition.TRAIN))
    filtered = apply_rmsd_cutoff(cohort, spec.rmsd_mode)
    train_ids = sorted(filtered.ids(Partition.TRAIN))
    if not train_ids:
        raise DataError(
            f"no TRAIN records survive cutoff {spec.rmsd_mode.cutoff} under "
            f"mode {spec.rmsd_mode.tag}"
        )

    basis: PCABasis | None = None
    pc_count: int | None = None
    sweep_record: dict | None = None
    if spec.group.is_pca_based:
        source = spec.group.pca_source
        assert source is not None
        source_table = pca_source_table(filtered, source, train_ids)
        basis = fit_pca(source_table, source=source)
        k_cap = min(params.pc_k_max, basis.n_components)
        probe_spec = replace(spec, pc_count=k_cap)
        probe = assemble_features(
            filtered, probe_spec, basis, partition=Partition.TRAIN
        )
        if probe.labels is None:
            raise DataError("training requires a label for every TRAIN record")
        fixed_width = probe.values.shape[1] - k_cap

        def builder(k: int) -> np.ndarray:
            # project(·, k) is the first k columns of project(·, k_cap),
            # so slicing the widest assembly is exact, not an approximation.
            return probe.values[:, : fixed_width + k]

        split_seed = mixed_seed(seed, "pc-sweep")
        sweep = optimize_pc_count_detailed(
            builder,
            probe.labels,
            algorithm,
            k_max=k_cap,
            split_seed=split_seed,
            val_fraction=params.pc_val_fraction,
            params=params,
        )
        pc_count = sweep.k_star
        sweep_record = {
            "split_seed": split_seed,
            "k_max": k_cap,
            "k_star": sweep.k_star,
            "val_pearson_by_k": list(sweep.scores),
            "n_train": sweep.n_train,
            "n_val": sweep.n_val,
        }
        spec = replace(spec, pc_count=pc_count)

    matrix = assemble_features(filtered, spec, basis, partition=Partition.TRAIN)
    if matrix.labels is None:
        raise DataError("training requires a label for every TRAIN record")
    fit_seed = mixed_seed(seed, "fit")
    model = fit_algorithm(
        algorithm,
        matrix.values,
        matrix.labels,
        seed=fit_seed,
        params=params,
        feature_names=matrix.column_names,
    )
    manifest = {
        "package_version": VERSION,
        "group": spec.group.label,
        "filter_mode": spec.rmsd_mode.tag,
        "cutoff": spec.rmsd_mode.cutoff,
        "algorithm": algorithm.value,
        "seed": seed,
        "fit_seed": fit_seed,
        "cohort_sha256": cohort_fingerprint(cohort),
        "train_matrix_sha256": _matrix_fingerprint(matrix),
        "n_train_total": n_train_before,
        "n_train_survivors": len(train_ids),
        "feature_columns": list(matrix.column_names),
        "protocol_params": _params_payload(params),
        "pc_sweep": sweep_record,
    }
    return FittedMetaModel(
        spec=spec,
        algorithm=algorithm,
        model=model,
        pca=basis,
        pc_count=pc_count,
        run_manifest=manifest,
    )


def predict_meta(
    model: FittedMetaModel,
    cohort: Cohort,
    partition: Partition | None = None,
) -> dict[str, float]:
    """Predict a partition with a trained cell.

    RMSD cutoffs are never applied here — prediction partitions keep every
    record; only the pose *selection* of the model's filter mode is used
    (for the docking-energy features).
    """
    ids = sorted(cohort.ids(partition))
    if not ids:
        return {}
    _ensure_filter_results(cohort, model.spec.rmsd_mode.mode)
    matrix = assemble_features(
        cohort, model.spec, model.pca, partition=partition
    )
    expected = model.model.feature_names
    if expected is not None and tuple(matrix.column_names) != tuple(expected):
        missing = [c for c in expected if c not in matrix.column_names]
        extra = [c for c in matrix.column_names if c not in expected]
        raise SchemaError(
            "feature schema mismatch between model and data"
            + (f"; missing: {', '.join(missing)}" if missing else "")
            + (f"; unexpected: {', '.join(extra)}" if extra else "")
        )
    predictions = model.model.predict(matrix.values)
    return {
        complex_id: float(value)
        for complex_id, value in zip(matrix.complex_ids, predictions)
    }


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def fitted_model_to_json_dict(fitted: FittedMetaModel) -> dict:
    return {
        "kind": "fitted_meta_model",
        "format_version": 1,
        "group": fitted.spec.group.label,
        "filter_mode": fitted.spec.rmsd_mode.tag,
        "cutoff": fitted.spec.rmsd_mode.cutoff,
        "algorithm": fitted.algorithm.value,
        "pc_count": fitted.pc_count,
        "pca": pca_basis_to_json_dict(fitted.pca) if fitted.pca else None,
        "model": model_to_json_dict(fitted.model),
        "run_manifest": fitted.run_manifest,
    }


def fitted_model_from_json_dict(payload: dict) -> FittedMetaModel:
    if payload.get("kind") != "fitted_meta_model":
        raise SchemaError(
            f"not a fitted model payload: kind={payload.get('kind')!r}"
        )
    spec = FeatureGroupSpec(
        group=FeatureGroup.parse(payload["group"]),
        rmsd_mode=RmsdFilterMode(
            mode=FilterMode.from_tag(payload["filter_mode"]),
            cutoff=float(payload["cutoff"]),
        ),
        pc_count=payload.get("pc_count"),
    )
    return FittedMetaModel(
        spec=spec,
        algorithm=MetaAlgorithm.parse(payload["algorithm"]),
        model=model_from_json_dict(payload["model"]),
        pca=pca_basis_from_json_dict(payload["pca"]) if payload.get("pca") else None,
        pc_count=payload.get("pc_count"),
        run_manifest=payload.get("run_manifest"),
    )


def _canonical_json(payload: dict) -> str:
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def write_text_atomic(path: Path, text: str) -> None:
    """Write via a same-directory temp file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.parent / f".{path.name}.tmp-{os.getpid()}"
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def write_json_atomic(path: Path, payload: dict) -> None:
    write_text_atomic(path, _canonical_json(payload))


def save_fitted_model(fitted: FittedMetaModel, path: Path) -> None:
    write_json_atomic(Path(path), fitted_model_to_json_dict(fitted))


def load_fitted_model(path: Path) -> FittedMetaModel:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: not valid JSON ({exc})") from exc
    return fitted_model_from_json_dict(payload)


# ---------------------------------------------------------------------------
# Run matrix
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MatrixCell:
    spec: FeatureGroupSpec
    algorithm: MetaAlgorithm

    @property
    def file_name(self) -> str:
        return model_file_name(self.spec, self.algorithm)


def _cell_is_complete(
    path: Path, expected_seed: int, cohort_hash: str, params_payload: dict
) -> bool:
    """Resume check: a cell is done iff its file's manifest matches the
    inputs this run would use (same cohort content, same derived seed,
    same protocol budgets)."""
    if not path.exists():
        return False
    try:
        fitted = load_fitted_model(path)
    except (SchemaError, DataError, OSError):
        return False
    manifest = fitted.run_manifest or {}
    return (
        manifest.get("seed") == expected_seed
        and manifest.get("cohort_sha256") == cohort_hash
        and manifest.get("protocol_params") == params_payload
    )


def _train_cell_task(
    args: tuple[Cohort, MatrixCell, int, ProtocolParams, str],
) -> tuple[str, dict]:
    cohort, cell, seed, params, out_dir = args
    fitted = train_meta_model(
        cohort, cell.spec, cell.algorithm, seed, params=params
    )
    path = Path(out_dir) / cell.file_name
    save_fitted_model(fitted, path)
    return cell.file_name, fitted.run_manifest or {}


def run_matrix(
    cohort: Cohort,
    cells: Sequence[MatrixCell],
    master_seed: int,
    out_dir: Path,
    *,
    params: ProtocolParams = ProtocolParams(),
    workers: int = 1,
    resume: bool = True,
) -> dict:
    """Train every cell, in parallel if asked, and write one model file per
    cell plus a run-level manifest. Completed cells (matching manifest) are
    skipped when ``resume`` is true. Output bytes are independent of
    ``workers`` because each cell's seed comes from its identity."""
    if not cells:
        raise DataError("run matrix is empty")
    names = [cell.file_name for cell in cells]
    if len(set(names)) != len(names):
        raise DataError("duplicate run-matrix cells")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cohort_hash = cohort_fingerprint(cohort)
    params_payload = _params_payload(params)

    pending: list[tuple[MatrixCell, int]] = []
    skipped: list[str] = []
    for cell in cells:
        seed = cell_seed(master_seed, cell.spec, cell.algorithm)
        if resume and _cell_is_complete(
            out / cell.file_name, seed, cohort_hash, params_payload
        ):
            skipped.append(cell.file_name)
        else:
            pending.append((cell, seed))

    completed: dict[str, dict] = {}
    tasks = [
        (cohort, cell, seed, params, str(out)) for cell, seed in pending
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for name, manifest in pool.map(_train_cell_task, tasks):
                completed[name] = manifest
    else:
        for task in tasks:
            name, manifest = _train_cell_task(task)
            completed[name] = manifest

    # The on-disk manifest must not record what happened to be cached or
    # how many workers ran: identical inputs must reproduce identical
    # bytes whether the run was fresh, resumed, serial, or parallel.
    file_manifest = {
        "kind": "run_manifest",
        "package_version": VERSION,
        "master_seed": master_seed,
        "cohort_sha256": cohort_hash,
        "protocol_params": params_payload,
        "cells": sorted(names),
    }
    write_json_atomic(out / "run_manifest.json", file_manifest)
    return {
        **file_manifest,
        "trained": sorted(completed),
        "skipped_complete": sorted(skipped),
    }
