"""Assembly of the eleven meta-model feature groups.

Every group builds on the two docking energies taken from the poses the
active RMSD filter selected (the pose choice differs between filter modes,
so the same complex can contribute different energies under each mode —
even at the permissive 101.0 cutoff). From there:

    E        smina, vinardo
    EW       E + molecular weight
    ED1/ED2/ED3/ED1_F/ED2_F
             EW + one mean column per deep-learning architecture from the
             matching prediction table (D1/D2/D3/D1F/D2F)
    ED1_F_P/ED2_F_P/ED3_P/ED_A_P
             EW + the first k principal-component scores of the matching
             prediction source (D1FP/D2FP/D3P/DAP; DAP = D1F + D2F + D3
             merged)

Feature matrices never bake in standardization — the learners decide.
Row order is always lexicographic by complex id so joins and re-assembly
are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, SchemaError
from .ingest import (
    BasePredictionTable,
    Cohort,
    GroupTag,
    Partition,
    format_float,
    molecular_weight,
)
from .pca import PCABasis, PcaSource, project
from .pose_rmsd import RmsdFilterMode

__all__ = [
    "FeatureGroup",
    "FeatureGroupSpec",
    "FeatureMatrix",
    "assemble_features",
    "default_architecture_key",
    "dl_mean_scores",
    "parse_feature_matrix",
    "pca_source_table",
    "write_feature_matrix",
]


class FeatureGroup(str, Enum):
    """The eleven feature-group schemas, valued by their display labels."""

    E = "E"
    EW = "EW"
    ED1 = "ED1"
    ED2 = "ED2"
    ED3 = "ED3"
    ED1_F = "ED1-F"
    ED2_F = "ED2-F"
    ED1_F_P = "ED1-F-P"
    ED2_F_P = "ED2-F-P"
    ED3_P = "ED3-P"
    ED_A_P = "ED-A-P"

    @classmethod
    def parse(cls, text: str) -> "FeatureGroup":
        normalized = text.strip().upper().replace("_", "-")
        for member in cls:
            if member.value.upper() == normalized:
                return member
        raise DataError(f"unknown feature group {text!r}")

    @property
    def label(self) -> str:
        return self.value

    @property
    def uses_mw(self) -> bool:
        return self is not FeatureGroup.E

    @property
    def mean_source(self) -> GroupTag | None:
        """Prediction table whose per-architecture means join the group."""
        return {
            FeatureGroup.ED1: GroupTag.D1,
            FeatureGroup.ED2: GroupTag.D2,
            FeatureGroup.ED3: GroupTag.D3,
            FeatureGroup.ED1_F: GroupTag.D1F,
            FeatureGroup.ED2_F: GroupTag.D2F,
        }.get(self)

    @property
    def pca_source(self) -> PcaSource | None:
        """Prediction source whose PC scores join the group."""
        return {
            FeatureGroup.ED1_F_P: PcaSource.D1FP,
            FeatureGroup.ED2_F_P: PcaSource.D2FP,
            FeatureGroup.ED3_P: PcaSource.D3P,
            FeatureGroup.ED_A_P: PcaSource.DAP,
        }.get(self)

    @property
    def is_pca_based(self) -> bool:
        return self.pca_source is not None


@dataclass(frozen=True)
class FeatureGroupSpec:
    """A feature group bound to a filter mode (and PC count if PCA-based)."""

    group: FeatureGroup
    rmsd_mode: RmsdFilterMode
    pc_count: int | None = None

    def __post_init__(self) -> None:
        if self.group.is_pca_based:
            if self.pc_count is None:
                raise DataError(
                    f"group {self.group.label} requires pc_count"
                )
            if not 1 <= self.pc_count <= 22:
                raise DataError(
                    f"pc_count must be in 1..22, got {self.pc_count}"
                )
        elif self.pc_count is not None:
            raise DataError(
                f"group {self.group.label} does not take pc_count"
            )

    def column_names(self, cohort: Cohort) -> list[str]:
        """The exact column schema this spec produces on this cohort."""
        names = ["smina", "vinardo"]
        if self.group.uses_mw:
            names.append("mw")
        source = self.group.mean_source
        if source is not None:
            table = cohort.table(source.value)
            arches = _architectures(table, default_architecture_key)
            names.extend(f"dlmean|{arch}" for arch in arches)
        if self.group.is_pca_based:
            assert self.pc_count is not None
            names.extend(f"pc{k}" for k in range(1, self.pc_count + 1))
        return names


@dataclass(frozen=True)
class FeatureMatrix:
    """Feature rows plus (optionally) aligned ln-affinity labels.

    ``labels`` is None when any selected record lacks an affinity label —
    prediction-only assemblies still need the matrix, but a partially
    labeled vector would be a silent lie.
    """

    complex_ids: tuple[str, ...]
    column_names: tuple[str, ...]
    values: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self) -> None:
        n, p = self.values.shape
        if n != len(self.complex_ids):
            raise DataError("one row per complex id required")
        if p != len(self.column_names):
            raise DataError("one column name per column required")
        if len(set(self.column_names)) != len(self.column_names):
            raise DataError("duplicate feature column names")
        if len(set(self.complex_ids)) != len(self.complex_ids):
            raise DataError("duplicate complex ids")
        if not np.all(np.isfinite(self.values)):
            raise DataError("non-finite feature value")
        if self.labels is not None:
            if self.labels.shape != (n,):
                raise DataError("labels must align with rows")
            if not np.all(np.isfinite(self.labels)):
                raise DataError("non-finite label")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


def default_architecture_key(column_id: str) -> str:
    """Architecture = the column id minus its trailing CV-instance segment.

    Columns are named ``<architecture>|<cv-instance>`` (an id without a
    separator is its own single-instance architecture).
    """
    return column_id.rsplit("|", 1)[0]


def _architectures(
    table: BasePredictionTable, architecture_key: Callable[[str], str]
) -> list[str]:
    seen: dict[str, list[int]] = {}
    for idx, column_id in enumerate(table.column_ids):
        key = architecture_key(column_id)
        if not key:
            raise SchemaError(
                f"table {table.group_tag.value}: column {column_id!r} maps "
                "to an empty architecture key"
            )
        seen.setdefault(key, []).append(idx)
    return sorted(seen)


def dl_mean_scores(
    table: BasePredictionTable,
    architecture_key: Callable[[str], str] = default_architecture_key,
) -> BasePredictionTable:
    """Collapse CV-instance columns to one mean column per architecture."""
    groups: dict[str, list[int]] = {}
    for idx, column_id in enumerate(table.column_ids):
        key = architecture_key(column_id)
        if not key:
            raise SchemaError(
                f"table {table.group_tag.value}: column {column_id!r} maps "
                "to an empty architecture key"
            )
        groups.setdefault(key, []).append(idx)
    arches = sorted(groups)
    rows = {
        complex_id: np.array(
            [float(vector[groups[a]].mean()) for a in arches]
        )
        for complex_id, vector in table.rows.items()
    }
    return BasePredictionTable(
        group_tag=table.group_tag,
        column_ids=tuple(arches),
        rows=rows,
    )


def pca_source_table(
    cohort: Cohort, source: PcaSource, ids: Sequence[str]
) -> BasePredictionTable:
    """Concatenate the source's prediction tables into one wide table.

    Column ids are namespaced ``<tag>|<column>`` so merged sources (DAP)
    cannot collide; column order is the tag order of the source followed
    by each table's own column order, which makes the layout reproducible
    for PCA training and projection alike.
    """
    column_ids: list[str] = []
    blocks: list[np.ndarray] = []
    for tag in source.table_tags:
        table = cohort.table(tag.value)
        column_ids.extend(f"{tag.value}|{c}" for c in table.column_ids)
        blocks.append(table.matrix(ids))
    matrix = np.hstack(blocks) if blocks else np.empty((len(ids), 0))
    return BasePredictionTable(
        group_tag=GroupTag.OTHER,
        column_ids=tuple(column_ids),
        rows={i: matrix[k] for k, i in enumerate(ids)},
    )


def _docking_energies(
    cohort: Cohort, spec: FeatureGroupSpec, ids: Sequence[str]
) -> np.ndarray:
    missing = [
        i
        for i in ids
        if spec.rmsd_mode.mode not in cohort.records[i].filter_results
    ]
    if missing:
        raise SchemaError(
            "no filter result under mode "
            f"{spec.rmsd_mode.mode.tag} for complex(es): "
            + ", ".join(missing[:8])
            + (f", ... ({len(missing)} total)" if len(missing) > 8 else "")
        )
    out = np.empty((len(ids), 2))
    for row, complex_id in enumerate(ids):
        result = cohort.records[complex_id].filter_results[spec.rmsd_mode.mode]
        out[row, 0] = result.smina.energy
        out[row, 1] = result.vinardo.energy
    return out


def assemble_features(
    cohort: Cohort,
    spec: FeatureGroupSpec,
    pca: PCABasis | None = None,
    *,
    partition: Partition | None = None,
) -> FeatureMatrix:
    """Build the feature matrix ``spec`` describes over the cohort's records.

    ``partition`` restricts to one partition (None = every record). The
    caller is responsible for applying the training-set RMSD cutoff first;
    assembly itself never drops rows. PCA-based groups require the fitted
    basis of ``spec``'s PCA source.
    """
    ids = sorted(cohort.ids(partition))
    if not ids:
        return FeatureMatrix(
            complex_ids=(),
            column_names=tuple(spec.column_names(cohort)),
            values=np.empty((0, len(spec.column_names(cohort)))),
            labels=np.empty(0),
        )
    columns: list[np.ndarray] = [_docking_energies(cohort, spec, ids)]
    names = ["smina", "vinardo"]

    if spec.group.uses_mw:
        weights = np.array(
            [molecular_weight(cohort.records[i].weight_molecule()) for i in ids]
        )
        columns.append(weights[:, None])
        names.append("mw")

    mean_source = spec.group.mean_source
    if mean_source is not None:
        means = dl_mean_scores(cohort.table(mean_source.value))
        columns.append(means.matrix(ids))
        names.extend(f"dlmean|{arch}" for arch in means.column_ids)

    if spec.group.is_pca_based:
        assert spec.pc_count is not None
        source = spec.group.pca_source
        assert source is not None
        if pca is None:
            raise SchemaError(
                f"group {spec.group.label} requires a fitted PCA basis"
            )
        if pca.source_group is not None and pca.source_group is not source:
            raise SchemaError(
                f"basis was fit on {pca.source_group.value}, but group "
                f"{spec.group.label} projects {source.value}"
            )
        if spec.pc_count > pca.n_components:
            raise SchemaError(
                f"pc_count {spec.pc_count} exceeds the basis's "
                f"{pca.n_components} components"
            )
        source_rows = pca_source_table(cohort, source, ids).matrix(ids)
        columns.append(project(pca, source_rows, spec.pc_count))
        names.extend(f"pc{k}" for k in range(1, spec.pc_count + 1))

    values = np.hstack(columns)
    label_values = [
        cohort.records[i].label.value
        if cohort.records[i].label is not None
        else None
        for i in ids
    ]
    labels = (
        np.array([float(v) for v in label_values])
        if all(v is not None for v in label_values)
        else None
    )
    return FeatureMatrix(
        complex_ids=tuple(ids),
        column_names=tuple(names),
        values=values,
        labels=labels,
    )


# ---------------------------------------------------------------------------
# TSV round-trip
# ---------------------------------------------------------------------------


def write_feature_matrix(matrix: FeatureMatrix) -> str:
    """TSV: complex_id first, feature columns, label last (when present)."""
    header = ["complex_id", *matrix.column_names]
    if matrix.labels is not None:
        header.append("label")
    lines = ["\t".join(header)]
    for row, complex_id in enumerate(matrix.complex_ids):
        cells = [complex_id]
        cells.extend(format_float(v) for v in matrix.values[row])
        if matrix.labels is not None:
            cells.append(format_float(matrix.labels[row]))
        lines.append("\t".join(cells))
    return "\n".join(lines) + "\n"


def parse_feature_matrix(text: str) -> FeatureMatrix:
    lines = [ln for ln in text.split("\n") if ln]
    if not lines:
        raise SchemaError("empty feature matrix")
    header = lines[0].split("\t")
    if header[0] != "complex_id":
        raise SchemaError(
            f"feature matrix must start with 'complex_id', got {header[0]!r}"
        )
    has_labels = bool(header[1:]) and header[-1] == "label"
    column_names = tuple(header[1:-1] if has_labels else header[1:])
    ids: list[str] = []
    rows: list[list[float]] = []
    labels: list[float] = []
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(header):
            raise SchemaError(
                f"line {lineno}: {len(cells)} cells, expected {len(header)}"
            )
        ids.append(cells[0])
        payload = cells[1:-1] if has_labels else cells[1:]
        try:
            rows.append([float(v) for v in payload])
            if has_labels:
                labels.append(float(cells[-1]))
        except ValueError as exc:
            raise SchemaError(f"line {lineno}: non-numeric cell") from exc
    return FeatureMatrix(
        complex_ids=tuple(ids),
        column_names=column_names,
        values=np.array(rows, dtype=np.float64)
        if rows
        else np.empty((0, len(column_names))),
        labels=np.array(labels) if has_labels else None,
    )
