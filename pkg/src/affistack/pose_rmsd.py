"""Symmetric element-typed RMSD and the two pose-filtering procedures.

The distance between two conformers of the same ligand is computed without
any alignment: for each heavy atom of one structure, take the squared
distance to the nearest heavy atom *of the same element* in the other
structure, average, and take the square root. The symmetric measure is the
max of the two directed values. Two filters consume it:

* the experimental filter keeps, among poses within ``cutoff`` of a
  reference structure, the lowest-energy one (falling back to the rank-0
  pose with the sentinel RMSD 100.0 when nothing qualifies or generation
  failed upstream);
* the consensus filter scans all rank pairs between two scoring functions'
  pose sets and keeps the qualifying pair with the lowest rank sum,
  breaking ties by lower pair RMSD (same sentinel fallback).

Training records are then dropped or kept by comparing the recorded RMSD
against a coarse cutoff; evaluation partitions are never filtered.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Mapping

import numpy as np

from .errors import DataError, ParseError
from .ingest import (
    Cohort,
    CohortRecord,
    Molecule,
    Partition,
    PoseSet,
    ScoringFunction,
    format_float,
)

__all__ = [
    "FilterMode",
    "FilterResult",
    "RmsdFilterMode",
    "SELECTION_CUTOFF",
    "SENTINEL_RMSD",
    "SelectedPose",
    "TRAINING_CUTOFFS",
    "apply_rmsd_cutoff",
    "asymmetric_rmsd",
    "consensus_filter",
    "experimental_filter",
    "filter_cohort",
    "filter_complex",
    "parse_filter_table",
    "select_consensus_pair",
    "symmetric_rmsd",
    "write_filter_table",
]

SENTINEL_RMSD = 100.0
SELECTION_CUTOFF = 3.0
TRAINING_CUTOFFS = (101.0, 100.0, 3.0)


class FilterMode(str, Enum):
    """Which pose-agreement reference is used, with its file-name shorthand."""

    EXPERIMENTAL = "EXPERIMENTAL"
    CONSENSUS = "CONSENSUS"

    @property
    def tag(self) -> str:
        return "RelExpt" if self is FilterMode.EXPERIMENTAL else "VvS"

    @classmethod
    def from_tag(cls, text: str) -> "FilterMode":
        lookup = {
            "relexpt": cls.EXPERIMENTAL,
            "experimental": cls.EXPERIMENTAL,
            "vvs": cls.CONSENSUS,
            "consensus": cls.CONSENSUS,
        }
        try:
            return lookup[text.strip().lower()]
        except KeyError as exc:
            raise DataError(f"unknown filter mode {text!r}") from exc


@dataclass(frozen=True)
class RmsdFilterMode:
    """A filter mode plus the training-set cutoff applied downstream."""

    mode: FilterMode
    cutoff: float

    def __post_init__(self) -> None:
        if self.cutoff not in TRAINING_CUTOFFS:
            raise DataError(
                f"cutoff must be one of {TRAINING_CUTOFFS}, got {self.cutoff}"
            )

    @property
    def tag(self) -> str:
        return self.mode.tag


@dataclass(frozen=True)
class SelectedPose:
    """The pose a filter chose for one complex and one scoring function."""

    complex_id: str
    scoring_function: ScoringFunction
    chosen_rank: int
    energy: float
    rmsd: float


@dataclass(frozen=True)
class FilterResult:
    """Per-complex outcome of a filter mode: one pose per scoring function.

    ``rmsd`` is the record-level value the training cutoff is compared
    against: the pair RMSD for consensus mode, and the max of the two
    per-tool RMSDs for experimental mode (so the record survives only if
    both tools produced a sub-cutoff pose, and a sentinel on either side
    makes the record a sentinel record).
    """

    complex_id: str
    mode: FilterMode
    smina: SelectedPose
    vinardo: SelectedPose
    rmsd: float


# ---------------------------------------------------------------------------
# RMSD
# ---------------------------------------------------------------------------


def asymmetric_rmsd(a: Molecule, b: Molecule) -> float:
    """Directed RMSD: sqrt(mean over a's heavy atoms of the squared distance
    to the nearest same-element heavy atom of b)."""
    by_element_a = a.heavy_coords_by_element
    by_element_b = b.heavy_coords_by_element
    total = 0.0
    count = 0
    for element, coords_a in by_element_a.items():
        coords_b = by_element_b.get(element)
        if coords_b is None:
            raise DataError(
                f"element {element!r} of {a.source_id!r} has no heavy-atom "
                f"counterpart in {b.source_id!r}"
            )
        # (na, nb) squared distances; nearest same-element neighbor per row.
        diff = coords_a[:, None, :] - coords_b[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        total += float(np.min(sq, axis=1).sum())
        count += coords_a.shape[0]
    return float(np.sqrt(total / count))


def symmetric_rmsd(a: Molecule, b: Molecule) -> float:
    """max of the two directed RMSDs; symmetric in its arguments."""
    return max(asymmetric_rmsd(a, b), asymmetric_rmsd(b, a))


# ---------------------------------------------------------------------------
# Filters
# ---------------------------------------------------------------------------


def _sentinel_pose(pose_set: PoseSet) -> SelectedPose:
    best = pose_set.best
    return SelectedPose(
        complex_id=pose_set.complex_id,
        scoring_function=pose_set.scoring_function,
        chosen_rank=best.rank,
        energy=best.energy,
        rmsd=SENTINEL_RMSD,
    )


def experimental_filter(
    poses: PoseSet,
    expt: Molecule | None,
    cutoff: float = SELECTION_CUTOFF,
) -> SelectedPose:
    """Pick the lowest-energy pose within ``cutoff`` of the reference.

    Poses are scanned in rank order, so an exact energy tie resolves to the
    lower rank. When no pose qualifies, or the reference structure is
    absent, or the pose set is flagged failed, the rank-0 (lowest-energy)
    pose is returned with the sentinel RMSD 100.0.
    """
    if poses.failed or expt is None:
        return _sentinel_pose(poses)
    best: tuple[float, int, float] | None = None  # (energy, rank, rmsd)
    for pose in poses.poses:
        if pose.molecule is None:
            raise DataError(
                f"complex {poses.complex_id!r}: pose {pose.rank} has no "
                "structure"
            )
        rmsd = symmetric_rmsd(pose.molecule, expt)
        if rmsd < cutoff and (best is None or pose.energy < best[0]):
            best = (pose.energy, pose.rank, rmsd)
    if best is None:
        return _sentinel_pose(poses)
    energy, rank, rmsd = best
    return SelectedPose(
        complex_id=poses.complex_id,
        scoring_function=poses.scoring_function,
        chosen_rank=rank,
        energy=energy,
        rmsd=rmsd,
    )


def select_consensus_pair(
    rmsd_matrix: np.ndarray, cutoff: float = SELECTION_CUTOFF
) -> tuple[int, int, float] | None:
    """Pure selection rule over a precomputed (n_smina, n_vinardo) RMSD grid.

    Among entries strictly below ``cutoff``, minimize (rank sum, RMSD); any
    remaining tie resolves to the lexicographically smallest (i, j), which
    makes the result independent of evaluation order. Returns None when no
    entry qualifies.
    """
    matrix = np.asarray(rmsd_matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.size == 0:
        raise DataError("rmsd matrix must be 2-D and non-empty")
    best: tuple[int, float, int, int] | None = None
    for i in range(matrix.shape[0]):
        for j in range(matrix.shape[1]):
            value = float(matrix[i, j])
            if value >= cutoff:
                continue
            key = (i + j, value, i, j)
            if best is None or key < best:
                best = key
    if best is None:
        return None
    rank_sum, value, i, j = best
    return i, j, value


def consensus_filter(
    smina: PoseSet,
    vinardo: PoseSet,
    cutoff: float = SELECTION_CUTOFF,
) -> tuple[SelectedPose, SelectedPose, float]:
    """Pick the geometrically agreeing pose pair with the lowest rank sum.

    All rank pairs between the two pose sets are scored by symmetric RMSD;
    pairs below ``cutoff`` compete by (rank sum, then RMSD). If no pair
    qualifies — or either pose set is flagged failed — both rank-0 poses
    are returned with pair RMSD 100.0.
    """
    if smina.complex_id != vinardo.complex_id:
        raise DataError(
            f"pose sets belong to different complexes: {smina.complex_id!r} "
            f"vs {vinardo.complex_id!r}"
        )
    if smina.failed or vinardo.failed:
        return _sentinel_pose(smina), _sentinel_pose(vinardo), SENTINEL_RMSD
    matrix = np.empty((len(smina.poses), len(vinardo.poses)))
    for i, pose_s in enumerate(smina.poses):
        for j, pose_v in enumerate(vinardo.poses):
            assert pose_s.molecule is not None and pose_v.molecule is not None
            matrix[i, j] = symmetric_rmsd(pose_s.molecule, pose_v.molecule)
    choice = select_consensus_pair(matrix, cutoff)
    if choice is None:
        return _sentinel_pose(smina), _sentinel_pose(vinardo), SENTINEL_RMSD
    i, j, pair_rmsd = choice
    selected_smina = SelectedPose(
        complex_id=smina.complex_id,
        scoring_function=smina.scoring_function,
        chosen_rank=i,
        energy=smina.poses[i].energy,
        rmsd=pair_rmsd,
    )
    selected_vinardo = SelectedPose(
        complex_id=vinardo.complex_id,
        scoring_function=vinardo.scoring_function,
        chosen_rank=j,
        energy=vinardo.poses[j].energy,
        rmsd=pair_rmsd,
    )
    return selected_smina, selected_vinardo, pair_rmsd


def filter_complex(record: CohortRecord, mode: FilterMode) -> FilterResult:
    """Run one filter mode for one complex, producing its FilterResult."""
    smina_set = record.pose_set(ScoringFunction.SMINA)
    vinardo_set = record.pose_set(ScoringFunction.VINARDO)
    if mode is FilterMode.CONSENSUS:
        sel_s, sel_v, pair_rmsd = consensus_filter(smina_set, vinardo_set)
        return FilterResult(
            complex_id=record.complex_id,
            mode=mode,
            smina=sel_s,
            vinardo=sel_v,
            rmsd=pair_rmsd,
        )
    sel_s = experimental_filter(smina_set, record.experimental_pose)
    sel_v = experimental_filter(vinardo_set, record.experimental_pose)
    return FilterResult(
        complex_id=record.complex_id,
        mode=mode,
        smina=sel_s,
        vinardo=sel_v,
        rmsd=max(sel_s.rmsd, sel_v.rmsd),
    )


def filter_cohort(cohort: Cohort, mode: FilterMode) -> dict[str, FilterResult]:
    """Compute and attach filter results for every record; returns them."""
    results: dict[str, FilterResult] = {}
    for complex_id, record in cohort.records.items():
        result = filter_complex(record, mode)
        record.filter_results[mode] = result
        results[complex_id] = result
    return results


def apply_rmsd_cutoff(cohort: Cohort, mode: RmsdFilterMode) -> Cohort:
    """Drop TRAIN records whose recorded RMSD is not strictly below cutoff.

    Records of every other partition pass through untouched — evaluation
    sets are never filtered. Every TRAIN record must already carry a filter
    result for ``mode.mode``.
    """
    survivors: dict[str, CohortRecord] = {}
    missing: list[str] = []
    for complex_id, record in cohort.records.items():
        if record.partition is not Partition.TRAIN:
            survivors[complex_id] = record
            continue
        result = record.filter_results.get(mode.mode)
        if result is None:
            missing.append(complex_id)
            continue
        if result.rmsd < mode.cutoff:
            survivors[complex_id] = record
    if missing:
        raise DataError(
            "TRAIN records missing a filter result for mode "
            f"{mode.mode.value}: {', '.join(repr(i) for i in missing[:8])}"
            + (f", ... ({len(missing)} total)" if len(missing) > 8 else "")
        )
    return replace(cohort, records=survivors)


# ---------------------------------------------------------------------------
# Filter-result tables
# ---------------------------------------------------------------------------

_FILTER_HEADER = (
    "complex_id",
    "mode",
    "cutoff",
    "smina_rank",
    "smina_energy",
    "vinardo_rank",
    "vinardo_energy",
    "rmsd",
)


def write_filter_table(
    results: Iterable[FilterResult], selection_cutoff: float = SELECTION_CUTOFF
) -> str:
    lines = ["\t".join(_FILTER_HEADER)]
    for r in results:
        lines.append(
            "\t".join(
                (
                    r.complex_id,
                    r.mode.tag,
                    format_float(selection_cutoff),
                    str(r.smina.chosen_rank),
                    format_float(r.smina.energy),
                    str(r.vinardo.chosen_rank),
                    format_float(r.vinardo.energy),
                    format_float(r.rmsd),
                )
            )
        )
    return "\n".join(lines) + "\n"


def parse_filter_table(text: str) -> dict[str, FilterResult]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or tuple(lines[0].split("\t")) != _FILTER_HEADER:
        raise ParseError(
            "filter table header must be exactly: " + "\t".join(_FILTER_HEADER)
        )
    results: dict[str, FilterResult] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(_FILTER_HEADER):
            raise ParseError(f"line {line_no}: ragged row")
        complex_id = cells[0]
        if complex_id in results:
            raise ParseError(
                f"line {line_no}: duplicate complex_id {complex_id!r}"
            )
        mode = FilterMode.from_tag(cells[1])
        try:
            smina_rank = int(cells[3])
            vinardo_rank = int(cells[5])
        except ValueError as exc:
            raise ParseError(f"line {line_no}: non-integer rank") from exc
        smina_energy = float(cells[4])
        vinardo_energy = float(cells[6])
        rmsd = float(cells[7])
        results[complex_id] = FilterResult(
            complex_id=complex_id,
            mode=mode,
            smina=SelectedPose(
                complex_id=complex_id,
                scoring_function=ScoringFunction.SMINA,
                chosen_rank=smina_rank,
                energy=smina_energy,
                rmsd=rmsd,
            ),
            vinardo=SelectedPose(
                complex_id=complex_id,
                scoring_function=ScoringFunction.VINARDO,
                chosen_rank=vinardo_rank,
                energy=vinardo_energy,
                rmsd=rmsd,
            ),
            rmsd=rmsd,
        )
    return results
