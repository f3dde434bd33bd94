"""Input parsing and chemical bookkeeping.

Everything the pipeline consumes from disk enters through this module:
ligand pose structures (SDF V2000), base-predictor score tables (TSV),
affinity labels and cohort metadata (TSV). Parsers validate eagerly and
raise :class:`~affistack.errors.ParseError` / :class:`DataError` with
record and line context; downstream code can assume records are well formed.

Serialization is deterministic: floats are written in their shortest
round-trip decimal form, so write -> parse -> write is byte-stable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DataError, ParseError, SchemaError

__all__ = [
    "ATOMIC_WEIGHTS",
    "AffinityLabel",
    "AssayMethod",
    "Atom",
    "BasePredictionTable",
    "Cohort",
    "CohortRecord",
    "GroupTag",
    "MeasureKind",
    "Molecule",
    "Partition",
    "Pose",
    "PoseSet",
    "ScoringFunction",
    "filter_general_set",
    "format_float",
    "merge_tables",
    "molecular_weight",
    "parse_labels",
    "parse_partitions",
    "parse_score_table",
    "parse_sdf",
    "write_labels",
    "write_partitions",
    "write_score_table",
    "write_sdf",
]

# IUPAC 2021 standard atomic weights (conventional values where an interval
# is published). Covers the elements that occur in small-molecule ligands
# plus common counterions and metals.
ATOMIC_WEIGHTS: dict[str, float] = {
    "H": 1.008,
    "He": 4.002602,
    "Li": 6.94,
    "Be": 9.0121831,
    "B": 10.81,
    "C": 12.011,
    "N": 14.007,
    "O": 15.999,
    "F": 18.998403163,
    "Ne": 20.1797,
    "Na": 22.98976928,
    "Mg": 24.305,
    "Al": 26.9815384,
    "Si": 28.085,
    "P": 30.973761998,
    "S": 32.06,
    "Cl": 35.45,
    "Ar": 39.95,
    "K": 39.0983,
    "Ca": 40.078,
    "Sc": 44.955907,
    "Ti": 47.867,
    "V": 50.9415,
    "Cr": 51.9961,
    "Mn": 54.938043,
    "Fe": 55.845,
    "Co": 58.933194,
    "Ni": 58.6934,
    "Cu": 63.546,
    "Zn": 65.38,
    "Ga": 69.723,
    "Ge": 72.630,
    "As": 74.921595,
    "Se": 78.971,
    "Br": 79.904,
    "Kr": 83.798,
    "Rb": 85.4678,
    "Sr": 87.62,
    "Y": 88.905838,
    "Zr": 91.224,
    "Nb": 92.90637,
    "Mo": 95.95,
    "Ru": 101.07,
    "Rh": 102.90549,
    "Pd": 106.42,
    "Ag": 107.8682,
    "Cd": 112.414,
    "In": 114.818,
    "Sn": 118.710,
    "Sb": 121.760,
    "Te": 127.60,
    "I": 126.90447,
    "Xe": 131.293,
    "Cs": 132.90545196,
    "Ba": 137.327,
    "W": 183.84,
    "Re": 186.207,
    "Os": 190.23,
    "Ir": 192.217,
    "Pt": 195.084,
    "Au": 196.966570,
    "Hg": 200.592,
    "Tl": 204.38,
    "Pb": 207.2,
    "Bi": 208.98040,
}


def format_float(value: float) -> str:
    """Shortest decimal string that round-trips to the same 64-bit float."""
    return repr(float(value))


def _parse_float(cell: str, *, line_no: int, what: str) -> float:
    try:
        value = float(cell)
    except ValueError as exc:
        raise ParseError(f"line {line_no}: non-numeric {what}: {cell!r}") from exc
    if not math.isfinite(value):
        raise ParseError(f"line {line_no}: non-finite {what}: {cell!r}")
    return value


# ---------------------------------------------------------------------------
# Molecules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Atom:
    """One atom: element symbol plus Cartesian coordinates in Angstroms."""

    element: str
    position: tuple[float, float, float]

    @property
    def is_hydrogen(self) -> bool:
        return self.element == "H"


@dataclass(frozen=True, eq=True)
class Molecule:
    """An ordered collection of atoms parsed from one structure record.

    All atoms are retained (hydrogens included) so molecular weight can be
    computed; geometric operations use :attr:`heavy_atoms`, the
    hydrogen-free view. A molecule must contain at least one heavy atom.
    """

    atoms: tuple[Atom, ...]
    source_id: str = ""

    def __post_init__(self) -> None:
        if not any(not a.is_hydrogen for a in self.atoms):
            raise DataError(
                f"molecule {self.source_id!r} has no heavy atoms"
            )
        for a in self.atoms:
            if not all(math.isfinite(c) for c in a.position):
                raise DataError(
                    f"molecule {self.source_id!r} has a non-finite coordinate"
                )

    @property
    def heavy_atoms(self) -> tuple[Atom, ...]:
        return tuple(a for a in self.atoms if not a.is_hydrogen)

    @cached_property
    def heavy_coords_by_element(self) -> dict[str, np.ndarray]:
        """Heavy-atom coordinates grouped by element, each an (k, 3) array."""
        grouped: dict[str, list[tuple[float, float, float]]] = {}
        for a in self.heavy_atoms:
            grouped.setdefault(a.element, []).append(a.position)
        return {
            el: np.asarray(pos, dtype=np.float64) for el, pos in grouped.items()
        }


def _normalize_element(symbol: str, *, line_no: int, record_index: int) -> str:
    sym = symbol.strip()
    if not sym:
        raise ParseError(
            f"record {record_index}, line {line_no}: empty element symbol"
        )
    canonical = sym[0].upper() + sym[1:].lower()
    if canonical not in ATOMIC_WEIGHTS:
        raise ParseError(
            f"record {record_index}, line {line_no}: "
            f"unknown element symbol {sym!r}"
        )
    return canonical


def _parse_atom_line(
    line: str, *, line_no: int, record_index: int
) -> Atom:
    # Fixed-width V2000 layout first (x,y,z in 10-char fields, symbol at
    # columns 32-34); fall back to whitespace splitting for writers that do
    # not pad fields.
    coords: tuple[float, float, float] | None = None
    symbol: str | None = None
    if len(line) >= 34:
        try:
            coords = (
                float(line[0:10]),
                float(line[10:20]),
                float(line[20:30]),
            )
            symbol = line[31:34]
        except ValueError:
            coords = None
    if coords is None:
        parts = line.split()
        if len(parts) < 4:
            raise ParseError(
                f"record {record_index}, line {line_no}: malformed atom line"
            )
        try:
            coords = (float(parts[0]), float(parts[1]), float(parts[2]))
        except ValueError as exc:
            raise ParseError(
                f"record {record_index}, line {line_no}: malformed atom line"
            ) from exc
        symbol = parts[3]
    if not all(math.isfinite(c) for c in coords):
        raise ParseError(
            f"record {record_index}, line {line_no}: non-finite coordinate"
        )
    element = _normalize_element(
        symbol or "", line_no=line_no, record_index=record_index
    )
    return Atom(element=element, position=coords)


def parse_sdf(text: str) -> list[Molecule]:
    """Parse one or more concatenated SDF V2000 records into Molecules.

    Records are separated by ``$$$$`` delimiter lines. Only the V2000
    connection-table dialect is accepted; V3000 input is rejected. Counts
    are read from the fixed-width counts line, so concatenated digit runs
    (e.g. atom count 123 followed by bond count 456 with no space) parse
    correctly.
    """
    lines = text.split("\n")
    records: list[tuple[int, list[str]]] = []  # (starting line number, lines)
    current: list[str] = []
    start = 1
    for idx, line in enumerate(lines, start=1):
        if line.strip() == "$$$$":
            records.append((start, current))
            current = []
            start = idx + 1
        else:
            current.append(line)
    if any(line.strip() for line in current):
        records.append((start, current))  # trailing record without delimiter

    molecules: list[Molecule] = []
    for record_index, (first_line_no, rec_lines) in enumerate(records, start=1):
        if len(rec_lines) < 4:
            raise ParseError(
                f"record {record_index}, line {first_line_no}: "
                "truncated record (no counts line)"
            )
        title = rec_lines[0].strip()
        counts_line_no = first_line_no + 3
        counts = rec_lines[3]
        if "V3000" in counts:
            raise ParseError(
                f"record {record_index}, line {counts_line_no}: "
                "V3000 connection tables are not supported (V2000 only)"
            )
        try:
            n_atoms = int(counts[0:3])
            int(counts[3:6])  # bond count; validated but unused
        except (ValueError, IndexError) as exc:
            raise ParseError(
                f"record {record_index}, line {counts_line_no}: "
                f"malformed counts line: {counts!r}"
            ) from exc
        if n_atoms < 1:
            raise ParseError(
                f"record {record_index}, line {counts_line_no}: "
                f"counts line declares {n_atoms} atoms"
            )
        atom_lines = rec_lines[4 : 4 + n_atoms]
        usable = [ln for ln in atom_lines if ln.strip()]
        if len(usable) < n_atoms:
            raise ParseError(
                f"record {record_index}, line {counts_line_no}: "
                f"counts line declares {n_atoms} atoms but the atom block "
                f"has {len(usable)} lines"
            )
        atoms = tuple(
            _parse_atom_line(
                ln,
                line_no=first_line_no + 4 + offset,
                record_index=record_index,
            )
            for offset, ln in enumerate(atom_lines)
        )
        molecules.append(Molecule(atoms=atoms, source_id=title))
    if not molecules:
        raise ParseError("no SDF records found")
    return molecules


def write_sdf(molecules: Iterable[Molecule]) -> str:
    """Serialize molecules as standard V2000 SDF records.

    Coordinates use the format's own %.4f precision; no bonds are written
    (geometry and elements are the only information this pipeline consumes).
    The program line is a constant, never a timestamp, so output is
    byte-stable across runs.
    """
    out: list[str] = []
    for mol in molecules:
        out.append(mol.source_id)
        out.append("  affistack")
        out.append("")
        out.append(f"{len(mol.atoms):3d}{0:3d}  0  0  0  0  0  0  0  0999 V2000")
        for atom in mol.atoms:
            x, y, z = atom.position
            out.append(
                f"{x:10.4f}{y:10.4f}{z:10.4f} {atom.element:<3s}"
                "0  0  0  0  0  0  0  0  0  0  0  0"
            )
        out.append("M  END")
        out.append("$$$$")
    return "\n".join(out) + "\n"


def molecular_weight(molecule: Molecule) -> float:
    """Sum of standard atomic weights over ALL atoms, hydrogens included."""
    if not molecule.atoms:
        raise DataError("cannot compute molecular weight of an empty molecule")
    total = 0.0
    for atom in molecule.atoms:
        try:
            total += ATOMIC_WEIGHTS[atom.element]
        except KeyError as exc:
            raise DataError(
                f"unknown element {atom.element!r} in molecule "
                f"{molecule.source_id!r}"
            ) from exc
    return total


# ---------------------------------------------------------------------------
# Poses
# ---------------------------------------------------------------------------


class ScoringFunction(str, Enum):
    SMINA = "smina"
    VINARDO = "vinardo"


@dataclass(frozen=True)
class Pose:
    rank: int
    energy: float
    molecule: Molecule | None


@dataclass(frozen=True)
class PoseSet:
    """Ranked docking poses for one complex under one scoring function.

    Ranks run 0..len-1 with non-decreasing energies (rank 0 is the best
    pose). ``failed=True`` marks upstream structure-generation failures:
    energies may still be recorded but molecules may be absent, and the
    pose filters take their sentinel paths without touching geometry.
    """

    complex_id: str
    scoring_function: ScoringFunction
    poses: tuple[Pose, ...]
    failed: bool = False

    def __post_init__(self) -> None:
        if not self.poses:
            raise DataError(
                f"complex {self.complex_id!r} ({self.scoring_function.value}): "
                "empty pose set"
            )
        for expected, pose in enumerate(self.poses):
            if pose.rank != expected:
                raise DataError(
                    f"complex {self.complex_id!r}: pose ranks must be "
                    f"0..{len(self.poses) - 1} in order, found rank "
                    f"{pose.rank} at position {expected}"
                )
        energies = [p.energy for p in self.poses]
        if any(b < a for a, b in zip(energies, energies[1:])):
            raise DataError(
                f"complex {self.complex_id!r}: pose energies must be "
                "non-decreasing in rank"
            )
        if not self.failed and any(p.molecule is None for p in self.poses):
            raise DataError(
                f"complex {self.complex_id!r}: poses of a non-failed set "
                "must carry molecules"
            )

    @property
    def best(self) -> Pose:
        return self.poses[0]


# ---------------------------------------------------------------------------
# Score tables
# ---------------------------------------------------------------------------


class GroupTag(str, Enum):
    D1 = "D1"
    D2 = "D2"
    D3 = "D3"
    D1F = "D1F"
    D2F = "D2F"
    DOCKING_SMINA = "DOCKING_SMINA"
    DOCKING_VINARDO = "DOCKING_VINARDO"
    OTHER = "OTHER"


@dataclass
class BasePredictionTable:
    """Per-complex prediction vectors from one family of base predictors."""

    group_tag: GroupTag
    column_ids: tuple[str, ...]
    rows: dict[str, np.ndarray]

    def __post_init__(self) -> None:
        if not self.column_ids:
            raise SchemaError(f"table {self.group_tag.value}: no columns")
        if len(set(self.column_ids)) != len(self.column_ids):
            raise SchemaError(
                f"table {self.group_tag.value}: duplicate column ids"
            )
        width = len(self.column_ids)
        for complex_id, vector in self.rows.items():
            if vector.shape != (width,):
                raise SchemaError(
                    f"table {self.group_tag.value}: row {complex_id!r} has "
                    f"width {vector.shape}, expected {width}"
                )
            if not np.all(np.isfinite(vector)):
                raise DataError(
                    f"table {self.group_tag.value}: row {complex_id!r} "
                    "contains a non-finite value"
                )

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def matrix(self, ids: Sequence[str]) -> np.ndarray:
        """Stack the rows for ``ids`` (in that order) into an (n, p) array."""
        missing = [i for i in ids if i not in self.rows]
        if missing:
            raise DataError(
                f"table {self.group_tag.value}: missing rows for complexes "
                f"{_preview(missing)}"
            )
        if not ids:
            return np.empty((0, len(self.column_ids)))
        return np.stack([self.rows[i] for i in ids])

    def subset(self, ids: Sequence[str]) -> "BasePredictionTable":
        matrix = self.matrix(ids)  # validates presence
        return BasePredictionTable(
            group_tag=self.group_tag,
            column_ids=self.column_ids,
            rows={i: matrix[k] for k, i in enumerate(ids)},
        )


def _preview(ids: Sequence[str], limit: int = 8) -> str:
    shown = ", ".join(repr(i) for i in ids[:limit])
    if len(ids) > limit:
        shown += f", ... ({len(ids)} total)"
    return shown


def parse_score_table(text: str, schema: GroupTag | str) -> BasePredictionTable:
    """Parse a TSV score table: header ``complex_id<TAB>col1...``, float rows."""
    group_tag = GroupTag(schema)
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ParseError("score table is empty (no header row)")
    header = lines[0].split("\t")
    if header[0] != "complex_id":
        raise ParseError(
            "score table header must start with 'complex_id', got "
            f"{header[0]!r}"
        )
    column_ids = tuple(header[1:])
    if not column_ids:
        raise ParseError("score table declares no prediction columns")
    rows: dict[str, np.ndarray] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        if line == "":
            raise ParseError(f"line {line_no}: blank row in score table")
        cells = line.split("\t")
        if len(cells) != len(column_ids) + 1:
            raise ParseError(
                f"line {line_no}: ragged row ({len(cells)} cells, expected "
                f"{len(column_ids) + 1})"
            )
        complex_id = cells[0]
        if complex_id in rows:
            raise ParseError(
                f"line {line_no}: duplicate complex_id {complex_id!r}"
            )
        values = np.array(
            [
                _parse_float(c, line_no=line_no, what="score cell")
                for c in cells[1:]
            ],
            dtype=np.float64,
        )
        rows[complex_id] = values
    return BasePredictionTable(
        group_tag=group_tag, column_ids=column_ids, rows=rows
    )


def write_score_table(table: BasePredictionTable) -> str:
    lines = ["\t".join(("complex_id",) + table.column_ids)]
    for complex_id, vector in table.rows.items():
        lines.append(
            "\t".join([complex_id] + [format_float(v) for v in vector])
        )
    return "\n".join(lines) + "\n"


def merge_tables(
    tables: Sequence[BasePredictionTable],
    group_tag: GroupTag = GroupTag.OTHER,
) -> BasePredictionTable:
    """Concatenate tables column-wise over an identical complex-id set."""
    if not tables:
        raise SchemaError("cannot merge an empty list of tables")
    id_set = set(tables[0].rows)
    for table in tables[1:]:
        if set(table.rows) != id_set:
            diff = sorted(set(table.rows) ^ id_set)
            raise SchemaError(
                f"tables disagree on complex ids; mismatched: {_preview(diff)}"
            )
    column_ids = tuple(c for t in tables for c in t.column_ids)
    rows = {
        complex_id: np.concatenate([t.rows[complex_id] for t in tables])
        for complex_id in tables[0].rows
    }
    return BasePredictionTable(
        group_tag=group_tag, column_ids=column_ids, rows=rows
    )


# ---------------------------------------------------------------------------
# Labels and cohort metadata
# ---------------------------------------------------------------------------


class MeasureKind(str, Enum):
    KD = "Kd"
    KI = "Ki"
    IC50 = "IC50"
    UNKNOWN = "unknown"


class AssayMethod(str, Enum):
    XRAY = "XRAY"
    NMR = "NMR"
    UNKNOWN = "unknown"


class Partition(str, Enum):
    TRAIN = "TRAIN"
    CORESET = "CORESET"
    GENERALSET = "GENERALSET"
    SCREEN = "SCREEN"


@dataclass(frozen=True)
class AffinityLabel:
    """Experimental affinity as an opaque ln(Kd or Ki) value plus metadata."""

    complex_id: str
    value: float
    measure_kind: MeasureKind = MeasureKind.UNKNOWN
    assay_method: AssayMethod = AssayMethod.UNKNOWN
    year: int | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.value):
            raise DataError(
                f"complex {self.complex_id!r}: non-finite affinity value"
            )


_LABEL_HEADER = ("complex_id", "ln_affinity", "measure_kind", "assay_method", "year")


def parse_labels(text: str) -> dict[str, AffinityLabel]:
    """Parse the affinity-label TSV; empty metadata cells mean unknown."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or tuple(lines[0].split("\t")) != _LABEL_HEADER:
        raise ParseError(
            "label table header must be exactly: " + "\t".join(_LABEL_HEADER)
        )
    measure_lookup = {m.value.lower(): m for m in MeasureKind}
    assay_lookup = {a.value.lower(): a for a in AssayMethod}
    labels: dict[str, AffinityLabel] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != len(_LABEL_HEADER):
            raise ParseError(
                f"line {line_no}: ragged row ({len(cells)} cells, expected "
                f"{len(_LABEL_HEADER)})"
            )
        complex_id, value_cell, kind_cell, assay_cell, year_cell = cells
        if complex_id in labels:
            raise ParseError(
                f"line {line_no}: duplicate complex_id {complex_id!r}"
            )
        value = _parse_float(value_cell, line_no=line_no, what="ln_affinity")
        kind_key = kind_cell.strip().lower()
        if kind_key == "":
            kind = MeasureKind.UNKNOWN
        elif kind_key in measure_lookup:
            kind = measure_lookup[kind_key]
        else:
            raise ParseError(
                f"line {line_no}: unrecognized measure_kind {kind_cell!r}"
            )
        assay_key = assay_cell.strip().lower()
        if assay_key == "":
            assay = AssayMethod.UNKNOWN
        elif assay_key in assay_lookup:
            assay = assay_lookup[assay_key]
        else:
            raise ParseError(
                f"line {line_no}: unrecognized assay_method {assay_cell!r}"
            )
        year_text = year_cell.strip()
        if year_text == "":
            year = None
        else:
            try:
                year = int(year_text)
            except ValueError as exc:
                raise ParseError(
                    f"line {line_no}: unparseable year {year_cell!r}"
                ) from exc
        labels[complex_id] = AffinityLabel(
            complex_id=complex_id,
            value=value,
            measure_kind=kind,
            assay_method=assay,
            year=year,
        )
    return labels


def write_labels(labels: Iterable[AffinityLabel]) -> str:
    lines = ["\t".join(_LABEL_HEADER)]
    for label in labels:
        lines.append(
            "\t".join(
                (
                    label.complex_id,
                    format_float(label.value),
                    "" if label.measure_kind is MeasureKind.UNKNOWN
                    else label.measure_kind.value,
                    "" if label.assay_method is AssayMethod.UNKNOWN
                    else label.assay_method.value,
                    "" if label.year is None else str(label.year),
                )
            )
        )
    return "\n".join(lines) + "\n"


def parse_partitions(text: str) -> dict[str, Partition]:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or tuple(lines[0].split("\t")) != ("complex_id", "partition"):
        raise ParseError(
            "partition table header must be exactly: complex_id\tpartition"
        )
    partitions: dict[str, Partition] = {}
    for line_no, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != 2:
            raise ParseError(f"line {line_no}: ragged row")
        complex_id, part_cell = cells
        if complex_id in partitions:
            raise ParseError(
                f"line {line_no}: duplicate complex_id {complex_id!r}"
            )
        try:
            partitions[complex_id] = Partition(part_cell.strip().upper())
        except ValueError as exc:
            raise ParseError(
                f"line {line_no}: unrecognized partition {part_cell!r}"
            ) from exc
    return partitions


def write_partitions(partitions: Mapping[str, Partition]) -> str:
    lines = ["complex_id\tpartition"]
    for complex_id, partition in partitions.items():
        lines.append(f"{complex_id}\t{partition.value}")
    return "\n".join(lines) + "\n"


def filter_general_set(
    labels: Iterable[AffinityLabel] | Mapping[str, AffinityLabel],
    exclusions: set[str],
    predictions: Mapping[str, tuple[float, float]],
) -> list[str]:
    """Apply the five supplementary-cohort admission rules, in order.

    1. drop ids present in ``exclusions``;
    2. drop entries not assayed by X-ray crystallography (NMR is dropped,
       and so is unknown assay metadata — conservative exclusion);
    3. drop IC50-measured entries (unknown measure kind is dropped too);
    4. keep only entries published after the year 2000 (unknown year drops);
    5. drop entries whose recorded docking prediction for either scoring
       function is exactly zero (the upstream encoding of a failed run);
       entries missing from ``predictions`` are dropped.

    Returns surviving ids in input order. The output is a subset of the
    input ids and the filter is idempotent.
    """
    if isinstance(labels, Mapping):
        labels = labels.values()
    kept: list[str] = []
    for label in labels:
        if label.complex_id in exclusions:
            continue
        if label.assay_method is not AssayMethod.XRAY:
            continue
        if label.measure_kind not in (MeasureKind.KD, MeasureKind.KI):
            continue
        if label.year is None or label.year <= 2000:
            continue
        scores = predictions.get(label.complex_id)
        if scores is None or scores[0] == 0.0 or scores[1] == 0.0:
            continue
        kept.append(label.complex_id)
    return kept


# ---------------------------------------------------------------------------
# Cohort
# ---------------------------------------------------------------------------


@dataclass
class CohortRecord:
    """One complex: label, poses per scoring function, structures, partition.

    ``filter_results`` is populated by the pose-filtering stage, keyed by
    filter mode; it starts empty.
    """

    complex_id: str
    partition: Partition
    label: AffinityLabel | None
    pose_sets: dict[ScoringFunction, PoseSet]
    experimental_pose: Molecule | None = None
    ligand: Molecule | None = None
    filter_results: dict = field(default_factory=dict)

    def pose_set(self, scoring_function: ScoringFunction) -> PoseSet:
        try:
            return self.pose_sets[scoring_function]
        except KeyError as exc:
            raise DataError(
                f"complex {self.complex_id!r}: no pose set for "
                f"{scoring_function.value}"
            ) from exc

    def weight_molecule(self) -> Molecule:
        """The molecule used for MW: ligand, else experimental, else a pose."""
        if self.ligand is not None:
            return self.ligand
        if self.experimental_pose is not None:
            return self.experimental_pose
        for sf in (ScoringFunction.SMINA, ScoringFunction.VINARDO):
            pose_set = self.pose_sets.get(sf)
            if pose_set is not None:
                for pose in pose_set.poses:
                    if pose.molecule is not None:
                        return pose.molecule
        raise SchemaError(
            f"complex {self.complex_id!r}: cannot compute feature 'mw' "
            "(no ligand, experimental, or pose structure available)"
        )


@dataclass
class Cohort:
    """Keyed complex records plus the shared base-prediction tables."""

    records: dict[str, CohortRecord]
    base_tables: dict[str, BasePredictionTable] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for complex_id, record in self.records.items():
            if record.complex_id != complex_id:
                raise DataError(
                    f"cohort key {complex_id!r} does not match record id "
                    f"{record.complex_id!r}"
                )

    def ids(self, partition: Partition | None = None) -> list[str]:
        if partition is None:
            return list(self.records)
        return [
            i for i, r in self.records.items() if r.partition is partition
        ]

    def table(self, name: str) -> BasePredictionTable:
        try:
            return self.base_tables[name]
        except KeyError as exc:
            raise DataError(
                f"cohort has no base-prediction table {name!r} "
                f"(available: {sorted(self.base_tables)})"
            ) from exc
