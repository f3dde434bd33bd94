"""Structure/table parsing, serialization round-trips, and invariants."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affistack.errors import DataError, ParseError, SchemaError
from affistack.ingest import (
    ATOMIC_WEIGHTS,
    AffinityLabel,
    AssayMethod,
    Atom,
    BasePredictionTable,
    GroupTag,
    MeasureKind,
    Molecule,
    Partition,
    Pose,
    PoseSet,
    ScoringFunction,
    filter_general_set,
    format_float,
    merge_tables,
    molecular_weight,
    parse_labels,
    parse_partitions,
    parse_score_table,
    parse_sdf,
    write_labels,
    write_partitions,
    write_score_table,
    write_sdf,
)
from conftest import make_molecule

WATER_SDF = """water
  affistack

  3  2  0  0  0  0  0  0  0  0999 V2000
    0.0000    0.0000    0.0000 O   0  0  0  0  0  0  0  0  0  0  0  0
    0.9572    0.0000    0.0000 H   0  0  0  0  0  0  0  0  0  0  0  0
   -0.2400    0.9270    0.0000 H   0  0  0  0  0  0  0  0  0  0  0  0
  1  2  1  0
  1  3  1  0
M  END
$$$$
"""


class TestFormatFloat:
    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_round_trips_every_finite_float(self, value):
        assert float(format_float(value)) == value

    def test_shortest_form(self):
        assert format_float(3.0) == "3.0"
        assert format_float(0.1) == "0.1"


class TestParseSdf:
    def test_water_record(self):
        (mol,) = parse_sdf(WATER_SDF)
        assert mol.source_id == "water"
        assert [a.element for a in mol.atoms] == ["O", "H", "H"]
        assert len(mol.heavy_atoms) == 1
        assert mol.atoms[1].position == (0.9572, 0.0, 0.0)

    def test_multiple_records(self):
        mols = parse_sdf(WATER_SDF + WATER_SDF)
        assert len(mols) == 2

    def test_trailing_record_without_delimiter(self):
        text = WATER_SDF.rsplit("$$$$", 1)[0]
        assert len(parse_sdf(text)) == 1

    def test_rejects_v3000(self):
        bad = WATER_SDF.replace("V2000", "V3000")
        with pytest.raises(ParseError, match="V3000"):
            parse_sdf(bad)

    def test_rejects_atom_count_mismatch(self):
        # Declares 5 atoms but the record ends after 3 atom lines.
        truncated = (
            "water\n  affistack\n\n"
            "  5  0  0  0  0  0  0  0  0  0999 V2000\n"
            + "".join(
                f"    0.000{i}    0.0000    0.0000 O   0\n" for i in range(3)
            )
            + "$$$$\n"
        )
        with pytest.raises(ParseError, match="declares 5 atoms"):
            parse_sdf(truncated)

    def test_rejects_bond_lines_leaking_into_atoms(self):
        bad = WATER_SDF.replace("  3  2", "  5  2")
        with pytest.raises(ParseError):
            parse_sdf(bad)

    def test_rejects_empty_input(self):
        with pytest.raises(ParseError, match="no SDF records"):
            parse_sdf("\n\n")

    def test_rejects_garbage_coordinates(self):
        bad = WATER_SDF.replace("0.9572", "x.9572")
        with pytest.raises(ParseError):
            parse_sdf(bad)

    def test_write_parse_round_trip(self):
        mol = make_molecule(
            [("C", (1.2345, -2.5, 0.0)), ("N", (0.5, 0.25, -1.125)),
             ("H", (0.0, 0.0, 0.5))],
            source_id="roundtrip",
        )
        (back,) = parse_sdf(write_sdf([mol]))
        assert back.source_id == "roundtrip"
        assert [a.element for a in back.atoms] == ["C", "N", "H"]
        # write_sdf uses the format's %.4f cells; all inputs here are exact
        # in 4 decimals, so the round-trip must be exact.
        for a, b in zip(mol.atoms, back.atoms):
            assert a.position == b.position

    def test_write_sdf_has_no_timestamp(self):
        mol = make_molecule([("C", (0, 0, 0))])
        assert write_sdf([mol]) == write_sdf([mol])


class TestMolecule:
    def test_requires_heavy_atom(self):
        with pytest.raises(DataError, match="no heavy atoms"):
            make_molecule([("H", (0, 0, 0))])

    def test_heavy_coords_by_element(self):
        mol = make_molecule(
            [("C", (0, 0, 0)), ("O", (1, 0, 0)), ("C", (2, 0, 0)),
             ("H", (9, 9, 9))]
        )
        grouped = mol.heavy_coords_by_element
        assert sorted(grouped) == ["C", "O"]
        assert grouped["C"].shape == (2, 3)
        np.testing.assert_allclose(grouped["C"][1], [2, 0, 0])

    def test_molecular_weight_water(self):
        (mol,) = parse_sdf(WATER_SDF)
        # CIAAW standard weights: O 15.999 + 2 x H 1.008 = 18.015.
        assert molecular_weight(mol) == pytest.approx(18.015, abs=1e-12)

    def test_molecular_weight_unknown_element(self):
        mol = Molecule(
            atoms=(Atom(element="Xx", position=(0.0, 0.0, 0.0)),),
            source_id="bad",
        )
        with pytest.raises(DataError, match="unknown element"):
            molecular_weight(mol)

    def test_weights_table_spot_values(self):
        assert ATOMIC_WEIGHTS["C"] == 12.011
        assert ATOMIC_WEIGHTS["N"] == 14.007


class TestPoseSet:
    def _mol(self):
        return make_molecule([("C", (0, 0, 0))])

    def test_rejects_empty(self):
        with pytest.raises(DataError, match="empty pose set"):
            PoseSet("c1", ScoringFunction.SMINA, poses=())

    def test_rejects_rank_gap(self):
        poses = (
            Pose(rank=0, energy=-9.0, molecule=self._mol()),
            Pose(rank=2, energy=-8.0, molecule=self._mol()),
        )
        with pytest.raises(DataError, match="rank"):
            PoseSet("c1", ScoringFunction.SMINA, poses=poses)

    def test_rejects_decreasing_energy(self):
        poses = (
            Pose(rank=0, energy=-8.0, molecule=self._mol()),
            Pose(rank=1, energy=-9.0, molecule=self._mol()),
        )
        with pytest.raises(DataError, match="non-decreasing"):
            PoseSet("c1", ScoringFunction.SMINA, poses=poses)

    def test_failed_set_may_lack_molecules(self):
        poses = (Pose(rank=0, energy=-9.0, molecule=None),)
        ps = PoseSet("c1", ScoringFunction.SMINA, poses=poses, failed=True)
        assert ps.best.energy == -9.0

    def test_non_failed_set_requires_molecules(self):
        poses = (Pose(rank=0, energy=-9.0, molecule=None),)
        with pytest.raises(DataError, match="must carry molecules"):
            PoseSet("c1", ScoringFunction.SMINA, poses=poses)


class TestScoreTables:
    TEXT = (
        "complex_id\tm1|cv0\tm1|cv1\tm2|cv0\n"
        "c1\t1.5\t2.5\t3.5\n"
        "c2\t-1.0\t0.0\t1.0\n"
    )

    def test_parse_and_matrix(self):
        table = parse_score_table(self.TEXT, GroupTag.D1)
        assert table.group_tag is GroupTag.D1
        assert table.column_ids == ("m1|cv0", "m1|cv1", "m2|cv0")
        np.testing.assert_allclose(
            table.matrix(["c2", "c1"]),
            [[-1.0, 0.0, 1.0], [1.5, 2.5, 3.5]],
        )

    def test_matrix_missing_id(self):
        table = parse_score_table(self.TEXT, GroupTag.D1)
        with pytest.raises(DataError, match="nope"):
            table.matrix(["c1", "nope"])

    def test_round_trip(self):
        table = parse_score_table(self.TEXT, GroupTag.D1)
        again = parse_score_table(write_score_table(table), GroupTag.D1)
        assert again.column_ids == table.column_ids
        np.testing.assert_array_equal(
            again.matrix(sorted(again.rows)), table.matrix(sorted(table.rows))
        )

    def test_rejects_ragged_row(self):
        with pytest.raises(ParseError):
            parse_score_table(
                "complex_id\ta\tb\nc1\t1.0\n", GroupTag.D1
            )

    def test_rejects_duplicate_id(self):
        with pytest.raises(ParseError, match="duplicate"):
            parse_score_table(
                "complex_id\ta\nc1\t1.0\nc1\t2.0\n", GroupTag.D1
            )

    def test_merge_tables_concatenates_columns(self):
        t1 = parse_score_table("complex_id\ta\nc1\t1.0\nc2\t2.0\n", GroupTag.D1F)
        t2 = parse_score_table("complex_id\tb\tc\nc1\t3.0\t4.0\nc2\t5.0\t6.0\n",
                               GroupTag.D2F)
        merged = merge_tables([t1, t2])
        assert merged.column_ids == ("a", "b", "c")
        np.testing.assert_allclose(merged.matrix(["c1"]), [[1.0, 3.0, 4.0]])

    def test_merge_tables_requires_identical_ids(self):
        t1 = parse_score_table("complex_id\ta\nc1\t1.0\nc2\t2.0\n", GroupTag.D1F)
        t2 = parse_score_table("complex_id\tb\nc2\t3.0\n", GroupTag.D2F)
        with pytest.raises(SchemaError, match="disagree"):
            merge_tables([t1, t2])


class TestLabelsAndPartitions:
    def test_label_round_trip(self):
        labels = [
            AffinityLabel("c1", 5.25, MeasureKind.KD, AssayMethod.XRAY, 2012),
            AffinityLabel("c2", -1.5),
        ]
        parsed = parse_labels(write_labels(labels))
        assert parsed["c1"].year == 2012
        assert parsed["c1"].measure_kind is MeasureKind.KD
        assert parsed["c2"].measure_kind is MeasureKind.UNKNOWN
        assert parsed["c2"].year is None
        assert parsed["c2"].value == -1.5

    def test_label_header_is_strict(self):
        with pytest.raises(ParseError, match="header"):
            parse_labels("complex_id\tvalue\nc1\t1.0\n")

    def test_label_rejects_nonfinite(self):
        with pytest.raises(ParseError):
            parse_labels(
                "complex_id\tln_affinity\tmeasure_kind\tassay_method\tyear\n"
                "c1\tnan\t\t\t\n"
            )

    def test_partition_round_trip(self):
        parts = {"c1": Partition.TRAIN, "c2": Partition.CORESET}
        assert parse_partitions(write_partitions(parts)) == parts

    def test_partition_rejects_unknown(self):
        with pytest.raises(ParseError, match="unrecognized partition"):
            parse_partitions("complex_id\tpartition\nc1\tMYSTERY\n")


class TestGeneralSetFilter:
    @staticmethod
    def _label(cid, *, assay=AssayMethod.XRAY, kind=MeasureKind.KD, year=2010):
        return AffinityLabel(cid, 1.0, kind, assay, year)

    def test_five_rules_in_order(self):
        labels = [
            self._label("keep"),
            self._label("excluded"),
            self._label("nmr", assay=AssayMethod.NMR),
            self._label("ic50", kind=MeasureKind.IC50),
            self._label("old", year=2000),
            self._label("failed_dock"),
            self._label("no_dock"),
        ]
        predictions = {
            "keep": (-9.0, -8.0),
            "excluded": (-9.0, -8.0),
            "nmr": (-9.0, -8.0),
            "ic50": (-9.0, -8.0),
            "old": (-9.0, -8.0),
            "failed_dock": (0.0, -8.0),
        }
        kept = filter_general_set(labels, {"excluded"}, predictions)
        assert kept == ["keep"]

    def test_unknown_metadata_is_dropped(self):
        labels = [
            self._label("u1", assay=AssayMethod.UNKNOWN),
            self._label("u2", kind=MeasureKind.UNKNOWN),
            AffinityLabel("u3", 1.0, MeasureKind.KD, AssayMethod.XRAY, None),
        ]
        predictions = {c: (-1.0, -1.0) for c in ("u1", "u2", "u3")}
        assert filter_general_set(labels, set(), predictions) == []

    def test_idempotent_and_order_preserving(self):
        labels = [self._label(f"c{i}") for i in range(5)]
        predictions = {f"c{i}": (-1.0, -2.0) for i in range(5)}
        kept = filter_general_set(labels, {"c2"}, predictions)
        assert kept == ["c0", "c1", "c3", "c4"]
        again = filter_general_set(
            [lab for lab in labels if lab.complex_id in kept],
            {"c2"},
            predictions,
        )
        assert again == kept
