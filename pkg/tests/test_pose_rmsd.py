"""Pose filters vs independent brute-force oracles."""

from __future__ import annotations

import math

import numpy as np
import pytest

from affistack.errors import DataError
from affistack.ingest import (
    Cohort,
    CohortRecord,
    Partition,
    Pose,
    PoseSet,
    ScoringFunction,
)
from affistack.pose_rmsd import (
    SELECTION_CUTOFF,
    SENTINEL_RMSD,
    TRAINING_CUTOFFS,
    FilterMode,
    RmsdFilterMode,
    apply_rmsd_cutoff,
    asymmetric_rmsd,
    consensus_filter,
    experimental_filter,
    filter_complex,
    parse_filter_table,
    select_consensus_pair,
    symmetric_rmsd,
    write_filter_table,
)
from conftest import make_molecule, make_pose_set, random_molecule


# ---------------------------------------------------------------------------
# Independent oracles (plain Python, no numpy vectorization)
# ---------------------------------------------------------------------------


def oracle_asymmetric(a, b):
    """Directed nearest-same-element RMSD by explicit loops."""
    b_heavy = [(at.element, at.position) for at in b.heavy_atoms]
    total = 0.0
    count = 0
    for atom in a.heavy_atoms:
        candidates = [
            pos for el, pos in b_heavy if el == atom.element
        ]
        if not candidates:
            raise DataError("element missing in counterpart")
        best = min(
            sum((p - q) ** 2 for p, q in zip(atom.position, pos))
            for pos in candidates
        )
        total += best
        count += 1
    return math.sqrt(total / count)


def oracle_symmetric(a, b):
    return max(oracle_asymmetric(a, b), oracle_asymmetric(b, a))


def oracle_select_pair(matrix, cutoff):
    """Exhaustive enumeration of the consensus selection rule."""
    best = None
    for i in range(len(matrix)):
        for j in range(len(matrix[0])):
            value = matrix[i][j]
            if value >= cutoff:
                continue
            key = (i + j, value, i, j)
            if best is None or key < best:
                best = key
    if best is None:
        return None
    rank_sum, value, i, j = best
    return i, j, value


def compatible_pair(rng, max_atoms=30):
    """Two random molecules sharing an element multiset (both directions
    of the asymmetric RMSD are defined)."""
    a = random_molecule(rng, max_atoms=max_atoms, source_id="a")
    shuffled = list(a.atoms)
    rng.shuffle(shuffled)
    b = make_molecule(
        [(at.element, tuple(rng.uniform(-8, 8, 3))) for at in shuffled],
        source_id="b",
    )
    return a, b


# ---------------------------------------------------------------------------
# RMSD
# ---------------------------------------------------------------------------


class TestRmsd:
    def test_single_atom_distance(self):
        a = make_molecule([("C", (0, 0, 0))])
        b = make_molecule([("C", (3, 4, 0))])
        assert symmetric_rmsd(a, b) == pytest.approx(5.0, abs=1e-12)

    def test_two_atom_hand_value(self):
        a = make_molecule([("C", (0, 0, 0)), ("C", (10, 0, 0))])
        b = make_molecule([("C", (0, 1, 0)), ("C", (10, 2, 0))])
        assert symmetric_rmsd(a, b) == pytest.approx(math.sqrt(2.5), abs=1e-12)

    def test_directional_asymmetry(self):
        a = make_molecule([("C", (0, 0, 0))])
        b = make_molecule([("C", (0, 0, 0)), ("C", (4, 0, 0))])
        assert asymmetric_rmsd(a, b) == pytest.approx(0.0, abs=1e-12)
        assert asymmetric_rmsd(b, a) == pytest.approx(math.sqrt(8.0), abs=1e-12)
        assert symmetric_rmsd(a, b) == pytest.approx(math.sqrt(8.0), abs=1e-12)

    def test_identical_molecule_is_zero(self):
        a = make_molecule([("C", (1, 2, 3)), ("N", (0, 0, 0))])
        assert symmetric_rmsd(a, a) == 0.0

    def test_hydrogens_ignored(self):
        a = make_molecule([("C", (0, 0, 0)), ("H", (50, 50, 50))])
        b = make_molecule([("C", (0, 0, 0)), ("H", (-50, 0, 0))])
        assert symmetric_rmsd(a, b) == 0.0

    def test_element_missing_raises(self):
        a = make_molecule([("C", (0, 0, 0)), ("N", (1, 0, 0))])
        b = make_molecule([("C", (0, 0, 0))])
        with pytest.raises(DataError, match="no heavy-atom counterpart"):
            symmetric_rmsd(a, b)
        # ... in either direction
        with pytest.raises(DataError, match="no heavy-atom counterpart"):
            symmetric_rmsd(b, a)

    def test_matches_bruteforce_oracle(self, rng):
        for _ in range(40):
            a, b = compatible_pair(rng)
            assert symmetric_rmsd(a, b) == pytest.approx(
                oracle_symmetric(a, b), abs=1e-9
            )

    def test_symmetry(self, rng):
        for _ in range(10):
            a, b = compatible_pair(rng, max_atoms=12)
            assert symmetric_rmsd(a, b) == symmetric_rmsd(b, a)


# ---------------------------------------------------------------------------
# Experimental filter
# ---------------------------------------------------------------------------


def _pose_at(distance, rank):
    return make_molecule([("C", (float(distance), 0.0, 0.0))],
                         source_id=f"pose{rank}")


REFERENCE = make_molecule([("C", (0.0, 0.0, 0.0))], source_id="ref")


class TestExperimentalFilter:
    def test_rank0_out_rank1_in(self):
        # rank 0 misses the cutoff; rank 1 is the only qualifying pose.
        ps = make_pose_set(
            "c1", "smina", [_pose_at(5.0, 0), _pose_at(0.5, 1)],
            energies=[-9.0, -8.5],
        )
        sel = experimental_filter(ps, REFERENCE)
        assert sel.chosen_rank == 1
        assert sel.energy == -8.5
        assert sel.rmsd == pytest.approx(0.5, abs=1e-12)

    def test_energy_tie_takes_lower_rank(self):
        ps = make_pose_set(
            "c1", "smina", [_pose_at(1.0, 0), _pose_at(0.1, 1)],
            energies=[-9.0, -9.0],
        )
        sel = experimental_filter(ps, REFERENCE)
        assert sel.chosen_rank == 0
        assert sel.rmsd == pytest.approx(1.0, abs=1e-12)

    def test_lowest_energy_wins_among_qualifying(self):
        # All qualify; the minimum energy is at rank 0 by PoseSet invariant.
        ps = make_pose_set(
            "c1", "smina",
            [_pose_at(2.0, 0), _pose_at(0.1, 1), _pose_at(0.2, 2)],
            energies=[-9.0, -8.0, -7.0],
        )
        assert experimental_filter(ps, REFERENCE).chosen_rank == 0

    def test_none_qualify_returns_sentinel(self):
        ps = make_pose_set(
            "c1", "smina", [_pose_at(4.0, 0), _pose_at(6.0, 1)],
            energies=[-9.0, -8.0],
        )
        sel = experimental_filter(ps, REFERENCE)
        assert sel.chosen_rank == 0
        assert sel.energy == -9.0
        assert sel.rmsd == SENTINEL_RMSD

    def test_exactly_at_cutoff_does_not_qualify(self):
        ps = make_pose_set("c1", "smina", [_pose_at(SELECTION_CUTOFF, 0)])
        assert experimental_filter(ps, REFERENCE).rmsd == SENTINEL_RMSD

    def test_missing_reference_returns_sentinel(self):
        ps = make_pose_set("c1", "smina", [_pose_at(0.1, 0)])
        sel = experimental_filter(ps, None)
        assert sel.rmsd == SENTINEL_RMSD
        assert sel.chosen_rank == 0

    def test_failed_set_returns_sentinel_with_best_energy(self):
        ps = PoseSet(
            "c1",
            ScoringFunction.SMINA,
            poses=(Pose(rank=0, energy=-9.25, molecule=None),),
            failed=True,
        )
        sel = experimental_filter(ps, REFERENCE)
        assert sel.rmsd == SENTINEL_RMSD
        assert sel.energy == -9.25


# ---------------------------------------------------------------------------
# Consensus filter
# ---------------------------------------------------------------------------


class TestConsensusSelection:
    def test_hand_fixture_rank_sum_wins(self):
        matrix = [[2.0, 5.0], [0.5, 2.9]]
        assert select_consensus_pair(matrix) == (0, 0, 2.0)

    def test_hand_fixture_rmsd_breaks_rank_tie(self):
        matrix = [[5.0, 1.0], [0.5, 5.0]]
        # (0,1) and (1,0) both have rank sum 1; (1,0) has lower RMSD.
        assert select_consensus_pair(matrix) == (1, 0, 0.5)

    def test_hand_fixture_lexicographic_final_tie(self):
        matrix = [[5.0, 1.0], [1.0, 5.0]]
        assert select_consensus_pair(matrix) == (0, 1, 1.0)

    def test_no_qualifying_pair_returns_none(self):
        assert select_consensus_pair([[5.0, 3.0], [4.0, 3.0]]) is None

    def test_rule_equivalence_on_discretized_random_grids(self, rng):
        # One-decimal values in [0, 6] force frequent exact ties, so the
        # full (rank sum, rmsd, i, j) key ordering is exercised.
        for _ in range(300):
            shape = (int(rng.integers(1, 10)), int(rng.integers(1, 10)))
            matrix = np.round(rng.uniform(0, 6, shape), 1)
            assert select_consensus_pair(matrix) == oracle_select_pair(
                matrix.tolist(), SELECTION_CUTOFF
            )

    def _random_pose_sets(self, rng, n_poses=4):
        base = random_molecule(rng, max_atoms=8, elements=("C", "N"),
                               source_id="base")

        def posed(tool):
            mols = []
            for r in range(n_poses):
                offset = rng.normal(0, 2.0, 3)
                mols.append(
                    make_molecule(
                        [
                            (a.element,
                             tuple(np.asarray(a.position) + offset))
                            for a in base.atoms
                        ],
                        source_id=f"{tool}{r}",
                    )
                )
            energies = np.sort(rng.uniform(-10, -4, n_poses))
            return make_pose_set("cx", tool, mols, energies=energies)

        return posed("smina"), posed("vinardo")

    def test_filter_equivalence_on_random_pose_sets(self, rng):
        for _ in range(60):
            smina, vinardo = self._random_pose_sets(rng)
            matrix = [
                [
                    oracle_symmetric(ps.molecule, pv.molecule)
                    for pv in vinardo.poses
                ]
                for ps in smina.poses
            ]
            expected = oracle_select_pair(matrix, SELECTION_CUTOFF)
            sel_s, sel_v, pair_rmsd = consensus_filter(smina, vinardo)
            if expected is None:
                assert pair_rmsd == SENTINEL_RMSD
                assert (sel_s.chosen_rank, sel_v.chosen_rank) == (0, 0)
            else:
                i, j, value = expected
                assert (sel_s.chosen_rank, sel_v.chosen_rank) == (i, j)
                assert pair_rmsd == pytest.approx(value, abs=1e-9)
                assert sel_s.energy == smina.poses[i].energy
                assert sel_v.energy == vinardo.poses[j].energy

    def test_failed_side_forces_sentinel(self):
        good = make_pose_set("cx", "vinardo", [_pose_at(0.0, 0)])
        failed = PoseSet(
            "cx",
            ScoringFunction.SMINA,
            poses=(Pose(rank=0, energy=-9.0, molecule=None),),
            failed=True,
        )
        sel_s, sel_v, pair_rmsd = consensus_filter(failed, good)
        assert pair_rmsd == SENTINEL_RMSD
        assert sel_s.chosen_rank == sel_v.chosen_rank == 0

    def test_mismatched_complex_ids_rejected(self):
        a = make_pose_set("c1", "smina", [_pose_at(0.0, 0)])
        b = make_pose_set("c2", "vinardo", [_pose_at(0.0, 0)])
        with pytest.raises(DataError, match="different complexes"):
            consensus_filter(a, b)


# ---------------------------------------------------------------------------
# Record-level composition and the training cutoff
# ---------------------------------------------------------------------------


def _record(complex_id, partition, smina_dist, vinardo_dist, *, expt=True):
    return CohortRecord(
        complex_id=complex_id,
        partition=partition,
        label=None,
        pose_sets={
            ScoringFunction.SMINA: make_pose_set(
                complex_id, "smina", [_pose_at(smina_dist, 0)]
            ),
            ScoringFunction.VINARDO: make_pose_set(
                complex_id, "vinardo", [_pose_at(vinardo_dist, 0)]
            ),
        },
        experimental_pose=REFERENCE if expt else None,
    )


class TestFilterComplexAndCutoff:
    def test_experimental_record_rmsd_is_max_of_tools(self):
        record = _record("c1", Partition.TRAIN, 0.5, 2.0)
        result = filter_complex(record, FilterMode.EXPERIMENTAL)
        assert result.rmsd == pytest.approx(2.0, abs=1e-12)
        assert result.smina.rmsd == pytest.approx(0.5, abs=1e-12)

    def test_one_sentinel_tool_makes_record_sentinel(self):
        record = _record("c1", Partition.TRAIN, 0.5, 4.0)
        result = filter_complex(record, FilterMode.EXPERIMENTAL)
        assert result.rmsd == SENTINEL_RMSD

    def test_mode_tags(self):
        assert FilterMode.CONSENSUS.tag == "VvS"
        assert FilterMode.EXPERIMENTAL.tag == "RelExpt"
        assert FilterMode.from_tag("VvS") is FilterMode.CONSENSUS
        assert FilterMode.from_tag("RelExpt") is FilterMode.EXPERIMENTAL

    def _cohort(self):
        records = {
            "good": _record("good", Partition.TRAIN, 0.5, 1.0),
            "bad": _record("bad", Partition.TRAIN, 5.0, 1.0),
            "core": _record("core", Partition.CORESET, 5.0, 5.0),
        }
        cohort = Cohort(records=records, base_tables={})
        for record in records.values():
            record.filter_results[FilterMode.EXPERIMENTAL] = filter_complex(
                record, FilterMode.EXPERIMENTAL
            )
        return cohort

    def test_cutoff_3_drops_sentinel_train_records(self):
        cohort = self._cohort()
        mode = RmsdFilterMode(FilterMode.EXPERIMENTAL, 3.0)
        kept = apply_rmsd_cutoff(cohort, mode)
        assert sorted(kept.records) == ["core", "good"]

    def test_cutoff_100_drops_sentinels_only(self):
        cohort = self._cohort()
        kept = apply_rmsd_cutoff(
            cohort, RmsdFilterMode(FilterMode.EXPERIMENTAL, 100.0)
        )
        # 'bad' has sentinel rmsd 100.0, which is NOT strictly below 100.
        assert sorted(kept.records) == ["core", "good"]

    def test_cutoff_101_keeps_everything(self):
        cohort = self._cohort()
        kept = apply_rmsd_cutoff(
            cohort, RmsdFilterMode(FilterMode.EXPERIMENTAL, 101.0)
        )
        assert sorted(kept.records) == ["bad", "core", "good"]

    def test_non_training_partitions_never_filtered(self):
        cohort = self._cohort()
        kept = apply_rmsd_cutoff(
            cohort, RmsdFilterMode(FilterMode.EXPERIMENTAL, 3.0)
        )
        assert "core" in kept.records  # sentinel rmsd, but CORESET

    def test_invalid_cutoff_rejected(self):
        with pytest.raises(DataError, match="cutoff"):
            RmsdFilterMode(FilterMode.CONSENSUS, 2.5)
        assert TRAINING_CUTOFFS == (101.0, 100.0, 3.0)

    def test_missing_filter_result_raises(self):
        record = _record("c1", Partition.TRAIN, 0.5, 1.0)
        cohort = Cohort(records={"c1": record}, base_tables={})
        with pytest.raises(DataError, match="missing a filter result"):
            apply_rmsd_cutoff(
                cohort, RmsdFilterMode(FilterMode.EXPERIMENTAL, 3.0)
            )


class TestFilterTableRoundTrip:
    def test_round_trip(self):
        record = _record("c1", Partition.TRAIN, 0.5, 2.0)
        result = filter_complex(record, FilterMode.EXPERIMENTAL)
        text = write_filter_table([result])
        back = parse_filter_table(text)
        assert back["c1"].rmsd == result.rmsd
        assert back["c1"].smina.chosen_rank == result.smina.chosen_rank
        assert back["c1"].vinardo.energy == result.vinardo.energy
        assert back["c1"].mode is FilterMode.EXPERIMENTAL
