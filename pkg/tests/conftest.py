"""Shared test fixtures: molecule builders and a small synthetic cohort."""

from __future__ import annotations

import numpy as np
import pytest

from affistack.ingest import Atom, Molecule, Pose, PoseSet, ScoringFunction
from affistack.learners import ProtocolParams
from affistack.synth import SynthConfig, make_synthetic_cohort


def make_molecule(atoms, source_id="mol"):
    """Build a Molecule from (element, (x, y, z)) pairs."""
    return Molecule(
        atoms=tuple(
            Atom(element=el, position=tuple(float(c) for c in pos))
            for el, pos in atoms
        ),
        source_id=source_id,
    )


def random_molecule(rng, *, max_atoms=30, elements=("C", "N", "O", "S"),
                    source_id="rand"):
    """A random heavy-atom molecule for oracle-equivalence sweeps."""
    n = int(rng.integers(1, max_atoms + 1))
    pool = list(elements[: int(rng.integers(1, len(elements) + 1))])
    return make_molecule(
        [
            (pool[int(rng.integers(len(pool)))],
             tuple(rng.uniform(-8.0, 8.0, 3)))
            for _ in range(n)
        ],
        source_id=source_id,
    )


def make_pose_set(complex_id, tool, molecules, *, energies=None, failed=False):
    """PoseSet from a molecule list (rank = list position)."""
    if energies is None:
        energies = [-9.0 + 0.5 * r for r in range(len(molecules))]
    return PoseSet(
        complex_id=complex_id,
        scoring_function=ScoringFunction(tool),
        poses=tuple(
            Pose(rank=r, energy=float(e), molecule=m)
            for r, (e, m) in enumerate(zip(energies, molecules))
        ),
        failed=failed,
    )


FAST_PARAMS = ProtocolParams(
    lasso_repeats=3,
    enet_repeats_per_ratio=1,
    enet_l1_ratios=(0.5, 1.0),
    gbt_search_iters=3,
    pc_k_max=4,
    pc_sweep=ProtocolParams(
        lasso_repeats=1,
        enet_repeats_per_ratio=1,
        enet_l1_ratios=(1.0,),
        gbt_search_iters=1,
        pc_k_max=4,
        pc_sweep=None,
    ),
)


@pytest.fixture(scope="session")
def small_cohort():
    """40-complex synthetic cohort incl. two failed smina pose sets."""
    return make_synthetic_cohort(SynthConfig(n_complexes=40, n_failed=2), seed=7)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260816)
