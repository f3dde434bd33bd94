"""PCA over base-prediction columns and selection of the component count.

The prediction columns all live on the same ln-affinity scale, so the
decomposition centers each column but does not rescale to unit variance —
rescaling would break the useful property that the first component tracks
the per-row mean prediction. Components come from an SVD of the centered
matrix, are ordered by explained variance, and carry a deterministic sign
(each loading vector sums to >= 0; an exactly-zero sum falls back to making
the first nonzero loading positive).

``optimize_pc_count`` picks how many leading components a PCA-based feature
group should use: a single fixed 80/20 split of the training rows, the
learner's full selection protocol per candidate k, and the k with the best
validation Pearson correlation (ties to the smallest k).
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, NumericalError, SchemaError
from .evaluate import pearson
from .ingest import BasePredictionTable, GroupTag
from .learners import MetaAlgorithm, ProtocolParams, fit_algorithm, predict
from .seeding import derived_rng, mixed_seed

__all__ = [
    "PCABasis",
    "PcaSource",
    "PcSweepResult",
    "fit_pca",
    "optimize_pc_count",
    "optimize_pc_count_detailed",
    "pca_basis_from_json_dict",
    "pca_basis_to_json_dict",
    "project",
]

_SIGN_CONVENTION = "loading-sum-nonneg"


class PcaSource(str, Enum):
    """Which base-prediction tables feed a given decomposition."""

    D1FP = "D1FP"
    D2FP = "D2FP"
    D3P = "D3P"
    DAP = "DAP"

    @property
    def table_tags(self) -> tuple[GroupTag, ...]:
        if self is PcaSource.D1FP:
            return (GroupTag.D1F,)
        if self is PcaSource.D2FP:
            return (GroupTag.D2F,)
        if self is PcaSource.D3P:
            return (GroupTag.D3,)
        return (GroupTag.D1F, GroupTag.D2F, GroupTag.D3)


@dataclass(frozen=True)
class PCABasis:
    """Centered-PCA loadings for one prediction source.

    ``components`` is (r, p) row-major with mutually orthonormal rows in
    explained-variance order; r = min(n_samples - 1, p) since centering
    caps the rank. ``explained_variance`` uses the sample convention
    s^2 / (n - 1).
    """

    column_means: np.ndarray
    components: np.ndarray
    singular_values: np.ndarray
    n_samples: int
    source_group: PcaSource | None = None

    def __post_init__(self) -> None:
        r, p = self.components.shape
        if self.column_means.shape != (p,):
            raise DataError(
                f"column_means length {self.column_means.shape} does not "
                f"match component width {p}"
            )
        if self.singular_values.shape != (r,):
            raise DataError("one singular value per component required")
        if self.n_samples < 2:
            raise DataError("basis requires at least 2 samples")
        gram = self.components @ self.components.T
        if not np.allclose(gram, np.eye(r), atol=1e-8):
            raise NumericalError("components are not orthonormal to 1e-8")
        sv = self.singular_values
        if np.any(sv[1:] > sv[:-1] + 1e-12):
            raise DataError("explained variances must be non-increasing")
        for row in self.components:
            total = float(row.sum())
            if total < 0:
                raise DataError("component violates the sign convention")
            if total == 0.0:
                nonzero = row[row != 0.0]
                if nonzero.size and nonzero[0] < 0:
                    raise DataError("component violates the sign convention")

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def explained_variance(self) -> np.ndarray:
        return self.singular_values**2 / (self.n_samples - 1)

    @property
    def explained_variance_ratio(self) -> np.ndarray:
        total = float(self.explained_variance.sum())
        if total == 0.0:
            return np.zeros_like(self.singular_values)
        return self.explained_variance / total


def _fix_signs(components: np.ndarray) -> np.ndarray:
    fixed = components.copy()
    for i, row in enumerate(fixed):
        total = float(row.sum())
        flip = False
        if total < 0:
            flip = True
        elif total == 0.0:
            nonzero = row[row != 0.0]
            flip = bool(nonzero.size) and nonzero[0] < 0
        if flip:
            fixed[i] = -row
    return fixed


def fit_pca(
    table: BasePredictionTable, *, source: PcaSource | None = None
) -> PCABasis:
    """Center-only PCA of a prediction table's rows.

    An all-constant matrix is valid and yields zero singular values. The
    component count is min(n - 1, p): centering removes one rank, so any
    further components would be numerical noise.
    """
    n = table.n_rows
    if n < 2:
        raise DataError(f"PCA requires at least 2 rows, got {n}")
    matrix = table.matrix(sorted(table.rows))
    p = matrix.shape[1]
    means = matrix.mean(axis=0)
    centered = matrix - means
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    r = min(n - 1, p)
    return PCABasis(
        column_means=means,
        components=_fix_signs(vt[:r]),
        singular_values=s[:r].copy(),
        n_samples=n,
        source_group=source,
    )


def project(basis: PCABasis, rows: np.ndarray, k: int) -> np.ndarray:
    """Score rows against the first k components: (rows - means) @ V_k^T."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2:
        raise SchemaError(f"rows must be 2-D, got shape {rows.shape}")
    if rows.shape[1] != basis.column_means.shape[0]:
        raise SchemaError(
            f"row width {rows.shape[1]} does not match basis width "
            f"{basis.column_means.shape[0]}"
        )
    if not 1 <= k <= basis.n_components:
        raise DataError(
            f"k must be in 1..{basis.n_components}, got {k}"
        )
    return (rows - basis.column_means) @ basis.components[:k].T


# ---------------------------------------------------------------------------
# Component-count selection
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PcSweepResult:
    k_star: int
    scores: tuple[float, ...]  # validation Pearson r per k = 1..k_max
    n_train: int
    n_val: int


def optimize_pc_count_detailed(
    builder: Callable[[int], np.ndarray],
    labels: Sequence[float] | np.ndarray,
    learner: MetaAlgorithm,
    *,
    k_max: int = 22,
    split_seed: int = 0,
    val_fraction: float = 0.2,
    params: ProtocolParams = ProtocolParams(),
) -> PcSweepResult:
    """Sweep k = 1..k_max and score each candidate on one held-out split.

    ``builder(k)`` must return the full feature matrix (fixed columns plus
    the first k PC columns) for all training rows, row order stable across
    calls. One shuffled 80/20 split is drawn up front from ``split_seed``;
    every candidate trains the learner's complete selection protocol on the
    same 80% and is scored by Pearson correlation on the same 20%.

    A candidate whose validation predictions are constant cannot be scored
    by correlation; it is assigned -inf rather than aborting the sweep.
    Constant validation labels abort (no candidate could ever be scored).
    """
    y = np.asarray(labels, dtype=np.float64)
    n = y.shape[0]
    if n < 10:
        raise DataError(f"component sweep requires >= 10 rows, got {n}")
    if k_max < 1:
        raise DataError(f"k_max must be >= 1, got {k_max}")
    if not 0.0 < val_fraction < 1.0:
        raise DataError("val_fraction must be in (0, 1)")
    rng = derived_rng(split_seed, "pc-split")
    perm = rng.permutation(n)
    n_val = max(1, int(round(n * val_fraction)))
    if n_val >= n:
        raise DataError("validation split uses every row; reduce val_fraction")
    val_rows = np.sort(perm[:n_val])
    train_rows = np.sort(perm[n_val:])
    y_val = y[val_rows]
    if np.all(y_val == y_val[0]):
        raise NumericalError(
            "validation labels are constant; Pearson selection is undefined"
        )
    sweep_params = params.sweep_params()

    best_k: int | None = None
    best_score = float("-inf")
    scores: list[float] = []
    for k in range(1, k_max + 1):
        X = np.asarray(builder(k), dtype=np.float64)
        if X.shape[0] != n:
            raise SchemaError(
                f"builder({k}) returned {X.shape[0]} rows, expected {n}"
            )
        model = fit_algorithm(
            learner,
            X[train_rows],
            y[train_rows],
            seed=mixed_seed(split_seed, "pc-k", k),
            params=sweep_params,
        )
        preds = predict(model, X[val_rows])
        try:
            score = pearson(y_val, preds)
        except NumericalError:
            score = float("-inf")  # constant predictions: unrankable k
        scores.append(score)
        if score > best_score:
            best_score = score
            best_k = k
    if best_k is None:
        best_k = 1  # every candidate degenerate: smallest k by convention
    return PcSweepResult(
        k_star=best_k,
        scores=tuple(scores),
        n_train=int(train_rows.size),
        n_val=int(val_rows.size),
    )


def optimize_pc_count(
    builder: Callable[[int], np.ndarray],
    labels: Sequence[float] | np.ndarray,
    learner: MetaAlgorithm,
    *,
    k_max: int = 22,
    split_seed: int = 0,
    val_fraction: float = 0.2,
    params: ProtocolParams = ProtocolParams(),
) -> int:
    """The selected component count; see optimize_pc_count_detailed."""
    return optimize_pc_count_detailed(
        builder,
        labels,
        learner,
        k_max=k_max,
        split_seed=split_seed,
        val_fraction=val_fraction,
        params=params,
    ).k_star


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def pca_basis_to_json_dict(basis: PCABasis) -> dict:
    return {
        "kind": "pca_basis",
        "format_version": 1,
        "source_group": basis.source_group.value if basis.source_group else None,
        "sign_convention": _SIGN_CONVENTION,
        "n_samples": basis.n_samples,
        "column_means": [float(v) for v in basis.column_means],
        "components": [[float(v) for v in row] for row in basis.components],
        "singular_values": [float(v) for v in basis.singular_values],
    }


def pca_basis_from_json_dict(payload: dict) -> PCABasis:
    if payload.get("kind") != "pca_basis":
        raise SchemaError(f"not a PCA basis payload: kind={payload.get('kind')!r}")
    if payload.get("sign_convention") != _SIGN_CONVENTION:
        raise SchemaError(
            f"unsupported sign convention {payload.get('sign_convention')!r}"
        )
    source = payload.get("source_group")
    return PCABasis(
        column_means=np.asarray(payload["column_means"], dtype=np.float64),
        components=np.asarray(payload["components"], dtype=np.float64),
        singular_values=np.asarray(payload["singular_values"], dtype=np.float64),
        n_samples=int(payload["n_samples"]),
        source_group=PcaSource(source) if source else None,
    )
