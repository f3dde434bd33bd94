"""The four meta-regressors and their selection protocols.

Linear models (OLS, LASSO, ElasticNet) share one objective convention:

    (1/(2n)) * ||y - X beta - b||^2
        + alpha * l1_ratio * ||beta||_1
        + alpha * (1 - l1_ratio) / 2 * ||beta||_2^2

with the intercept b unpenalized via centering. Features are z-scored
inside the linear fitters using fit-time statistics (stored on the model
and re-applied at prediction time); the boosted-tree fitter never scales.

The regularized fits run cyclic coordinate descent with a duality-gap
convergence certificate. The CV protocols on top mirror an external
convention: repeated shuffled k-fold selects the penalty by mean validation
MSE inside each repeat, and the winner across repeats is the refit model
with the smallest final duality gap.

The gradient-boosted trees are stagewise least-squares boosting: each tree
is grown greedily on a row subsample and per-tree column subsample,
choosing splits by variance-reduction gain, rejecting gains below gamma,
with leaf values equal to mean residuals. A randomized search draws
hyperparameters uniformly from fixed ranges and scores them by mean
validation R^2 over k folds.

Everything is deterministic given (data, hyperparameters, seed); parallel
callers derive per-task RNG streams so schedules never change results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .errors import DataError, SchemaError
from .seeding import derived_rng, mixed_seed

__all__ = [
    "Diagnostics",
    "GBTHyperparams",
    "GBTModel",
    "LinearAlgorithm",
    "LinearModel",
    "MetaAlgorithm",
    "ProtocolParams",
    "RegressionTree",
    "Standardizer",
    "fit_algorithm",
    "fit_elasticnet_cv",
    "fit_gbt",
    "fit_lasso_cd",
    "fit_lasso_cv",
    "fit_ols",
    "lasso_alpha_grid",
    "model_from_json_dict",
    "model_to_json_dict",
    "predict",
    "random_search_gbt",
    "shuffled_fold_indices",
    "soft_threshold",
]


def _validate_xy(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"X must be 2-D, got shape {X.shape}")
    if y.shape != (X.shape[0],):
        raise DataError(
            f"y has shape {y.shape}, expected ({X.shape[0]},) to match X"
        )
    if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
        raise DataError("non-finite value in training data")
    if X.shape[0] < 1 or X.shape[1] < 1:
        raise DataError(f"degenerate training shape {X.shape}")
    return X, y


# ---------------------------------------------------------------------------
# Linear models
# ---------------------------------------------------------------------------


class LinearAlgorithm(str, Enum):
    OLS = "OLS"
    LASSO = "LASSO"
    ELASTICNET = "ELASTICNET"


@dataclass(frozen=True)
class Standardizer:
    """Per-feature (mean, scale) captured at fit time."""

    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.scale

    @classmethod
    def fit(cls, X: np.ndarray, *, center: bool, scale: bool) -> "Standardizer":
        mean = X.mean(axis=0) if center else np.zeros(X.shape[1])
        if scale:
            sd = X.std(axis=0)
            sd = np.where(sd == 0.0, 1.0, sd)  # constant columns pass through
        else:
            sd = np.ones(X.shape[1])
        return cls(mean=mean, scale=sd)

    @classmethod
    def identity(cls, p: int) -> "Standardizer":
        return cls(mean=np.zeros(p), scale=np.ones(p))


@dataclass(frozen=True)
class Diagnostics:
    """Convergence record of a coordinate-descent fit."""

    converged: bool
    sweeps: int
    duality_gap: float
    tol: float
    certificate: str = "duality_gap"
    warning: str | None = None


@dataclass
class LinearModel:
    algorithm: LinearAlgorithm
    coefficients: np.ndarray  # in standardized-feature space
    intercept: float
    standardizer: Standardizer
    alpha: float = 0.0
    l1_ratio: float = 1.0
    feature_names: tuple[str, ...] | None = None
    diagnostics: Diagnostics | None = None
    selection: dict | None = None  # CV protocol record (repeat, alpha, ...)

    def __post_init__(self) -> None:
        if self.algorithm is LinearAlgorithm.OLS and self.alpha != 0.0:
            raise DataError("OLS models must have alpha == 0")
        if self.algorithm is LinearAlgorithm.LASSO and self.l1_ratio != 1.0:
            raise DataError("LASSO models must have l1_ratio == 1")

    @property
    def n_features(self) -> int:
        return len(self.coefficients)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise SchemaError(
                f"model expects {self.n_features} features, got input of "
                f"shape {X.shape}"
            )
        return self.standardizer.transform(X) @ self.coefficients + self.intercept

    def original_space(self) -> tuple[np.ndarray, float]:
        """Equivalent (coefficients, intercept) on unstandardized features."""
        coef = self.coefficients / self.standardizer.scale
        intercept = self.intercept - float(coef @ self.standardizer.mean)
        return coef, intercept


def fit_ols(
    X: np.ndarray,
    y: np.ndarray,
    *,
    feature_names: Sequence[str] | None = None,
) -> LinearModel:
    """Least squares via a rank-revealing orthogonal decomposition.

    Rank-deficient designs get the minimum-norm coefficient vector, so a
    duplicated column splits its weight and predictions are unchanged.
    """
    X, y = _validate_xy(X, y)
    standardizer = Standardizer.fit(X, center=True, scale=True)
    Xs = standardizer.transform(X)
    intercept = float(y.mean())
    coef, *_ = np.linalg.lstsq(Xs, y - intercept, rcond=None)
    return LinearModel(
        algorithm=LinearAlgorithm.OLS,
        coefficients=coef,
        intercept=intercept,
        standardizer=standardizer,
        alpha=0.0,
        l1_ratio=0.0,
        feature_names=tuple(feature_names) if feature_names else None,
    )


def soft_threshold(z: float, threshold: float) -> float:
    """sign(z) * max(|z| - threshold, 0)."""
    if z > threshold:
        return z - threshold
    if z < -threshold:
        return z + threshold
    return 0.0


def _duality_gap(
    Xs: np.ndarray,
    yc: np.ndarray,
    beta: np.ndarray,
    residual: np.ndarray,
    l1: float,
    l2: float,
) -> float:
    """Fenchel duality gap of 1/2||y-Xb||^2 + l1||b||_1 + l2/2||b||_2^2.

    The dual point is the residual scaled into the feasible set; the gap is
    zero exactly at the optimum and upper-bounds the objective error.
    """
    grad_like = Xs.T @ residual - l2 * beta
    dual_norm = float(np.max(np.abs(grad_like))) if grad_like.size else 0.0
    r_norm2 = float(residual @ residual)
    w_norm2 = float(beta @ beta)
    if dual_norm > l1:
        const = l1 / dual_norm
        gap = 0.5 * (r_norm2 + r_norm2 * const * const)
    else:
        const = 1.0
        gap = r_norm2
    gap += (
        l1 * float(np.abs(beta).sum())
        - const * float(residual @ yc)
        + 0.5 * l2 * (1.0 + const * const) * w_norm2
    )
    return gap


def _cd_solve(
    Xs: np.ndarray,
    yc: np.ndarray,
    alpha: float,
    l1_ratio: float,
    *,
    tol: float,
    max_sweeps: int,
    beta0: np.ndarray | None = None,
) -> tuple[np.ndarray, float, int, bool, str]:
    """Cyclic coordinate descent on pre-standardized data.

    Returns (beta, certificate value, sweeps, converged, certificate kind).
    For l1 > 0 the certificate is the duality gap compared against ``tol``;
    at l1 == 0 the gap construction degenerates, so the certificate becomes
    the stationarity residual max|X^T r - l2*beta| with a max-update
    fallback stop.
    """
    n, p = Xs.shape
    l1 = n * alpha * l1_ratio
    l2 = n * alpha * (1.0 - l1_ratio)
    beta = np.zeros(p) if beta0 is None else beta0.copy()
    col_nrm2 = np.einsum("ij,ij->j", Xs, Xs)
    residual = yc - Xs @ beta
    if p == 0:
        return beta, 0.0, 0, True, "duality_gap"

    if l1 > 0.0:
        gap = _duality_gap(Xs, yc, beta, residual, l1, l2)
        if gap <= tol:
            return beta, gap, 0, True, "duality_gap"
    for sweep in range(1, max_sweeps + 1):
        max_update = 0.0
        for j in range(p):
            nrm = col_nrm2[j]
            if nrm == 0.0:
                continue
            old = beta[j]
            rho = float(Xs[:, j] @ residual) + nrm * old
            new = soft_threshold(rho, l1) / (nrm + l2)
            if new != old:
                residual += Xs[:, j] * (old - new)
                beta[j] = new
                max_update = max(max_update, abs(new - old))
        if l1 > 0.0:
            gap = _duality_gap(Xs, yc, beta, residual, l1, l2)
            if gap <= tol:
                return beta, gap, sweep, True, "duality_gap"
        else:
            stationarity = (
                float(np.max(np.abs(Xs.T @ residual - l2 * beta)))
                if p
                else 0.0
            )
            if max_update <= 1e-13 * max(1.0, float(np.max(np.abs(beta)))):
                return beta, stationarity, sweep, True, "stationarity"
    if l1 > 0.0:
        final = _duality_gap(Xs, yc, beta, residual, l1, l2)
        kind = "duality_gap"
    else:
        final = float(np.max(np.abs(Xs.T @ residual - l2 * beta)))
        kind = "stationarity"
    return beta, final, max_sweeps, False, kind


def _default_tol(y: np.ndarray) -> float:
    return 1e-6 * float(np.var(y)) * len(y)


def fit_lasso_cd(
    X: np.ndarray,
    y: np.ndarray,
    alpha: float,
    *,
    l1_ratio: float = 1.0,
    tol: float | None = None,
    max_sweeps: int = 10_000,
    standardize: bool = True,
    fit_intercept: bool = True,
    feature_names: Sequence[str] | None = None,
) -> LinearModel:
    """One coordinate-descent fit at a fixed penalty.

    Non-convergence within ``max_sweeps`` is not an error: the model is
    returned with ``diagnostics.converged == False`` and a warning string.
    """
    X, y = _validate_xy(X, y)
    if alpha < 0:
        raise DataError(f"alpha must be >= 0, got {alpha}")
    if not 0.0 <= l1_ratio <= 1.0:
        raise DataError(f"l1_ratio must be in [0, 1], got {l1_ratio}")
    standardizer = Standardizer.fit(
        X, center=fit_intercept, scale=standardize
    )
    Xs = standardizer.transform(X)
    intercept = float(y.mean()) if fit_intercept else 0.0
    yc = y - intercept
    tol_abs = _default_tol(y) if tol is None else tol
    beta, gap, sweeps, converged, kind = _cd_solve(
        Xs, yc, alpha, l1_ratio, tol=tol_abs, max_sweeps=max_sweeps
    )
    algorithm = (
        LinearAlgorithm.LASSO if l1_ratio == 1.0 else LinearAlgorithm.ELASTICNET
    )
    return LinearModel(
        algorithm=algorithm,
        coefficients=beta,
        intercept=intercept,
        standardizer=standardizer,
        alpha=float(alpha),
        l1_ratio=float(l1_ratio),
        feature_names=tuple(feature_names) if feature_names else None,
        diagnostics=Diagnostics(
            converged=converged,
            sweeps=sweeps,
            duality_gap=gap,
            tol=tol_abs,
            certificate=kind,
            warning=None if converged else "coordinate descent did not "
            f"converge in {max_sweeps} sweeps",
        ),
    )


def lasso_alpha_grid(
    Xs: np.ndarray,
    yc: np.ndarray,
    *,
    n_alphas: int = 100,
    eps: float = 1e-3,
    l1_ratio: float = 1.0,
) -> np.ndarray:
    """Geometric penalty grid from alpha_max down to eps * alpha_max.

    alpha_max is the smallest penalty that zeroes every coefficient,
    max_j |x_j^T y_c| / (n * l1_ratio); a descending grid lets path fits
    warm-start from the sparse end. Degenerate data (alpha_max == 0)
    returns an empty grid.
    """
    n = Xs.shape[0]
    if l1_ratio <= 0:
        raise DataError("alpha grid requires l1_ratio > 0")
    alpha_max = float(np.max(np.abs(Xs.T @ yc)) / (n * l1_ratio)) if Xs.size else 0.0
    if alpha_max <= 0.0:
        return np.empty(0)
    return np.geomspace(alpha_max, alpha_max * eps, n_alphas)


def shuffled_fold_indices(
    n: int, folds: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Shuffle 0..n-1 and split into ``folds`` contiguous chunks.

    Chunk sizes differ by at most one (the first n % folds chunks carry the
    extra row), matching the usual k-fold convention.
    """
    if folds < 2:
        raise DataError(f"need at least 2 folds, got {folds}")
    if n < folds:
        raise DataError(f"cannot split {n} rows into {folds} folds")
    return np.array_split(rng.permutation(n), folds)


def _zero_coefficient_model(
    algorithm: LinearAlgorithm,
    X: np.ndarray,
    y: np.ndarray,
    standardizer: Standardizer,
    l1_ratio: float,
    feature_names: Sequence[str] | None,
    note: str,
) -> LinearModel:
    return LinearModel(
        algorithm=algorithm,
        coefficients=np.zeros(X.shape[1]),
        intercept=float(y.mean()),
        standardizer=standardizer,
        alpha=0.0,
        l1_ratio=l1_ratio,
        feature_names=tuple(feature_names) if feature_names else None,
        diagnostics=Diagnostics(
            converged=True, sweeps=0, duality_gap=0.0, tol=0.0
        ),
        selection={"note": note},
    )


def _cv_path_candidate(
    Xs: np.ndarray,
    y: np.ndarray,
    grid: np.ndarray,
    l1_ratio: float,
    fold_indices: list[np.ndarray],
    *,
    tol: float | None,
    max_sweeps: int,
) -> tuple[int, float]:
    """Mean validation MSE over folds for every alpha; returns best index.

    Each fold fits the full descending path with warm starts; validation
    predictions use the fold-training label mean as intercept. Ties in mean
    MSE resolve to the first (largest) alpha on the grid.
    """
    n = Xs.shape[0]
    mse = np.zeros(len(grid))
    all_rows = np.arange(n)
    for val_rows in fold_indices:
        train_mask = np.ones(n, dtype=bool)
        train_mask[val_rows] = False
        train_rows = all_rows[train_mask]
        X_tr = Xs[train_rows]
        y_tr = y[train_rows]
        X_va = Xs[val_rows]
        y_va = y[val_rows]
        intercept = float(y_tr.mean())
        yc_tr = y_tr - intercept
        tol_abs = _default_tol(y_tr) if tol is None else tol
        beta = np.zeros(Xs.shape[1])
        for a_idx, alpha in enumerate(grid):
            beta, *_ = _cd_solve(
                X_tr,
                yc_tr,
                float(alpha),
                l1_ratio,
                tol=tol_abs,
                max_sweeps=max_sweeps,
                beta0=beta,
            )
            pred = X_va @ beta + intercept
            mse[a_idx] += float(np.mean((y_va - pred) ** 2))
    mse /= len(fold_indices)
    best_idx = int(np.argmin(mse))
    return best_idx, float(mse[best_idx])


def fit_lasso_cv(
    X: np.ndarray,
    y: np.ndarray,
    *,
    folds: int = 5,
    repeats: int = 100,
    seed: int = 0,
    n_alphas: int = 100,
    eps: float = 1e-3,
    tol: float | None = None,
    max_sweeps: int = 10_000,
    feature_names: Sequence[str] | None = None,
) -> LinearModel:
    """Repeated shuffled k-fold LASSO with duality-gap final selection.

    Per repeat: shuffle rows, run k-fold CV over the geometric alpha grid,
    take the alpha with minimum mean validation MSE, refit on all rows.
    Across repeats, the returned model is the refit with the smallest
    final duality gap (ties -> earliest repeat).
    """
    X, y = _validate_xy(X, y)
    if X.shape[0] < folds:
        raise DataError(
            f"need at least {folds} rows for {folds}-fold CV, got {X.shape[0]}"
        )
    if repeats < 1:
        raise DataError("repeats must be >= 1")
    standardizer = Standardizer.fit(X, center=True, scale=True)
    Xs = standardizer.transform(X)
    intercept = float(y.mean())
    yc = y - intercept
    grid = lasso_alpha_grid(Xs, yc, n_alphas=n_alphas, eps=eps, l1_ratio=1.0)
    if grid.size == 0:
        return _zero_coefficient_model(
            LinearAlgorithm.LASSO, X, y, standardizer, 1.0, feature_names,
            "degenerate alpha grid (constant labels or zero design)",
        )
    tol_abs = _default_tol(y) if tol is None else tol

    best: dict | None = None
    for repeat in range(repeats):
        rng = derived_rng(seed, "lasso-cv", repeat)
        fold_indices = shuffled_fold_indices(X.shape[0], folds, rng)
        alpha_idx, cv_mse = _cv_path_candidate(
            Xs, y, grid, 1.0, fold_indices, tol=tol, max_sweeps=max_sweeps
        )
        alpha = float(grid[alpha_idx])
        beta, gap, sweeps, converged, _ = _cd_solve(
            Xs, yc, alpha, 1.0, tol=tol_abs, max_sweeps=max_sweeps
        )
        if best is None or gap < best["gap"]:
            best = {
                "repeat": repeat,
                "alpha": alpha,
                "cv_mse": cv_mse,
                "beta": beta,
                "gap": gap,
                "sweeps": sweeps,
                "converged": converged,
            }
    assert best is not None
    return LinearModel(
        algorithm=LinearAlgorithm.LASSO,
        coefficients=best["beta"],
        intercept=intercept,
        standardizer=standardizer,
        alpha=best["alpha"],
        l1_ratio=1.0,
        feature_names=tuple(feature_names) if feature_names else None,
        diagnostics=Diagnostics(
            converged=best["converged"],
            sweeps=best["sweeps"],
            duality_gap=best["gap"],
            tol=tol_abs,
            warning=None
            if best["converged"]
            else "selected refit did not converge",
        ),
        selection={
            "protocol": "repeated-shuffled-kfold",
            "repeats": repeats,
            "folds": folds,
            "chosen_repeat": best["repeat"],
            "alpha": best["alpha"],
            "alpha_max": float(grid[0]),
            "n_alphas": int(grid.size),
            "cv_mse": best["cv_mse"],
        },
    )


def fit_elasticnet_cv(
    X: np.ndarray,
    y: np.ndarray,
    *,
    folds: int = 5,
    repeats_per_ratio: int = 10,
    l1_ratios: Sequence[float] = (0.1, 0.5, 0.7, 0.9, 0.95, 0.99, 1.0),
    seed: int = 0,
    n_alphas: int = 100,
    eps: float = 1e-3,
    tol: float | None = None,
    max_sweeps: int = 10_000,
    feature_names: Sequence[str] | None = None,
) -> LinearModel:
    """ElasticNet protocol: every l1_ratio gets ``repeats_per_ratio``
    shuffled k-fold runs; the final model is the candidate (over all ratios
    and repeats) whose refit-on-all-rows has the smallest duality gap, ties
    resolved by iteration order (ratios outer, repeats inner)."""
    X, y = _validate_xy(X, y)
    if X.shape[0] < folds:
        raise DataError(
            f"need at least {folds} rows for {folds}-fold CV, got {X.shape[0]}"
        )
    if not l1_ratios:
        raise DataError("l1_ratios must be non-empty")
    for ratio in l1_ratios:
        if not 0.0 < ratio <= 1.0:
            raise DataError(f"l1_ratio {ratio} outside (0, 1]")
    standardizer = Standardizer.fit(X, center=True, scale=True)
    Xs = standardizer.transform(X)
    intercept = float(y.mean())
    yc = y - intercept
    tol_abs = _default_tol(y) if tol is None else tol

    best: dict | None = None
    degenerate = True
    for ratio_idx, ratio in enumerate(l1_ratios):
        grid = lasso_alpha_grid(
            Xs, yc, n_alphas=n_alphas, eps=eps, l1_ratio=float(ratio)
        )
        if grid.size == 0:
            continue
        degenerate = False
        for repeat in range(repeats_per_ratio):
            rng = derived_rng(seed, "enet-cv", ratio_idx, repeat)
            fold_indices = shuffled_fold_indices(X.shape[0], folds, rng)
            alpha_idx, cv_mse = _cv_path_candidate(
                Xs,
                y,
                grid,
                float(ratio),
                fold_indices,
                tol=tol,
                max_sweeps=max_sweeps,
            )
            alpha = float(grid[alpha_idx])
            beta, gap, sweeps, converged, _ = _cd_solve(
                Xs, yc, alpha, float(ratio), tol=tol_abs, max_sweeps=max_sweeps
            )
            if best is None or gap < best["gap"]:
                best = {
                    "ratio": float(ratio),
                    "repeat": repeat,
                    "alpha": alpha,
                    "cv_mse": cv_mse,
                    "beta": beta,
                    "gap": gap,
                    "sweeps": sweeps,
                    "converged": converged,
                }
    if degenerate:
        return _zero_coefficient_model(
            LinearAlgorithm.ELASTICNET, X, y, standardizer,
            float(l1_ratios[0]), feature_names,
            "degenerate alpha grid (constant labels or zero design)",
        )
    assert best is not None
    return LinearModel(
        algorithm=LinearAlgorithm.ELASTICNET,
        coefficients=best["beta"],
        intercept=intercept,
        standardizer=standardizer,
        alpha=best["alpha"],
        l1_ratio=best["ratio"],
        feature_names=tuple(feature_names) if feature_names else None,
        diagnostics=Diagnostics(
            converged=best["converged"],
            sweeps=best["sweeps"],
            duality_gap=best["gap"],
            tol=tol_abs,
            warning=None
            if best["converged"]
            else "selected refit did not converge",
        ),
        selection={
            "protocol": "per-ratio-repeated-kfold",
            "l1_ratios": [float(r) for r in l1_ratios],
            "repeats_per_ratio": repeats_per_ratio,
            "folds": folds,
            "chosen_ratio": best["ratio"],
            "chosen_repeat": best["repeat"],
            "alpha": best["alpha"],
            "cv_mse": best["cv_mse"],
        },
    )


# ---------------------------------------------------------------------------
# Gradient-boosted trees
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GBTHyperparams:
    """Boosting knobs. The search draws them from the protocol ranges
    (n_estimators 100..150, max_depth 2..6, learning_rate 0.02..0.3,
    gamma 0..0.5, colsample 0.2..0.8, subsample 0.3..0.7); direct fits may
    use any physically valid values (the unit tests rely on that)."""

    n_estimators: int
    max_depth: int
    learning_rate: float
    subsample: float
    colsample_bytree: float
    gamma: float

    def __post_init__(self) -> None:
        if self.n_estimators < 0:
            raise DataError("n_estimators must be >= 0")
        if self.max_depth < 1:
            raise DataError("max_depth must be >= 1")
        if self.learning_rate <= 0:
            raise DataError("learning_rate must be > 0")
        if not 0.0 < self.subsample <= 1.0:
            raise DataError("subsample must be in (0, 1]")
        if not 0.0 < self.colsample_bytree <= 1.0:
            raise DataError("colsample_bytree must be in (0, 1]")
        if self.gamma < 0:
            raise DataError("gamma must be >= 0")


@dataclass
class RegressionTree:
    """Axis-aligned binary tree in flat arrays; node 0 is the root.

    ``feature[i] == -1`` marks a leaf; interior nodes route rows with
    x[feature] < threshold to ``left`` and the rest to ``right``. ``value``
    holds the mean residual of the node's training rows (the prediction at
    leaves).
    """

    feature: list[int] = field(default_factory=list)
    threshold: list[float] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    value: list[float] = field(default_factory=list)

    def add_node(self, value: float) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        return len(self.feature) - 1

    def predict(self, X: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature, dtype=np.intp)
        threshold = np.asarray(self.threshold)
        left = np.asarray(self.left, dtype=np.intp)
        right = np.asarray(self.right, dtype=np.intp)
        value = np.asarray(self.value)
        node = np.zeros(X.shape[0], dtype=np.intp)
        active = feature[node] >= 0
        while np.any(active):
            rows = np.flatnonzero(active)
            current = node[rows]
            goes_left = X[rows, feature[current]] < threshold[current]
            node[rows] = np.where(goes_left, left[current], right[current])
            active = feature[node] >= 0
        return value[node]

    @property
    def depth(self) -> int:
        def walk(node: int) -> int:
            if self.feature[node] < 0:
                return 0
            return 1 + max(walk(self.left[node]), walk(self.right[node]))

        return walk(0) if self.feature else 0


def _best_split(
    values: np.ndarray, residuals: np.ndarray
) -> tuple[int, float, float] | None:
    """Scan all (feature, boundary) splits; return (local feature index,
    threshold, gain) for the maximum variance-reduction gain, or None.

    Gain is parent SSE minus child SSEs. Ties resolve feature-major then
    boundary-position, so results do not depend on evaluation order.
    """
    m, q = values.shape
    if m < 2:
        return None
    parent_sum = float(residuals.sum())
    parent_sq = float((residuals * residuals).sum())
    parent_sse = parent_sq - parent_sum * parent_sum / m
    order = np.argsort(values, axis=0, kind="stable")
    v_sorted = np.take_along_axis(values, order, axis=0)
    r_sorted = residuals[order]
    csum = np.cumsum(r_sorted, axis=0)
    csq = np.cumsum(r_sorted * r_sorted, axis=0)
    n_left = np.arange(1, m, dtype=np.float64)[:, None]
    sum_left = csum[:-1]
    sq_left = csq[:-1]
    sse_left = sq_left - sum_left * sum_left / n_left
    sum_right = csum[-1] - sum_left
    sq_right = csq[-1] - sq_left
    sse_right = sq_right - sum_right * sum_right / (m - n_left)
    gain = parent_sse - sse_left - sse_right
    valid = v_sorted[1:] > v_sorted[:-1]
    gain = np.where(valid, gain, -np.inf)
    flat = gain.T.reshape(-1)  # feature-major ordering for tie-breaks
    best_flat = int(np.argmax(flat))
    best_gain = float(flat[best_flat])
    if not math.isfinite(best_gain):
        return None
    feat = best_flat // (m - 1)
    pos = best_flat % (m - 1)
    threshold = float((v_sorted[pos, feat] + v_sorted[pos + 1, feat]) / 2.0)
    # Guard the degenerate midpoint of adjacent representable floats.
    if not (v_sorted[pos, feat] < threshold <= v_sorted[pos + 1, feat]):
        return None
    return feat, threshold, best_gain


def _grow_tree(
    X_node: np.ndarray,
    residuals: np.ndarray,
    *,
    max_depth: int,
    gamma: float,
    feature_ids: np.ndarray,
) -> RegressionTree:
    tree = RegressionTree()

    def grow(rows: np.ndarray, depth: int) -> int:
        node_values = residuals[rows]
        node = tree.add_node(float(node_values.mean()))
        if depth >= max_depth or rows.size < 2:
            return node
        split = _best_split(X_node[rows], node_values)
        if split is None:
            return node
        feat_local, threshold, gain = split
        if gain < gamma:
            return node
        mask = X_node[rows, feat_local] < threshold
        left_rows = rows[mask]
        right_rows = rows[~mask]
        if left_rows.size == 0 or right_rows.size == 0:
            return node
        tree.feature[node] = int(feature_ids[feat_local])
        tree.threshold[node] = threshold
        tree.left[node] = grow(left_rows, depth + 1)
        tree.right[node] = grow(right_rows, depth + 1)
        return node

    grow(np.arange(X_node.shape[0]), 0)
    return tree


@dataclass
class GBTModel:
    base_prediction: float
    learning_rate: float
    trees: list[RegressionTree]
    hyperparams: GBTHyperparams
    feature_names: tuple[str, ...] | None = None
    n_features: int = 0

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise SchemaError(
                f"model expects {self.n_features} features, got input of "
                f"shape {X.shape}"
            )
        out = np.full(X.shape[0], self.base_prediction, dtype=np.float64)
        for tree in self.trees:
            out += self.learning_rate * tree.predict(X)
        return out


def fit_gbt(
    X: np.ndarray,
    y: np.ndarray,
    hp: GBTHyperparams,
    seed: int = 0,
    *,
    feature_names: Sequence[str] | None = None,
) -> GBTModel:
    """Stagewise least-squares boosting on residuals.

    Per round, rows then columns are drawn without replacement (at least
    one of each), a tree is grown on the drawn submatrix, and predictions
    for ALL rows advance by learning_rate times the tree output.
    """
    X, y = _validate_xy(X, y)
    n, p = X.shape
    if n < 2:
        raise DataError(f"boosting needs at least 2 rows, got {n}")
    rng = derived_rng(seed, "gbt")
    n_rows_draw = max(1, int(hp.subsample * n))
    n_cols_draw = max(1, int(hp.colsample_bytree * p))
    base = float(y.mean())
    pred = np.full(n, base)
    trees: list[RegressionTree] = []
    for _ in range(hp.n_estimators):
        rows = np.sort(rng.permutation(n)[:n_rows_draw])
        cols = np.sort(rng.permutation(p)[:n_cols_draw])
        residuals = y[rows] - pred[rows]
        tree = _grow_tree(
            X[np.ix_(rows, cols)],
            residuals,
            max_depth=hp.max_depth,
            gamma=hp.gamma,
            feature_ids=cols,
        )
        trees.append(tree)
        pred += hp.learning_rate * tree.predict(X)
    return GBTModel(
        base_prediction=base,
        learning_rate=hp.learning_rate,
        trees=trees,
        hyperparams=hp,
        feature_names=tuple(feature_names) if feature_names else None,
        n_features=p,
    )


def _r_squared(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    ss_res = float(((y_true - y_pred) ** 2).sum())
    ss_tot = float(((y_true - y_true.mean()) ** 2).sum())
    if ss_tot == 0.0:
        return 1.0 if ss_res == 0.0 else float("-inf")
    return 1.0 - ss_res / ss_tot


def _draw_hyperparams(rng: np.random.Generator) -> GBTHyperparams:
    # Draw order is part of the determinism contract; do not reorder.
    learning_rate = float(rng.uniform(0.02, 0.3))
    max_depth = int(rng.integers(2, 7))
    n_estimators = int(rng.integers(100, 151))
    gamma = float(rng.uniform(0.0, 0.5))
    colsample = float(rng.uniform(0.2, 0.8))
    subsample = float(rng.uniform(0.3, 0.7))
    return GBTHyperparams(
        n_estimators=n_estimators,
        max_depth=max_depth,
        learning_rate=learning_rate,
        subsample=subsample,
        colsample_bytree=colsample,
        gamma=gamma,
    )


def random_search_gbt(
    X: np.ndarray,
    y: np.ndarray,
    *,
    n_iter: int = 100,
    folds: int = 5,
    seed: int = 0,
    feature_names: Sequence[str] | None = None,
) -> tuple[GBTModel, GBTHyperparams]:
    """Uniform random hyperparameter search scored by mean k-fold R^2.

    All candidates share one shuffled fold assignment (fair comparison);
    the best mean validation R^2 wins, ties going to the earliest draw,
    and the winner is refit on all rows.
    """
    X, y = _validate_xy(X, y)
    n = X.shape[0]
    if n < folds:
        raise DataError(
            f"need at least {folds} rows for {folds}-fold CV, got {n}"
        )
    if n_iter < 1:
        raise DataError("n_iter must be >= 1")
    fold_indices = shuffled_fold_indices(n, folds, derived_rng(seed, "gbt-cv"))
    all_rows = np.arange(n)
    best_score = float("-inf")
    best_hp: GBTHyperparams | None = None
    for i in range(n_iter):
        hp = _draw_hyperparams(derived_rng(seed, "gbt-draw", i))
        scores = []
        for f, val_rows in enumerate(fold_indices):
            mask = np.ones(n, dtype=bool)
            mask[val_rows] = False
            train_rows = all_rows[mask]
            model = fit_gbt(
                X[train_rows],
                y[train_rows],
                hp,
                seed=_fold_seed(seed, i, f),
            )
            scores.append(_r_squared(y[val_rows], model.predict(X[val_rows])))
        mean_score = float(np.mean(scores))
        # `best_hp is None` keeps the earliest draw when every draw scores
        # -inf (degenerate validation folds), matching the tie rule.
        if best_hp is None or mean_score > best_score:
            best_score = mean_score
            best_hp = hp
    final = fit_gbt(
        X, y, best_hp, seed=_refit_seed(seed), feature_names=feature_names
    )
    return final, best_hp


def _fold_seed(seed: int, draw: int, fold: int) -> int:
    return mixed_seed(seed, "gbt-fit", draw, fold)


def _refit_seed(seed: int) -> int:
    return mixed_seed(seed, "gbt-refit")


# ---------------------------------------------------------------------------
# Protocol dispatch
# ---------------------------------------------------------------------------


class MetaAlgorithm(str, Enum):
    """The four meta-regressor classes, valued by their file-name tags."""

    LINREG = "LinReg"
    LASSO = "Lasso"
    ELASTICNET = "ElasticNet"
    GBT = "XGB"

    @classmethod
    def parse(cls, text: str) -> "MetaAlgorithm":
        lookup = {
            "linreg": cls.LINREG,
            "ols": cls.LINREG,
            "lasso": cls.LASSO,
            "elasticnet": cls.ELASTICNET,
            "xgb": cls.GBT,
            "gbt": cls.GBT,
        }
        try:
            return lookup[text.strip().lower()]
        except KeyError as exc:
            raise DataError(f"unknown algorithm {text!r}") from exc


@dataclass(frozen=True)
class ProtocolParams:
    """Budgets for the selection protocols.

    Defaults are the full protocol sizes (100 LASSO repeats, 10 ElasticNet
    repeats per ratio, 100 search draws, 5 folds, up to 22 principal
    components). ``pc_sweep`` optionally overrides the budgets used inside
    the per-k component sweep, which would otherwise multiply the full
    protocol cost by k_max.
    """

    cv_folds: int = 5
    lasso_repeats: int = 100
    enet_repeats_per_ratio: int = 10
    enet_l1_ratios: tuple[float, ...] = (0.1, 0.5, 0.7, 0.9, 0.95, 0.99, 1.0)
    n_alphas: int = 100
    alpha_min_ratio: float = 1e-3
    gbt_search_iters: int = 100
    max_sweeps: int = 10_000
    pc_k_max: int = 22
    pc_val_fraction: float = 0.2
    pc_sweep: "ProtocolParams | None" = None

    def sweep_params(self) -> "ProtocolParams":
        if self.pc_sweep is None:
            return self
        # The sweep override never recurses further.
        return replace(self.pc_sweep, pc_sweep=None)


def fit_algorithm(
    algorithm: MetaAlgorithm,
    X: np.ndarray,
    y: np.ndarray,
    *,
    seed: int = 0,
    params: ProtocolParams = ProtocolParams(),
    feature_names: Sequence[str] | None = None,
) -> LinearModel | GBTModel:
    """Run one algorithm's full selection protocol and return its model."""
    if algorithm is MetaAlgorithm.LINREG:
        return fit_ols(X, y, feature_names=feature_names)
    if algorithm is MetaAlgorithm.LASSO:
        return fit_lasso_cv(
            X,
            y,
            folds=params.cv_folds,
            repeats=params.lasso_repeats,
            seed=seed,
            n_alphas=params.n_alphas,
            eps=params.alpha_min_ratio,
            max_sweeps=params.max_sweeps,
            feature_names=feature_names,
        )
    if algorithm is MetaAlgorithm.ELASTICNET:
        return fit_elasticnet_cv(
            X,
            y,
            folds=params.cv_folds,
            repeats_per_ratio=params.enet_repeats_per_ratio,
            l1_ratios=params.enet_l1_ratios,
            seed=seed,
            n_alphas=params.n_alphas,
            eps=params.alpha_min_ratio,
            max_sweeps=params.max_sweeps,
            feature_names=feature_names,
        )
    if algorithm is MetaAlgorithm.GBT:
        model, _ = random_search_gbt(
            X,
            y,
            n_iter=params.gbt_search_iters,
            folds=params.cv_folds,
            seed=seed,
            feature_names=feature_names,
        )
        return model
    raise DataError(f"unknown algorithm {algorithm!r}")


def predict(model: LinearModel | GBTModel, X: np.ndarray) -> np.ndarray:
    """Predict with either model kind; width mismatches raise SchemaError."""
    if isinstance(model, (LinearModel, GBTModel)):
        return model.predict(np.asarray(X, dtype=np.float64))
    raise SchemaError(f"unsupported model type {type(model).__name__}")


# ---------------------------------------------------------------------------
# Model persistence
# ---------------------------------------------------------------------------

_MODEL_FORMAT_VERSION = 1


def model_to_json_dict(model: LinearModel | GBTModel) -> dict:
    """Library-independent JSON payload; floats survive round-trips exactly."""
    if isinstance(model, LinearModel):
        payload: dict = {
            "kind": "linear",
            "format_version": _MODEL_FORMAT_VERSION,
            "algorithm": model.algorithm.value,
            "objective": "(1/(2n))||y-Xb||^2 + a*r*|b|_1 + a*(1-r)/2*|b|_2^2",
            "feature_names": list(model.feature_names)
            if model.feature_names
            else None,
            "coefficients": [float(c) for c in model.coefficients],
            "intercept": model.intercept,
            "alpha": model.alpha,
            "l1_ratio": model.l1_ratio,
            "standardizer": {
                "mean": [float(v) for v in model.standardizer.mean],
                "scale": [float(v) for v in model.standardizer.scale],
            },
        }
        if model.diagnostics is not None:
            d = model.diagnostics
            payload["diagnostics"] = {
                "converged": d.converged,
                "sweeps": d.sweeps,
                "duality_gap": d.duality_gap,
                "tol": d.tol,
                "certificate": d.certificate,
                "warning": d.warning,
            }
        else:
            payload["diagnostics"] = None
        payload["selection"] = model.selection
        return payload
    if isinstance(model, GBTModel):
        return {
            "kind": "gbt",
            "format_version": _MODEL_FORMAT_VERSION,
            "feature_names": list(model.feature_names)
            if model.feature_names
            else None,
            "n_features": model.n_features,
            "base_prediction": model.base_prediction,
            "learning_rate": model.learning_rate,
            "hyperparams": {
                "n_estimators": model.hyperparams.n_estimators,
                "max_depth": model.hyperparams.max_depth,
                "learning_rate": model.hyperparams.learning_rate,
                "subsample": model.hyperparams.subsample,
                "colsample_bytree": model.hyperparams.colsample_bytree,
                "gamma": model.hyperparams.gamma,
            },
            "trees": [
                {
                    "feature": tree.feature,
                    "threshold": tree.threshold,
                    "left": tree.left,
                    "right": tree.right,
                    "value": tree.value,
                }
                for tree in model.trees
            ],
        }
    raise SchemaError(f"unsupported model type {type(model).__name__}")


def model_from_json_dict(payload: dict) -> LinearModel | GBTModel:
    kind = payload.get("kind")
    if kind == "linear":
        diagnostics = None
        if payload.get("diagnostics") is not None:
            d = payload["diagnostics"]
            diagnostics = Diagnostics(
                converged=d["converged"],
                sweeps=d["sweeps"],
                duality_gap=d["duality_gap"],
                tol=d["tol"],
                certificate=d.get("certificate", "duality_gap"),
                warning=d.get("warning"),
            )
        return LinearModel(
            algorithm=LinearAlgorithm(payload["algorithm"]),
            coefficients=np.asarray(payload["coefficients"], dtype=np.float64),
            intercept=float(payload["intercept"]),
            standardizer=Standardizer(
                mean=np.asarray(payload["standardizer"]["mean"]),
                scale=np.asarray(payload["standardizer"]["scale"]),
            ),
            alpha=float(payload["alpha"]),
            l1_ratio=float(payload["l1_ratio"]),
            feature_names=tuple(payload["feature_names"])
            if payload.get("feature_names")
            else None,
            diagnostics=diagnostics,
            selection=payload.get("selection"),
        )
    if kind == "gbt":
        hp = payload["hyperparams"]
        return GBTModel(
            base_prediction=float(payload["base_prediction"]),
            learning_rate=float(payload["learning_rate"]),
            trees=[
                RegressionTree(
                    feature=list(t["feature"]),
                    threshold=[float(v) for v in t["threshold"]],
                    left=list(t["left"]),
                    right=list(t["right"]),
                    value=[float(v) for v in t["value"]],
                )
                for t in payload["trees"]
            ],
            hyperparams=GBTHyperparams(
                n_estimators=int(hp["n_estimators"]),
                max_depth=int(hp["max_depth"]),
                learning_rate=float(hp["learning_rate"]),
                subsample=float(hp["subsample"]),
                colsample_bytree=float(hp["colsample_bytree"]),
                gamma=float(hp["gamma"]),
            ),
            feature_names=tuple(payload["feature_names"])
            if payload.get("feature_names")
            else None,
            n_features=int(payload["n_features"]),
        )
    raise SchemaError(f"unknown model kind {kind!r}")
