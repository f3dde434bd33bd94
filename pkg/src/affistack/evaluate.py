"""Evaluation metrics and statistical analyses.

Correlation and error metrics for affinity regression, a Monte Carlo
subsampling null for correlation comparisons, a per-complex winner
partition across predictor families, virtual-screening enrichment metrics
(top-k recall, precision at the active count), and two-sample tests
(Welch's t, Mann-Whitney U) — all hand-rolled on numpy except the
regularized incomplete beta / erfc tail functions, which come from scipy.

Conventions: two-sided p-values throughout; screening scores rank
ascending by default (lower predicted ln-affinity = stronger binder),
with an explicit orientation flag because score tables arrive on both
energy-like and ln-Kd-like scales.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np
from scipy.special import betainc, erfc

from .errors import DataError, NumericalError, SchemaError
from .ingest import format_float
from .seeding import derived_rng

__all__ = [
    "EvaluationReport",
    "MonteCarloNull",
    "SynergyPartition",
    "TargetScreenReport",
    "average_ranks",
    "evaluation_report",
    "grouped_report",
    "mann_whitney_u",
    "monte_carlo_subsample_null",
    "mse_rmse",
    "pearson",
    "precision_at_actives",
    "report_to_json_dict",
    "reports_to_tsv",
    "screen_report_to_tsv",
    "screen_target",
    "spearman",
    "synergy_partition",
    "topk_recall",
    "welch_t",
]


def _as_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise DataError("inputs must be 1-D")
    if a.shape != b.shape:
        raise DataError(f"length mismatch: {a.shape[0]} vs {b.shape[0]}")
    if not np.all(np.isfinite(a)) or not np.all(np.isfinite(b)):
        raise DataError("non-finite value in metric input")
    return a, b


# ---------------------------------------------------------------------------
# Correlations and errors
# ---------------------------------------------------------------------------


def pearson(x, y) -> float:
    """Sample product-moment correlation; constant input is undefined."""
    a, b = _as_pair(x, y)
    if a.shape[0] < 2:
        raise DataError("pearson requires at least 2 pairs")
    ac = a - a.mean()
    bc = b - b.mean()
    denom = math.sqrt(float(ac @ ac) * float(bc @ bc))
    if denom == 0.0:
        raise NumericalError("correlation undefined for a constant vector")
    r = float(ac @ bc) / denom
    return max(-1.0, min(1.0, r))


def average_ranks(values) -> np.ndarray:
    """1-based ranks with tied values sharing their average rank."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.shape[0], dtype=np.float64)
    i = 0
    while i < v.shape[0]:
        j = i
        while j + 1 < v.shape[0] and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    """Rank correlation: average ranks for ties, then Pearson of ranks."""
    a, b = _as_pair(x, y)
    if a.shape[0] < 2:
        raise DataError("spearman requires at least 2 pairs")
    return pearson(average_ranks(a), average_ranks(b))


def mse_rmse(pred, truth) -> tuple[float, float]:
    a, b = _as_pair(pred, truth)
    if a.shape[0] < 1:
        raise DataError("mse requires at least 1 pair")
    mse = float(np.mean((a - b) ** 2))
    return mse, math.sqrt(mse)


# ---------------------------------------------------------------------------
# Monte Carlo subsampling null
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MonteCarloNull:
    """Sorted empirical distribution of subsample correlations."""

    samples: np.ndarray  # ascending
    subset_size: int
    seed: int

    def quantile(self, q: float) -> float:
        if not 0.0 <= q <= 1.0:
            raise DataError(f"quantile must be in [0, 1], got {q}")
        return float(np.quantile(self.samples, q))


def monte_carlo_subsample_null(
    pred,
    truth,
    subset_size: int,
    *,
    iters: int = 1000,
    seed: int = 0,
) -> MonteCarloNull:
    """Distribution of Pearson r over uniform without-replacement subsets.

    Iterations draw from per-iteration derived RNG streams, so the result
    is identical however the loop is scheduled; the samples are returned
    sorted for deterministic reduction.
    """
    a, b = _as_pair(pred, truth)
    n = a.shape[0]
    if subset_size < 3:
        raise DataError(f"subset_size must be >= 3, got {subset_size}")
    if subset_size > n:
        raise DataError(f"subset_size {subset_size} exceeds n = {n}")
    if iters < 1:
        raise DataError("iters must be >= 1")
    values = np.empty(iters)
    for i in range(iters):
        rng = derived_rng(seed, "iter", i)
        rows = rng.permutation(n)[:subset_size]
        values[i] = pearson(a[rows], b[rows])
    values.sort()
    return MonteCarloNull(samples=values, subset_size=subset_size, seed=seed)


# ---------------------------------------------------------------------------
# Per-complex winner partition
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynergyPartition:
    """Which predictor family wins (smallest absolute error) per complex."""

    groups: tuple[str, ...]
    counts: dict[str, int]
    assignment: dict[str, str]

    def __post_init__(self) -> None:
        if sum(self.counts.values()) != len(self.assignment):
            raise DataError("synergy counts do not sum to the complex count")


def synergy_partition(
    abs_errors: Mapping[str, Mapping[str, float]],
    *,
    groups: tuple[str, ...] = ("META", "DL", "DOCK"),
) -> SynergyPartition:
    """Assign each complex to the group with the smallest absolute error.

    Ties go to the group listed earliest in ``groups`` (default priority
    META > DL > DOCK). Every complex must carry exactly the requested
    groups. The two-group variant is the same call with a 2-tuple.
    """
    if len(groups) < 2:
        raise DataError("synergy partition needs at least 2 groups")
    counts = {g: 0 for g in groups}
    assignment: dict[str, str] = {}
    for complex_id in sorted(abs_errors):
        errors = abs_errors[complex_id]
        missing = [g for g in groups if g not in errors]
        if missing:
            raise SchemaError(
                f"complex {complex_id!r} is missing error(s) for "
                f"{', '.join(missing)}"
            )
        winner = min(groups, key=lambda g: (float(errors[g]), groups.index(g)))
        assignment[complex_id] = winner
        counts[winner] += 1
    return SynergyPartition(groups=groups, counts=counts, assignment=assignment)


# ---------------------------------------------------------------------------
# Screening enrichment
# ---------------------------------------------------------------------------


def topk_recall(
    scores: Sequence[float],
    labels: Sequence[bool],
    k: int,
    *,
    ligand_ids: Sequence | None = None,
    ascending: bool = True,
) -> float:
    """Fraction of the k best-ranked ligands that are active.

    ``ascending=True`` means lower score = stronger binder = ranked first.
    Score ties break deterministically by ligand id (positional index when
    ids are not supplied).
    """
    s = np.asarray(scores, dtype=np.float64)
    flags = [bool(v) for v in labels]
    n = s.shape[0]
    if len(flags) != n:
        raise DataError("scores and labels length mismatch")
    if k <= 0:
        raise DataError(f"k must be positive, got {k}")
    if k > n:
        raise DataError(f"k = {k} exceeds the number of ligands ({n})")
    if not np.all(np.isfinite(s)):
        raise DataError("non-finite score")
    ids = list(ligand_ids) if ligand_ids is not None else list(range(n))
    if len(ids) != n:
        raise DataError("ligand_ids length mismatch")
    order = sorted(
        range(n), key=lambda i: (s[i] if ascending else -s[i], ids[i])
    )
    hits = sum(1 for i in order[:k] if flags[i])
    return hits / k


def precision_at_actives(
    scores: Sequence[float],
    labels: Sequence[bool],
    *,
    ligand_ids: Sequence | None = None,
    ascending: bool = True,
) -> float:
    """topk_recall with k equal to the number of active ligands."""
    n_active = sum(1 for v in labels if bool(v))
    if n_active == 0:
        raise DataError("precision_at_actives is undefined with no actives")
    return topk_recall(
        scores, labels, n_active, ligand_ids=ligand_ids, ascending=ascending
    )


# ---------------------------------------------------------------------------
# Two-sample tests
# ---------------------------------------------------------------------------


def welch_t(a, b) -> tuple[float, float]:
    """Welch's unequal-variance t-test, two-sided.

    The p-value is the Student-t tail computed through the regularized
    incomplete beta function at Welch-Satterthwaite degrees of freedom.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise DataError("samples must be 1-D")
    if x.shape[0] < 2 or y.shape[0] < 2:
        raise DataError("welch_t requires at least 2 values per sample")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise DataError("non-finite value in sample")
    na, nb = x.shape[0], y.shape[0]
    va = float(x.var(ddof=1))
    vb = float(y.var(ddof=1))
    if va == 0.0 and vb == 0.0:
        raise NumericalError(
            "both samples have zero variance; t statistic undefined"
        )
    sa = va / na
    sb = vb / nb
    t = (float(x.mean()) - float(y.mean())) / math.sqrt(sa + sb)
    df = (sa + sb) ** 2 / (
        (sa * sa / (na - 1)) + (sb * sb / (nb - 1))
    )
    p = float(betainc(df / 2.0, 0.5, df / (df + t * t)))
    return t, min(1.0, max(0.0, p))


def _exact_u_tail(na: int, nb: int, u_obs: int) -> float:
    """P(U <= u_obs) by exact counting of rank arrangements (no ties).

    Counts subsets of {1..na+nb} of size na by rank sum with a subset-sum
    DP; counts stay below 2^53 for na*nb <= 400, so float64 arithmetic is
    exact.
    """
    n_total = na + nb
    s_max = na * n_total
    dp = np.zeros((na + 1, s_max + 1))
    dp[0, 0] = 1.0
    for rank in range(1, n_total + 1):
        for j in range(min(rank, na), 0, -1):
            dp[j, rank:] += dp[j - 1, : s_max + 1 - rank]
    offset = na * (na + 1) // 2  # smallest possible rank sum
    upper = offset + u_obs
    count_le = float(dp[na, offset : upper + 1].sum())
    return count_le / math.comb(n_total, na)


def _approx_u_p(u1: float, na: int, nb: int, tie_counts: np.ndarray) -> float:
    """Two-sided normal-approximation p with tie and continuity corrections."""
    n_total = na + nb
    mu = na * nb / 2.0
    tie_term = float(((tie_counts**3) - tie_counts).sum())
    sigma2 = (
        na * nb / 12.0 * ((n_total + 1) - tie_term / (n_total * (n_total - 1)))
    )
    if sigma2 <= 0.0:
        return 1.0
    z = max(0.0, (abs(u1 - mu) - 0.5) / math.sqrt(sigma2))
    return min(1.0, float(erfc(z / math.sqrt(2.0))))


def mann_whitney_u(a, b) -> tuple[float, float]:
    """Mann-Whitney U (for sample ``a``), two-sided.

    Tie-free small samples (n_a * n_b <= 400) get an exact enumeration
    p-value; otherwise a normal approximation with tie and continuity
    corrections. Zero rank variance (all values identical) gives p = 1.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.ndim != 1 or y.ndim != 1:
        raise DataError("samples must be 1-D")
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise DataError("mann_whitney_u requires non-empty samples")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise DataError("non-finite value in sample")
    na, nb = x.shape[0], y.shape[0]
    combined = np.concatenate([x, y])
    ranks = average_ranks(combined)
    r1 = float(ranks[:na].sum())
    u1 = r1 - na * (na + 1) / 2.0
    u2 = na * nb - u1
    has_ties = np.unique(combined).shape[0] < na + nb

    if na * nb <= 400 and not has_ties:
        u_min = int(round(min(u1, u2)))
        p = min(1.0, 2.0 * _exact_u_tail(na, nb, u_min))
        return u1, p

    _, tie_counts = np.unique(combined, return_counts=True)
    return u1, _approx_u_p(u1, na, nb, tie_counts)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvaluationReport:
    """Affinity-regression metrics over one set of complexes.

    ``None`` metrics mean "unavailable" (group too small or degenerate);
    grouped reporting uses that instead of aborting a whole table.
    """

    n: int
    pearson: float | None
    spearman: float | None
    mse: float | None
    rmse: float | None
    per_complex_abs_error: dict[str, float]

    def __post_init__(self) -> None:
        if self.n != len(self.per_complex_abs_error):
            raise DataError("n must equal the per-complex map size")
        if self.mse is not None and self.rmse is not None:
            if abs(self.rmse - math.sqrt(self.mse)) > 1e-12 * max(1.0, self.rmse):
                raise DataError("rmse must equal sqrt(mse)")

    @property
    def available(self) -> bool:
        return self.pearson is not None


def _aligned(
    predictions: Mapping[str, float], truth: Mapping[str, float]
) -> tuple[list[str], np.ndarray, np.ndarray]:
    missing = sorted(set(predictions) - set(truth))
    if missing:
        raise SchemaError(
            f"no truth value for {len(missing)} complex(es): "
            + ", ".join(missing[:8])
        )
    ids = sorted(predictions)
    p = np.array([predictions[i] for i in ids], dtype=np.float64)
    t = np.array([truth[i] for i in ids], dtype=np.float64)
    return ids, p, t


def evaluation_report(
    predictions: Mapping[str, float], truth: Mapping[str, float]
) -> EvaluationReport:
    """Full metric battery for one prediction table (raises on degenerate
    correlation input; use grouped_report for tolerant per-group tables)."""
    ids, p, t = _aligned(predictions, truth)
    if len(ids) < 2:
        raise DataError("evaluation requires at least 2 complexes")
    mse, rmse = mse_rmse(p, t)
    return EvaluationReport(
        n=len(ids),
        pearson=pearson(p, t),
        spearman=spearman(p, t),
        mse=mse,
        rmse=rmse,
        per_complex_abs_error={i: float(abs(a - b)) for i, a, b in zip(ids, p, t)},
    )


def grouped_report(
    predictions: Mapping[str, float],
    truth: Mapping[str, float],
    grouping: Mapping[str, Hashable] | Callable[[str], Hashable],
) -> dict[Hashable, EvaluationReport]:
    """Per-group metric reports (e.g. MW <= 900 vs > 900, or per-target).

    Groups with fewer than 2 complexes get an all-None report; a group
    whose values are constant gets None correlations but real errors.
    """
    key_of = grouping if callable(grouping) else grouping.__getitem__
    members: dict[Hashable, list[str]] = {}
    for complex_id in sorted(predictions):
        members.setdefault(key_of(complex_id), []).append(complex_id)
    out: dict[Hashable, EvaluationReport] = {}
    for group in members:
        ids = members[group]
        _, p, t = _aligned({i: predictions[i] for i in ids}, truth)
        abs_err = {i: float(abs(predictions[i] - truth[i])) for i in ids}
        if len(ids) < 2:
            out[group] = EvaluationReport(
                n=len(ids),
                pearson=None,
                spearman=None,
                mse=None,
                rmse=None,
                per_complex_abs_error=abs_err,
            )
            continue
        mse, rmse = mse_rmse(p, t)
        try:
            r = pearson(p, t)
            rho = spearman(p, t)
        except NumericalError:
            r = None
            rho = None
        out[group] = EvaluationReport(
            n=len(ids),
            pearson=r,
            spearman=rho,
            mse=mse,
            rmse=rmse,
            per_complex_abs_error=abs_err,
        )
    return out


@dataclass(frozen=True)
class TargetScreenReport:
    """Per-target screening metrics.

    Recall metrics are None when the target has fewer ligands than k; test
    statistics are None when either side of the active/inactive split is
    too small or degenerate.
    """

    target: str
    n_ligands: int
    n_actives: int
    top5_recall: float | None
    top10_recall: float | None
    precision_at_actives: float | None
    welch_t: float | None
    welch_p: float | None
    mwu_u: float | None
    mwu_p: float | None

    def __post_init__(self) -> None:
        for name in ("top5_recall", "top10_recall", "precision_at_actives"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise DataError(f"{name} outside [0, 1]: {v}")
        for name in ("welch_p", "mwu_p"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise DataError(f"{name} outside [0, 1]: {v}")


def screen_target(
    target: str,
    scores: Mapping[str, float],
    actives: Sequence[str],
    *,
    ascending: bool = True,
) -> TargetScreenReport:
    """Enrichment metrics and active-vs-inactive tests for one target."""
    ids = sorted(scores)
    active_set = set(actives)
    unknown = sorted(active_set - set(ids))
    if unknown:
        raise SchemaError(
            f"active ligand(s) not in score table: {', '.join(unknown[:8])}"
        )
    values = [float(scores[i]) for i in ids]
    flags = [i in active_set for i in ids]
    n = len(ids)
    n_active = sum(flags)

    def recall(k: int) -> float | None:
        if k > n:
            return None
        return topk_recall(values, flags, k, ligand_ids=ids, ascending=ascending)

    prec = None
    if n_active > 0:
        prec = precision_at_actives(
            values, flags, ligand_ids=ids, ascending=ascending
        )
    a_scores = [v for v, f in zip(values, flags) if f]
    b_scores = [v for v, f in zip(values, flags) if not f]
    t_stat = t_p = None
    if len(a_scores) >= 2 and len(b_scores) >= 2:
        try:
            t_stat, t_p = welch_t(a_scores, b_scores)
        except NumericalError:
            t_stat = t_p = None
    u_stat = u_p = None
    if a_scores and b_scores:
        u_stat, u_p = mann_whitney_u(a_scores, b_scores)
    return TargetScreenReport(
        target=target,
        n_ligands=n,
        n_actives=n_active,
        top5_recall=recall(5),
        top10_recall=recall(10),
        precision_at_actives=prec,
        welch_t=t_stat,
        welch_p=t_p,
        mwu_u=u_stat,
        mwu_p=u_p,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def _cell(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, float):
        return format_float(v)
    return str(v)


def report_to_json_dict(report: EvaluationReport) -> dict:
    return {
        "n": report.n,
        "pearson": report.pearson,
        "spearman": report.spearman,
        "mse": report.mse,
        "rmse": report.rmse,
        "per_complex_abs_error": dict(
            sorted(report.per_complex_abs_error.items())
        ),
    }


def reports_to_tsv(reports: Mapping[Hashable, EvaluationReport]) -> str:
    """One metrics row per group, NA for unavailable values."""
    lines = ["group\tn\tpearson\tspearman\tmse\trmse"]
    for group in sorted(reports, key=str):
        r = reports[group]
        lines.append(
            "\t".join(
                [
                    str(group),
                    str(r.n),
                    _cell(r.pearson),
                    _cell(r.spearman),
                    _cell(r.mse),
                    _cell(r.rmse),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def screen_report_to_tsv(reports: Sequence[TargetScreenReport]) -> str:
    """One row per target with every enrichment metric and test."""
    lines = [
        "target\tn_ligands\tn_actives\ttop5_recall\ttop10_recall"
        "\tprecision_at_actives\twelch_t\twelch_p\tmwu_u\tmwu_p"
    ]
    for r in sorted(reports, key=lambda rep: rep.target):
        lines.append(
            "\t".join(
                [
                    r.target,
                    str(r.n_ligands),
                    str(r.n_actives),
                    _cell(r.top5_recall),
                    _cell(r.top10_recall),
                    _cell(r.precision_at_actives),
                    _cell(r.welch_t),
                    _cell(r.welch_p),
                    _cell(r.mwu_u),
                    _cell(r.mwu_p),
                ]
            )
        )
    return "\n".join(lines) + "\n"
