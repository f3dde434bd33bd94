"""Command-line surface: reproducible runs with persisted artifacts.

Subcommands: filter-poses, assemble, train, predict, evaluate, screen,
report. One config file (JSON or TOML) declares the data paths, the run
matrix (feature groups x algorithms x filter modes x cutoffs), protocol
budgets, the master seed, and the screening score orientation. All
randomness flows from that one seed — no wall-clock, no OS entropy — so
rerunning a command with identical inputs reproduces identical bytes.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Mapping, Sequence

from ._version import VERSION
from .errors import (
    AffistackError,
    ConfigError,
    DataError,
    NumericalError,
    ParseError,
)
from .evaluate import (
    evaluation_report,
    grouped_report,
    report_to_json_dict,
    reports_to_tsv,
    screen_report_to_tsv,
    screen_target,
    synergy_partition,
)
from .features import (
    FeatureGroup,
    FeatureGroupSpec,
    assemble_features,
    write_feature_matrix,
)
from .ingest import (
    AffinityLabel,
    Cohort,
    CohortRecord,
    GroupTag,
    Molecule,
    Partition,
    Pose,
    PoseSet,
    ScoringFunction,
    format_float,
    parse_labels,
    parse_partitions,
    parse_score_table,
    parse_sdf,
)
from .learners import MetaAlgorithm, ProtocolParams
from .pipeline import (
    MatrixCell,
    cohort_fingerprint,
    load_fitted_model,
    predict_meta,
    run_matrix,
    write_json_atomic,
    write_text_atomic,
)
from .pose_rmsd import (
    SELECTION_CUTOFF,
    FilterMode,
    RmsdFilterMode,
    filter_cohort,
    write_filter_table,
)

__all__ = ["RunConfig", "load_cohort", "load_run_config", "main"]

log = logging.getLogger("affistack")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    seed: int
    out_dir: Path
    labels_path: Path
    partitions_path: Path
    table_paths: dict[str, Path]
    docking_paths: dict[ScoringFunction, Path]
    poses_dir: Path
    experimental_dir: Path | None
    ligands_dir: Path | None
    groups: tuple[FeatureGroup, ...]
    algorithms: tuple[MetaAlgorithm, ...]
    modes: tuple[FilterMode, ...]
    cutoffs: tuple[float, ...]
    params: ProtocolParams
    screening_ascending: bool


def _parse_protocol(payload: Mapping) -> ProtocolParams:
    known = {f.name for f in fields(ProtocolParams)}
    unknown = sorted(set(payload) - known)
    if unknown:
        raise ConfigError(f"unknown protocol key(s): {', '.join(unknown)}")
    kwargs = dict(payload)
    if "enet_l1_ratios" in kwargs:
        kwargs["enet_l1_ratios"] = tuple(
            float(v) for v in kwargs["enet_l1_ratios"]
        )
    if kwargs.get("pc_sweep") is not None:
        kwargs["pc_sweep"] = _parse_protocol(kwargs["pc_sweep"])
    try:
        return ProtocolParams(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"invalid protocol section: {exc}") from exc


def _require_path(base: Path, value: str, what: str) -> Path:
    path = (base / value).resolve() if not Path(value).is_absolute() else Path(value)
    if not path.exists():
        raise ConfigError(f"{what} does not exist: {path}")
    return path


def load_run_config(config_path: Path) -> RunConfig:
    """Read a JSON or TOML run config; relative paths resolve against it."""
    config_path = Path(config_path)
    if not config_path.exists():
        raise ConfigError(f"config file does not exist: {config_path}")
    text = config_path.read_text(encoding="utf-8")
    if config_path.suffix.lower() == ".toml":
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:  # pragma: no cover - version-dependent
            import tomli as tomllib
        try:
            payload = tomllib.loads(text)
        except Exception as exc:
            raise ConfigError(f"{config_path}: invalid TOML ({exc})") from exc
    else:
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{config_path}: invalid JSON ({exc})") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{config_path}: config must be a table/object")

    base = config_path.parent
    try:
        data = payload["data"]
        matrix = payload["matrix"]
    except KeyError as exc:
        raise ConfigError(f"config missing section {exc.args[0]!r}") from exc

    table_paths = {
        str(name): _require_path(base, path, f"table {name!r}")
        for name, path in dict(data.get("tables", {})).items()
    }
    for name in table_paths:
        if name not in GroupTag._value2member_map_:
            raise ConfigError(f"unknown table tag {name!r}")
    docking = dict(data.get("docking_scores", {}))
    missing_tools = [
        t.value for t in ScoringFunction if t.value not in docking
    ]
    if missing_tools:
        raise ConfigError(
            f"docking_scores must cover: {', '.join(missing_tools)}"
        )
    groups = tuple(FeatureGroup.parse(g) for g in matrix.get("groups", []))
    algorithms = tuple(
        MetaAlgorithm.parse(a) for a in matrix.get("algorithms", [])
    )
    modes = tuple(FilterMode.from_tag(m) for m in matrix.get("modes", []))
    cutoffs = tuple(float(c) for c in matrix.get("cutoffs", []))
    if not (groups and algorithms and modes and cutoffs):
        raise ConfigError(
            "matrix must list groups, algorithms, modes, and cutoffs"
        )
    seed = payload.get("seed")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError("config 'seed' must be an integer")

    experimental_dir = (
        _require_path(base, data["experimental_dir"], "experimental_dir")
        if data.get("experimental_dir")
        else None
    )
    ligands_dir = (
        _require_path(base, data["ligands_dir"], "ligands_dir")
        if data.get("ligands_dir")
        else None
    )
    out_value = str(payload.get("out_dir", "runs"))
    out_dir = (
        Path(out_value)
        if Path(out_value).is_absolute()
        else (base / out_value)
    )
    return RunConfig(
        seed=seed,
        out_dir=out_dir,
        labels_path=_require_path(base, data["labels"], "labels"),
        partitions_path=_require_path(base, data["partitions"], "partitions"),
        table_paths=table_paths,
        docking_paths={
            ScoringFunction(tool): _require_path(
                base, path, f"docking scores for {tool}"
            )
            for tool, path in docking.items()
        },
        poses_dir=_require_path(base, data["poses_dir"], "poses_dir"),
        experimental_dir=experimental_dir,
        ligands_dir=ligands_dir,
        groups=groups,
        algorithms=algorithms,
        modes=modes,
        cutoffs=cutoffs,
        params=_parse_protocol(payload.get("protocol", {})),
        screening_ascending=bool(
            payload.get("screening", {}).get("ascending", True)
        ),
    )


# ---------------------------------------------------------------------------
# Cohort loading
# ---------------------------------------------------------------------------


def _parse_docking_scores(
    text: str, tool: ScoringFunction, path: Path
) -> dict[str, list[float]]:
    """Per-complex rank-ordered energies from a complex_id/rank/energy TSV."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or tuple(lines[0].split("\t")) != ("complex_id", "rank", "energy"):
        raise ParseError(
            f"{path}: docking-score header must be complex_id\trank\tenergy"
        )
    energies: dict[str, list[float]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != 3:
            raise ParseError(f"{path}:{lineno}: expected 3 cells")
        complex_id, rank_cell, energy_cell = cells
        rows = energies.setdefault(complex_id, [])
        try:
            rank = int(rank_cell)
            energy = float(energy_cell)
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: non-numeric cell") from exc
        if rank != len(rows):
            raise ParseError(
                f"{path}:{lineno}: complex {complex_id!r} ({tool.value}) "
                f"rank {rank} out of order (expected {len(rows)})"
            )
        rows.append(energy)
    return energies


def _read_single_molecule(path: Path, what: str) -> Molecule | None:
    if not path.exists():
        return None
    try:
        molecules = parse_sdf(path.read_text(encoding="utf-8"))
    except (ParseError, DataError, UnicodeDecodeError) as exc:
        log.warning("%s unreadable (%s); treating as absent", what, exc)
        return None
    return molecules[0] if molecules else None


def _load_pose_set(
    config: RunConfig,
    complex_id: str,
    tool: ScoringFunction,
    energies: list[float],
) -> PoseSet:
    path = config.poses_dir / f"{complex_id}_{tool.value}.sdf"
    molecules: list[Molecule] | None = None
    if path.exists():
        try:
            molecules = parse_sdf(path.read_text(encoding="utf-8"))
        except (ParseError, DataError, UnicodeDecodeError) as exc:
            log.warning(
                "pose file %s unreadable (%s); marking %s/%s failed",
                path,
                exc,
                complex_id,
                tool.value,
            )
            molecules = None
    if molecules is None:
        return PoseSet(
            complex_id=complex_id,
            scoring_function=tool,
            poses=tuple(
                Pose(rank=r, energy=e, molecule=None)
                for r, e in enumerate(energies)
            ),
            failed=True,
        )
    if len(molecules) != len(energies):
        raise DataError(
            f"{path}: {len(molecules)} pose record(s) but "
            f"{len(energies)} scored rank(s) for {complex_id!r}"
        )
    return PoseSet(
        complex_id=complex_id,
        scoring_function=tool,
        poses=tuple(
            Pose(rank=r, energy=e, molecule=m)
            for r, (e, m) in enumerate(zip(energies, molecules))
        ),
        failed=False,
    )


def load_cohort(config: RunConfig) -> Cohort:
    """Materialize the cohort the config points at.

    The partition table is the roster: every listed complex must have
    docking scores for both tools; labels are optional per complex; a
    missing pose SDF (with scores present) is a failed tool; base tables
    must cover the whole roster.
    """
    labels = parse_labels(config.labels_path.read_text(encoding="utf-8"))
    partitions = parse_partitions(
        config.partitions_path.read_text(encoding="utf-8")
    )
    docking: dict[ScoringFunction, dict[str, list[float]]] = {
        tool: _parse_docking_scores(
            path.read_text(encoding="utf-8"), tool, path
        )
        for tool, path in config.docking_paths.items()
    }
    records: dict[str, CohortRecord] = {}
    for complex_id, partition in partitions.items():
        pose_sets: dict[ScoringFunction, PoseSet] = {}
        for tool in ScoringFunction:
            energies = docking[tool].get(complex_id)
            if not energies:
                raise DataError(
                    f"complex {complex_id!r}: no {tool.value} docking scores"
                )
            pose_sets[tool] = _load_pose_set(config, complex_id, tool, energies)
        experimental = (
            _read_single_molecule(
                config.experimental_dir / f"{complex_id}.sdf",
                f"experimental structure for {complex_id!r}",
            )
            if config.experimental_dir
            else None
        )
        ligand = (
            _read_single_molecule(
                config.ligands_dir / f"{complex_id}.sdf",
                f"ligand structure for {complex_id!r}",
            )
            if config.ligands_dir
            else None
        )
        records[complex_id] = CohortRecord(
            complex_id=complex_id,
            partition=partition,
            label=labels.get(complex_id),
            pose_sets=pose_sets,
            experimental_pose=experimental,
            ligand=ligand,
        )
    base_tables = {}
    roster = list(records)
    for name, path in config.table_paths.items():
        table = parse_score_table(path.read_text(encoding="utf-8"), name)
        missing = [i for i in roster if i not in table.rows]
        if missing:
            raise DataError(
                f"table {name!r} is missing {len(missing)} complex(es): "
                + ", ".join(missing[:8])
            )
        base_tables[name] = table
    return Cohort(records=records, base_tables=base_tables)


def _file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# Small artifact formats
# ---------------------------------------------------------------------------


def _write_predictions(path: Path, predictions: Mapping[str, float]) -> None:
    lines = ["complex_id\tprediction"]
    for complex_id in sorted(predictions):
        lines.append(f"{complex_id}\t{format_float(predictions[complex_id])}")
    write_text_atomic(path, "\n".join(lines) + "\n")


def _parse_predictions(text: str, path: Path) -> dict[str, float]:
    lines = [ln for ln in text.split("\n") if ln]
    if not lines or tuple(lines[0].split("\t")) != ("complex_id", "prediction"):
        raise ParseError(
            f"{path}: predictions header must be complex_id\tprediction"
        )
    out: dict[str, float] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != 2:
            raise ParseError(f"{path}:{lineno}: expected 2 cells")
        if cells[0] in out:
            raise ParseError(f"{path}:{lineno}: duplicate id {cells[0]!r}")
        try:
            out[cells[0]] = float(cells[1])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: non-numeric value") from exc
    return out


def _parse_screen_table(
    text: str, path: Path
) -> dict[str, tuple[dict[str, float], list[str]]]:
    """target/ligand_id/score/active rows -> per-target (scores, actives)."""
    lines = [ln for ln in text.split("\n") if ln]
    expected = ("target", "ligand_id", "score", "active")
    if not lines or tuple(lines[0].split("\t")) != expected:
        raise ParseError(
            f"{path}: screen header must be " + "\t".join(expected)
        )
    table: dict[str, tuple[dict[str, float], list[str]]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != 4:
            raise ParseError(f"{path}:{lineno}: expected 4 cells")
        target, ligand, score_cell, active_cell = cells
        scores, actives = table.setdefault(target, ({}, []))
        if ligand in scores:
            raise ParseError(
                f"{path}:{lineno}: duplicate ligand {ligand!r} for {target!r}"
            )
        try:
            scores[ligand] = float(score_cell)
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: non-numeric score") from exc
        flag = active_cell.strip().lower()
        if flag in ("1", "true"):
            actives.append(ligand)
        elif flag not in ("0", "false"):
            raise ParseError(
                f"{path}:{lineno}: active must be 0/1/true/false"
            )
    return table


def _parse_grouping(text: str, path: Path) -> dict[str, str]:
    lines = [ln for ln in text.split("\n") if ln]
    if not lines or tuple(lines[0].split("\t")) != ("complex_id", "group"):
        raise ParseError(f"{path}: grouping header must be complex_id\tgroup")
    out: dict[str, str] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        cells = line.split("\t")
        if len(cells) != 2:
            raise ParseError(f"{path}:{lineno}: expected 2 cells")
        out[cells[0]] = cells[1]
    return out


def _truth_values(labels: Mapping[str, AffinityLabel]) -> dict[str, float]:
    return {i: lab.value for i, lab in labels.items()}


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _matrix_cells(config: RunConfig, args: argparse.Namespace) -> list[MatrixCell]:
    groups = config.groups
    algorithms = config.algorithms
    modes = config.modes
    cutoffs = config.cutoffs
    if args.group:
        groups = (FeatureGroup.parse(args.group),)
    if args.algo:
        algorithms = (MetaAlgorithm.parse(args.algo),)
    if args.mode:
        modes = (FilterMode.from_tag(args.mode),)
    if args.cutoff is not None:
        cutoffs = (float(args.cutoff),)
    cells = []
    for group in groups:
        for mode in modes:
            for cutoff in cutoffs:
                for algorithm in algorithms:
                    spec = FeatureGroupSpec(
                        group=group,
                        rmsd_mode=RmsdFilterMode(mode=mode, cutoff=cutoff),
                        # Placeholder for PCA groups: training always
                        # overwrites it with the swept component count.
                        pc_count=1 if group.is_pca_based else None,
                    )
                    cells.append(MatrixCell(spec=spec, algorithm=algorithm))
    return cells


def _out_dir(config: RunConfig, args: argparse.Namespace) -> Path:
    out = Path(args.out) if args.out else config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_filter_poses(args: argparse.Namespace) -> int:
    config = _apply_seed_override(load_run_config(args.config), args)
    cohort = load_cohort(config)
    out = _out_dir(config, args)
    modes = (
        (FilterMode.from_tag(args.mode),) if args.mode else config.modes
    )
    fingerprint = cohort_fingerprint(cohort)
    for mode in modes:
        results = filter_cohort(cohort, mode)
        name = f"scores_{mode.tag}_{format_float(SELECTION_CUTOFF)}.tsv"
        write_text_atomic(
            out / name,
            write_filter_table(
                [results[i] for i in sorted(results)]
            ),
        )
        write_json_atomic(
            out / f"{name}.manifest.json",
            {
                "kind": "filter_manifest",
                "package_version": VERSION,
                "cohort_sha256": fingerprint,
                "mode": mode.tag,
                "selection_cutoff": SELECTION_CUTOFF,
                "rows": len(results),
            },
        )
        print(f"wrote {out / name} ({len(results)} rows)")
    return 0


def cmd_assemble(args: argparse.Namespace) -> int:
    config = _apply_seed_override(load_run_config(args.config), args)
    cohort = load_cohort(config)
    out = _out_dir(config, args)
    partition = Partition(args.partition) if args.partition else None
    if args.model:
        fitted = load_fitted_model(Path(args.model))
        spec, basis = fitted.spec, fitted.pca
    else:
        if not (args.group and args.mode and args.cutoff is not None):
            raise ConfigError(
                "assemble needs --group, --mode, and --cutoff (or --model)"
            )
        group = FeatureGroup.parse(args.group)
        if group.is_pca_based:
            raise ConfigError(
                f"group {group.label} needs a trained model for its PCA "
                "basis; pass --model"
            )
        spec = FeatureGroupSpec(
            group=group,
            rmsd_mode=RmsdFilterMode(
                mode=FilterMode.from_tag(args.mode), cutoff=float(args.cutoff)
            ),
        )
        basis = None
    for mode in {spec.rmsd_mode.mode}:
        filter_cohort(cohort, mode)
    matrix = assemble_features(cohort, spec, basis, partition=partition)
    name = (
        f"features_{spec.group.label}_{spec.rmsd_mode.tag}_"
        f"{format_float(spec.rmsd_mode.cutoff)}"
        + (f"_{partition.value}" if partition else "")
        + ".tsv"
    )
    write_text_atomic(out / name, write_feature_matrix(matrix))
    print(f"wrote {out / name} ({matrix.n_rows} rows)")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    config = _apply_seed_override(load_run_config(args.config), args)
    cohort = load_cohort(config)
    out = _out_dir(config, args)
    cells = _matrix_cells(config, args)
    manifest = run_matrix(
        cohort,
        cells,
        config.seed,
        out,
        params=config.params,
        workers=args.workers,
        resume=not args.fresh,
    )
    print(
        f"trained {len(manifest['trained'])} cell(s), "
        f"skipped {len(manifest['skipped_complete'])} complete cell(s) "
        f"-> {out}"
    )
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    config = _apply_seed_override(load_run_config(args.config), args)
    cohort = load_cohort(config)
    out = _out_dir(config, args)
    model_path = Path(args.model)
    fitted = load_fitted_model(model_path)
    partition = Partition(args.partition)
    predictions = predict_meta(fitted, cohort, partition)
    name = f"predictions_{model_path.stem}_{partition.value}.tsv"
    _write_predictions(out / name, predictions)
    write_json_atomic(
        out / f"{name}.manifest.json",
        {
            "kind": "prediction_manifest",
            "package_version": VERSION,
            "model_sha256": _file_sha256(model_path),
            "cohort_sha256": cohort_fingerprint(cohort),
            "partition": partition.value,
            "rows": len(predictions),
        },
    )
    print(f"wrote {out / name} ({len(predictions)} predictions)")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    pred_path = Path(args.pred)
    truth_path = Path(args.truth)
    predictions = _parse_predictions(
        pred_path.read_text(encoding="utf-8"), pred_path
    )
    truth = _truth_values(
        parse_labels(truth_path.read_text(encoding="utf-8"))
    )
    report = evaluation_report(predictions, truth)
    out = Path(args.out) if args.out else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    write_json_atomic(
        out / "evaluation.json",
        {
            "kind": "evaluation_report",
            "package_version": VERSION,
            "predictions_sha256": _file_sha256(pred_path),
            "truth_sha256": _file_sha256(truth_path),
            "report": report_to_json_dict(report),
        },
    )
    write_text_atomic(out / "evaluation.tsv", reports_to_tsv({"all": report}))
    print(
        f"n={report.n} pearson={report.pearson:.6f} "
        f"spearman={report.spearman:.6f} rmse={report.rmse:.6f}"
    )
    return 0


def cmd_screen(args: argparse.Namespace) -> int:
    table_path = Path(args.table)
    per_target = _parse_screen_table(
        table_path.read_text(encoding="utf-8"), table_path
    )
    ascending = not args.descending
    if args.config:
        config = load_run_config(args.config)
        ascending = config.screening_ascending and not args.descending
    reports = [
        screen_target(target, scores, actives, ascending=ascending)
        for target, (scores, actives) in sorted(per_target.items())
    ]
    out = Path(args.out) if args.out else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    write_text_atomic(out / "screen.tsv", screen_report_to_tsv(reports))
    write_json_atomic(
        out / "screen.json",
        {
            "kind": "screen_report",
            "package_version": VERSION,
            "table_sha256": _file_sha256(table_path),
            "ascending": ascending,
            "targets": [
                {
                    "target": r.target,
                    "n_ligands": r.n_ligands,
                    "n_actives": r.n_actives,
                    "top5_recall": r.top5_recall,
                    "top10_recall": r.top10_recall,
                    "precision_at_actives": r.precision_at_actives,
                    "welch_t": r.welch_t,
                    "welch_p": r.welch_p,
                    "mwu_u": r.mwu_u,
                    "mwu_p": r.mwu_p,
                }
                for r in reports
            ],
        },
    )
    print(f"wrote {out / 'screen.tsv'} ({len(reports)} target(s))")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    pred_path = Path(args.pred)
    truth_path = Path(args.truth)
    predictions = _parse_predictions(
        pred_path.read_text(encoding="utf-8"), pred_path
    )
    truth = _truth_values(
        parse_labels(truth_path.read_text(encoding="utf-8"))
    )
    if args.groups:
        groups_path = Path(args.groups)
        grouping = _parse_grouping(
            groups_path.read_text(encoding="utf-8"), groups_path
        )
        missing = sorted(set(predictions) - set(grouping))
        if missing:
            raise DataError(
                f"grouping file lacks {len(missing)} complex(es): "
                + ", ".join(missing[:8])
            )
        reports = grouped_report(predictions, truth, grouping)
    else:
        reports = grouped_report(predictions, truth, lambda _: "all")
    payload: dict = {
        "kind": "grouped_report",
        "package_version": VERSION,
        "predictions_sha256": _file_sha256(pred_path),
        "truth_sha256": _file_sha256(truth_path),
        "groups": {
            str(g): report_to_json_dict(r) for g, r in sorted(
                reports.items(), key=lambda kv: str(kv[0])
            )
        },
    }
    if args.synergy:
        names = ("META", "DL", "DOCK")
        members: dict[str, dict[str, float]] = {}
        for name, path_text in zip(names, args.synergy):
            spath = Path(path_text)
            preds = _parse_predictions(
                spath.read_text(encoding="utf-8"), spath
            )
            for complex_id, value in preds.items():
                if complex_id not in truth:
                    raise DataError(
                        f"{spath}: no truth value for {complex_id!r}"
                    )
                members.setdefault(complex_id, {})[name] = abs(
                    value - truth[complex_id]
                )
        partition = synergy_partition(members, groups=names)
        payload["synergy"] = {
            "counts": partition.counts,
            "assignment": dict(sorted(partition.assignment.items())),
        }
    out = Path(args.out) if args.out else Path.cwd()
    out.mkdir(parents=True, exist_ok=True)
    write_json_atomic(out / "report.json", payload)
    write_text_atomic(out / "report.tsv", reports_to_tsv(reports))
    print(f"wrote {out / 'report.json'} ({len(reports)} group(s))")
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # argparse's default usage-error exit status is 2, which this tool
    # reserves for data errors; route usage problems to the config path.
    def error(self, message: str):  # noqa: D102 - argparse override
        raise ConfigError(message)


def _apply_seed_override(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        return replace(config, seed=args.seed)
    return config


def _add_common(parser: argparse.ArgumentParser, *, config_required: bool) -> None:
    parser.add_argument(
        "--config", required=config_required, help="run config (JSON or TOML)"
    )
    parser.add_argument("--out", help="output directory (default: config out_dir)")
    parser.add_argument(
        "--seed", type=int, help="override the config master seed"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="affistack",
        description=(
            "Stacked affinity modeling: pose filtering, feature assembly, "
            "meta-model training, prediction, and evaluation."
        ),
    )
    parser.add_argument(
        "--version", action="version", version=f"%(prog)s {VERSION}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filter-poses", help="run the pose filters")
    _add_common(p, config_required=True)
    p.add_argument("--mode", help="restrict to one filter mode (VvS/RelExpt)")
    p.set_defaults(func=cmd_filter_poses)

    p = sub.add_parser("assemble", help="write a feature matrix TSV")
    _add_common(p, config_required=True)
    p.add_argument("--group", help="feature group (e.g. EW, ED3, ED-A-P)")
    p.add_argument("--mode", help="filter mode tag (VvS/RelExpt)")
    p.add_argument("--cutoff", type=float, help="training cutoff")
    p.add_argument(
        "--model", help="trained model JSON (required for PCA groups)"
    )
    p.add_argument(
        "--partition",
        choices=[m.value for m in Partition],
        help="restrict to one partition",
    )
    p.set_defaults(func=cmd_assemble)

    p = sub.add_parser("train", help="train the run matrix")
    _add_common(p, config_required=True)
    p.add_argument("--workers", type=int, default=1, help="parallel cells")
    p.add_argument("--group", help="narrow to one feature group")
    p.add_argument("--algo", help="narrow to one algorithm")
    p.add_argument("--mode", help="narrow to one filter mode")
    p.add_argument("--cutoff", type=float, help="narrow to one cutoff")
    p.add_argument(
        "--fresh",
        action="store_true",
        help="retrain every cell even if a matching model file exists",
    )
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict a partition with a model")
    _add_common(p, config_required=True)
    p.add_argument("--model", required=True, help="trained model JSON")
    p.add_argument(
        "--partition",
        default=Partition.CORESET.value,
        choices=[m.value for m in Partition],
    )
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="metric report for predictions")
    p.add_argument("--pred", required=True, help="predictions TSV")
    p.add_argument("--truth", required=True, help="label TSV")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("screen", help="virtual-screening enrichment report")
    p.add_argument(
        "--table",
        required=True,
        help="TSV: target, ligand_id, score, active",
    )
    p.add_argument("--config", help="run config (for score orientation)")
    p.add_argument(
        "--descending",
        action="store_true",
        help="higher score = stronger binder",
    )
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_screen)

    p = sub.add_parser("report", help="grouped metrics / synergy partition")
    p.add_argument("--pred", required=True, help="predictions TSV")
    p.add_argument("--truth", required=True, help="label TSV")
    p.add_argument("--groups", help="grouping TSV: complex_id, group")
    p.add_argument(
        "--synergy",
        nargs=3,
        metavar=("META", "DL", "DOCK"),
        help="three prediction TSVs to partition by per-complex winner",
    )
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    level = os.environ.get("AFFISTACK_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except AffistackError as exc:  # base-class fallback
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        # Unreadable/missing input files are data problems, not crashes.
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
