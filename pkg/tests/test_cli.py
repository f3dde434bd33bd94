"""Command-line interface: exit codes, artifacts, end-to-end chain."""

from __future__ import annotations

import json

import pytest

from affistack._version import VERSION
from affistack.cli import load_run_config, main
from affistack.synth import SynthConfig, write_synthetic_dataset

FAST_PROTOCOL = {
    "lasso_repeats": 3,
    "enet_repeats_per_ratio": 1,
    "enet_l1_ratios": [0.5, 1.0],
    "gbt_search_iters": 2,
    "pc_k_max": 3,
    "pc_sweep": {
        "lasso_repeats": 1,
        "enet_repeats_per_ratio": 1,
        "enet_l1_ratios": [1.0],
        "gbt_search_iters": 1,
        "pc_k_max": 3,
    },
}


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    """Synthetic on-disk dataset with a two-cell LinReg matrix."""
    root = tmp_path_factory.mktemp("dataset")
    config_path = write_synthetic_dataset(
        root,
        SynthConfig(n_complexes=14, n_failed=1),
        seed=23,
        run_config={
            "matrix": {
                "groups": ["E", "EW"],
                "algorithms": ["LinReg"],
                "modes": ["VvS"],
                "cutoffs": [101.0],
            },
            "protocol": FAST_PROTOCOL,
        },
    )
    return config_path


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    """Output directory holding the trained two-cell matrix."""
    out = tmp_path_factory.mktemp("trained")
    assert main(["train", "--config", str(dataset), "--out", str(out)]) == 0
    return out


class TestExitCodes:
    def test_version_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as excinfo:
            main(["--version"])
        assert excinfo.value.code == 0
        assert VERSION in capsys.readouterr().out

    def test_missing_config_is_config_error(self, tmp_path, capsys):
        code = main(["train", "--config", str(tmp_path / "nope.json")])
        assert code == 1
        assert "config error" in capsys.readouterr().err

    def test_usage_error_maps_to_one(self, capsys):
        assert main(["no-such-command"]) == 1
        assert main(["predict"]) == 1  # missing required --config/--model

    def test_missing_input_file_maps_to_two(self, tmp_path, capsys):
        truth = tmp_path / "labels.tsv"
        truth.write_text(
            "complex_id\tln_affinity\tmeasure_kind\tassay_method\tyear\n",
            encoding="utf-8",
        )
        code = main([
            "evaluate", "--pred", str(tmp_path / "nope.tsv"),
            "--truth", str(truth),
        ])
        assert code == 2
        assert "data error" in capsys.readouterr().err

    def test_missing_screen_table_maps_to_two(self, tmp_path, capsys):
        code = main(["screen", "--table", str(tmp_path / "nope.tsv")])
        assert code == 2
        assert "data error" in capsys.readouterr().err

    def test_bad_data_maps_to_two(self, tmp_path, capsys):
        bad = tmp_path / "pred.tsv"
        bad.write_text("wrong\theader\nA\t1.0\n", encoding="utf-8")
        truth = tmp_path / "labels.tsv"
        truth.write_text("complex_id\tvalue\n", encoding="utf-8")
        code = main(["evaluate", "--pred", str(bad), "--truth", str(truth)])
        assert code == 2
        assert "data error" in capsys.readouterr().err

    def test_invalid_config_json(self, tmp_path, capsys):
        config = tmp_path / "config.json"
        config.write_text("{broken", encoding="utf-8")
        assert main(["train", "--config", str(config)]) == 1


class TestFilterPoses:
    def test_writes_tables_and_manifests(self, dataset, tmp_path, capsys):
        code = main([
            "filter-poses", "--config", str(dataset), "--out", str(tmp_path),
        ])
        assert code == 0
        table = tmp_path / "scores_VvS_3.0.tsv"
        assert table.exists()
        assert len(table.read_text().splitlines()) == 15  # header + 14 rows
        manifest = json.loads(
            (tmp_path / "scores_VvS_3.0.tsv.manifest.json").read_text()
        )
        assert manifest["mode"] == "VvS"
        assert manifest["rows"] == 14

    def test_rerun_is_byte_identical(self, dataset, tmp_path):
        args = ["filter-poses", "--config", str(dataset),
                "--out", str(tmp_path)]
        assert main(args) == 0
        first = (tmp_path / "scores_VvS_3.0.tsv").read_bytes()
        assert main(args) == 0
        assert (tmp_path / "scores_VvS_3.0.tsv").read_bytes() == first

    def test_mode_restriction(self, dataset, tmp_path):
        code = main([
            "filter-poses", "--config", str(dataset), "--out", str(tmp_path),
            "--mode", "RelExpt",
        ])
        assert code == 0
        assert (tmp_path / "scores_RelExpt_3.0.tsv").exists()
        assert not (tmp_path / "scores_VvS_3.0.tsv").exists()


class TestTrain:
    def test_initial_run_trains_all_cells(self, dataset, trained, capsys):
        assert (trained / "E_VvS_101.0_LinReg.json").exists()
        assert (trained / "EW_VvS_101.0_LinReg.json").exists()
        assert (trained / "run_manifest.json").exists()

    def test_resume_skips(self, dataset, trained, capsys):
        code = main(["train", "--config", str(dataset), "--out", str(trained)])
        assert code == 0
        assert "trained 0 cell(s), skipped 2" in capsys.readouterr().out

    def test_fresh_retrain_reproduces_bytes(self, dataset, trained, capsys):
        name = "E_VvS_101.0_LinReg.json"
        before = (trained / name).read_bytes()
        code = main([
            "train", "--config", str(dataset), "--out", str(trained),
            "--fresh",
        ])
        assert code == 0
        assert "trained 2 cell(s)" in capsys.readouterr().out
        assert (trained / name).read_bytes() == before

    def test_narrowing_flags(self, dataset, tmp_path, capsys):
        code = main([
            "train", "--config", str(dataset), "--out", str(tmp_path),
            "--group", "E", "--algo", "LinReg",
        ])
        assert code == 0
        assert (tmp_path / "E_VvS_101.0_LinReg.json").exists()
        assert not (tmp_path / "EW_VvS_101.0_LinReg.json").exists()

    def test_pca_group_via_narrowing(self, dataset, tmp_path):
        code = main([
            "train", "--config", str(dataset), "--out", str(tmp_path),
            "--group", "ED3-P", "--algo", "LinReg",
        ])
        assert code == 0
        payload = json.loads(
            (tmp_path / "ED3-P_VvS_101.0_LinReg.json").read_text()
        )
        assert payload["pca"] is not None
        assert 1 <= payload["pc_count"] <= FAST_PROTOCOL["pc_k_max"]

    def test_seed_override_changes_manifest(self, dataset, tmp_path):
        code = main([
            "train", "--config", str(dataset), "--out", str(tmp_path),
            "--group", "E", "--seed", "99",
        ])
        assert code == 0
        payload = json.loads(
            (tmp_path / "E_VvS_101.0_LinReg.json").read_text()
        )
        from affistack.features import FeatureGroup, FeatureGroupSpec
        from affistack.learners import MetaAlgorithm
        from affistack.pipeline import cell_seed
        from affistack.pose_rmsd import FilterMode, RmsdFilterMode

        spec = FeatureGroupSpec(
            FeatureGroup.E, RmsdFilterMode(FilterMode.CONSENSUS, 101.0)
        )
        assert payload["run_manifest"]["seed"] == cell_seed(
            99, spec, MetaAlgorithm.LINREG
        )


class TestAssemble:
    def test_plain_group(self, dataset, tmp_path):
        code = main([
            "assemble", "--config", str(dataset), "--out", str(tmp_path),
            "--group", "EW", "--mode", "VvS", "--cutoff", "101.0",
        ])
        assert code == 0
        text = (tmp_path / "features_EW_VvS_101.0.tsv").read_text()
        lines = text.splitlines()
        assert lines[0].startswith("complex_id\tsmina\tvinardo\tmw")
        assert len(lines) == 15

    def test_partition_suffix(self, dataset, tmp_path):
        code = main([
            "assemble", "--config", str(dataset), "--out", str(tmp_path),
            "--group", "E", "--mode", "VvS", "--cutoff", "101.0",
            "--partition", "CORESET",
        ])
        assert code == 0
        assert (tmp_path / "features_E_VvS_101.0_CORESET.tsv").exists()

    def test_pca_group_requires_model(self, dataset, tmp_path, capsys):
        code = main([
            "assemble", "--config", str(dataset), "--out", str(tmp_path),
            "--group", "ED3-P", "--mode", "VvS", "--cutoff", "101.0",
        ])
        assert code == 1
        assert "PCA" in capsys.readouterr().err

    def test_pca_group_with_model(self, dataset, tmp_path):
        assert main([
            "train", "--config", str(dataset), "--out", str(tmp_path),
            "--group", "ED3-P", "--algo", "LinReg",
        ]) == 0
        code = main([
            "assemble", "--config", str(dataset), "--out", str(tmp_path),
            "--model", str(tmp_path / "ED3-P_VvS_101.0_LinReg.json"),
        ])
        assert code == 0
        text = (tmp_path / "features_ED3-P_VvS_101.0.tsv").read_text()
        assert "\tpc1" in text.splitlines()[0]

    def test_missing_selection_flags(self, dataset, tmp_path, capsys):
        code = main([
            "assemble", "--config", str(dataset), "--out", str(tmp_path),
            "--group", "E",
        ])
        assert code == 1
        assert "--cutoff" in capsys.readouterr().err


class TestPredictEvaluateReport:
    def test_predict_writes_predictions_and_manifest(
        self, dataset, trained, tmp_path
    ):
        code = main([
            "predict", "--config", str(dataset), "--out", str(tmp_path),
            "--model", str(trained / "E_VvS_101.0_LinReg.json"),
            "--partition", "CORESET",
        ])
        assert code == 0
        name = "predictions_E_VvS_101.0_LinReg_CORESET.tsv"
        lines = (tmp_path / name).read_text().splitlines()
        assert lines[0] == "complex_id\tprediction"
        manifest = json.loads(
            (tmp_path / f"{name}.manifest.json").read_text()
        )
        assert manifest["rows"] == len(lines) - 1 > 0
        assert manifest["partition"] == "CORESET"

    def test_evaluate_chain(self, dataset, trained, tmp_path, capsys):
        assert main([
            "predict", "--config", str(dataset), "--out", str(tmp_path),
            "--model", str(trained / "EW_VvS_101.0_LinReg.json"),
            "--partition", "CORESET",
        ]) == 0
        pred = tmp_path / "predictions_EW_VvS_101.0_LinReg_CORESET.tsv"
        labels = dataset.parent / "labels.tsv"
        code = main([
            "evaluate", "--pred", str(pred), "--truth", str(labels),
            "--out", str(tmp_path),
        ])
        assert code == 0
        assert "pearson=" in capsys.readouterr().out
        payload = json.loads((tmp_path / "evaluation.json").read_text())
        assert payload["report"]["n"] == len(pred.read_text().splitlines()) - 1
        assert (tmp_path / "evaluation.tsv").exists()

    def test_evaluate_unknown_id_is_data_error(self, dataset, tmp_path, capsys):
        pred = tmp_path / "pred.tsv"
        pred.write_text(
            "complex_id\tprediction\nNOPE0000\t5.0\nNOPE0001\t6.0\n",
            encoding="utf-8",
        )
        code = main([
            "evaluate", "--pred", str(pred),
            "--truth", str(dataset.parent / "labels.tsv"),
        ])
        assert code == 2
        assert "no truth value" in capsys.readouterr().err

    def test_report_single_group(self, dataset, trained, tmp_path):
        assert main([
            "predict", "--config", str(dataset), "--out", str(tmp_path),
            "--model", str(trained / "E_VvS_101.0_LinReg.json"),
            "--partition", "CORESET",
        ]) == 0
        pred = tmp_path / "predictions_E_VvS_101.0_LinReg_CORESET.tsv"
        code = main([
            "report", "--pred", str(pred),
            "--truth", str(dataset.parent / "labels.tsv"),
            "--out", str(tmp_path),
        ])
        assert code == 0
        payload = json.loads((tmp_path / "report.json").read_text())
        assert list(payload["groups"]) == ["all"]

    def test_report_with_grouping_and_synergy(
        self, dataset, trained, tmp_path
    ):
        assert main([
            "predict", "--config", str(dataset), "--out", str(tmp_path),
            "--model", str(trained / "E_VvS_101.0_LinReg.json"),
            "--partition", "CORESET",
        ]) == 0
        pred = tmp_path / "predictions_E_VvS_101.0_LinReg_CORESET.tsv"
        ids = [
            line.split("\t")[0]
            for line in pred.read_text().splitlines()[1:]
        ]
        groups_file = tmp_path / "groups.tsv"
        groups_file.write_text(
            "complex_id\tgroup\n"
            + "".join(f"{i}\t{'g1' if k % 2 else 'g2'}\n"
                      for k, i in enumerate(ids)),
            encoding="utf-8",
        )
        code = main([
            "report", "--pred", str(pred),
            "--truth", str(dataset.parent / "labels.tsv"),
            "--groups", str(groups_file),
            "--synergy", str(pred), str(pred), str(pred),
            "--out", str(tmp_path),
        ])
        assert code == 0
        payload = json.loads((tmp_path / "report.json").read_text())
        assert set(payload["groups"]) == {"g1", "g2"}
        # Identical inputs tie everywhere; priority hands every win to META.
        assert payload["synergy"]["counts"] == {
            "META": len(ids), "DL": 0, "DOCK": 0,
        }

    def test_report_incomplete_grouping_is_data_error(
        self, dataset, trained, tmp_path, capsys
    ):
        assert main([
            "predict", "--config", str(dataset), "--out", str(tmp_path),
            "--model", str(trained / "E_VvS_101.0_LinReg.json"),
            "--partition", "CORESET",
        ]) == 0
        pred = tmp_path / "predictions_E_VvS_101.0_LinReg_CORESET.tsv"
        groups_file = tmp_path / "groups.tsv"
        groups_file.write_text("complex_id\tgroup\n", encoding="utf-8")
        code = main([
            "report", "--pred", str(pred),
            "--truth", str(dataset.parent / "labels.tsv"),
            "--groups", str(groups_file),
        ])
        assert code == 2
        assert "grouping file lacks" in capsys.readouterr().err


class TestScreen:
    TABLE = (
        "target\tligand_id\tscore\tactive\n"
        "T1\tL1\t-9.0\t1\n"
        "T1\tL2\t-8.0\ttrue\n"
        "T1\tL3\t-7.0\t0\n"
        "T1\tL4\t-6.0\tfalse\n"
        "T1\tL5\t-5.0\t0\n"
        "T2\tM1\t1.0\t0\n"
        "T2\tM2\t2.0\t0\n"
        "T2\tM3\t3.0\t1\n"
    )

    def test_screen_report(self, tmp_path):
        table = tmp_path / "screen_input.tsv"
        table.write_text(self.TABLE, encoding="utf-8")
        code = main(["screen", "--table", str(table), "--out", str(tmp_path)])
        assert code == 0
        payload = json.loads((tmp_path / "screen.json").read_text())
        assert payload["ascending"] is True
        by_target = {t["target"]: t for t in payload["targets"]}
        assert set(by_target) == {"T1", "T2"}
        assert by_target["T1"]["n_actives"] == 2
        # Both actives hold the two best (lowest) scores.
        assert by_target["T1"]["precision_at_actives"] == 1.0
        assert by_target["T2"]["precision_at_actives"] == 0.0
        assert (tmp_path / "screen.tsv").exists()

    def test_descending_flag_flips_orientation(self, tmp_path):
        table = tmp_path / "screen_input.tsv"
        table.write_text(self.TABLE, encoding="utf-8")
        code = main([
            "screen", "--table", str(table), "--out", str(tmp_path),
            "--descending",
        ])
        assert code == 0
        payload = json.loads((tmp_path / "screen.json").read_text())
        by_target = {t["target"]: t for t in payload["targets"]}
        assert payload["ascending"] is False
        assert by_target["T1"]["precision_at_actives"] == 0.0
        assert by_target["T2"]["precision_at_actives"] == 1.0

    def test_malformed_table_is_data_error(self, tmp_path, capsys):
        table = tmp_path / "bad.tsv"
        table.write_text("what\never\n", encoding="utf-8")
        assert main(["screen", "--table", str(table)]) == 2


class TestConfigLoading:
    def test_toml_config_equivalent_to_json(self, dataset):
        json_config = load_run_config(dataset)
        payload = json.loads(dataset.read_text(encoding="utf-8"))

        def toml_value(v):
            if isinstance(v, bool):
                return "true" if v else "false"
            if isinstance(v, (int, float)):
                return str(v)
            return json.dumps(v)

        lines = [f"seed = {payload['seed']}",
                 f"out_dir = {json.dumps(payload['out_dir'])}"]
        for section in ("data", "matrix", "screening", "protocol"):
            body = payload.get(section)
            if body is None:
                continue
            lines.append(f"[{section}]")
            for key, value in body.items():
                if isinstance(value, dict):
                    continue
                lines.append(f"{key} = {toml_value(value)}")
            for key, value in body.items():
                if isinstance(value, dict):
                    lines.append(f"[{section}.{key}]")
                    lines.extend(
                        f"{k} = {toml_value(v)}" for k, v in value.items()
                    )
        toml_path = dataset.parent / "config.toml"
        toml_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        toml_config = load_run_config(toml_path)
        assert toml_config.seed == json_config.seed
        assert toml_config.groups == json_config.groups
        assert toml_config.table_paths == json_config.table_paths
        assert toml_config.params == json_config.params

    def test_unknown_protocol_key_rejected(self, dataset, tmp_path):
        payload = json.loads(dataset.read_text(encoding="utf-8"))
        payload["protocol"] = {"learning_rate": 0.1}
        bad = tmp_path / "config.json"
        bad.write_text(json.dumps(payload), encoding="utf-8")
        # Paths are relative to the config's directory, which has no data.
        with pytest.raises(Exception):
            load_run_config(bad)
        bad2 = dataset.parent / "config_bad_protocol.json"
        bad2.write_text(json.dumps(payload), encoding="utf-8")
        from affistack.errors import ConfigError

        with pytest.raises(ConfigError, match="unknown protocol key"):
            load_run_config(bad2)
