import json

import pytest

from netward.cli import main


def run_cli(args):
    return main(args)


class TestCliContract:
    def test_usage_error_exit_code_1(self, capsys):
        with pytest.raises(SystemExit) as e:
            run_cli(["evaluate", "--dataset", "not-a-dataset"])
        assert e.value.code == 1

    def test_unknown_command_exit_code_1(self):
        with pytest.raises(SystemExit) as e:
            run_cli(["frobnicate"])
        assert e.value.code == 1

    def test_runtime_error_exit_code_2(self, tmp_path):
        code = run_cli(
            ["train", "--data-dir", str(tmp_path / "d"), "--out", str(tmp_path / "o")]
        )
        assert code == 2  # --dataset missing is caught at runtime for train

    def test_train_writes_checkpoint(self, tmp_path, capsys):
        code = run_cli(
            [
                "train",
                "--dataset",
                "dolphins",
                "--epochs",
                "40",
                "--data-dir",
                str(tmp_path / "data"),
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert code == 0
        assert (tmp_path / "out" / "dolphins-seed0.ckpt").exists()
        assert "test accuracy" in capsys.readouterr().out

    def test_evaluate_end_to_end(self, tmp_path, capsys):
        code = run_cli(
            [
                "evaluate",
                "--dataset",
                "dolphins",
                "--defense",
                "scel",
                "--attack",
                "fga",
                "--epochs",
                "60",
                "--cap",
                "10",
                "--data-dir",
                str(tmp_path / "data"),
                "--out",
                str(tmp_path / "runs"),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "table" in out

    def test_config_file_overrides_flags(self, tmp_path, capsys):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"dataset": "dolphins", "epochs": 30}))
        code = run_cli(
            [
                "train",
                "--dataset",
                "polbook",
                "--epochs",
                "999",
                "--config",
                str(cfg_file),
                "--data-dir",
                str(tmp_path / "data"),
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert code == 0
        assert (tmp_path / "out" / "dolphins-seed0.ckpt").exists()

    def test_bad_config_key_is_runtime_error(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({"no-such-flag": 1}))
        code = run_cli(
            [
                "train",
                "--dataset",
                "dolphins",
                "--config",
                str(cfg_file),
                "--data-dir",
                str(tmp_path / "data"),
                "--out",
                str(tmp_path / "out"),
            ]
        )
        assert code == 2

    def test_defend_then_report(self, tmp_path, capsys):
        code = run_cli(
            [
                "defend",
                "--dataset",
                "dolphins",
                "--defense",
                "global-at",
                "--epochs",
                "40",
                "--data-dir",
                str(tmp_path / "data"),
                "--out",
                str(tmp_path / "models"),
            ]
        )
        assert code == 0
        assert (tmp_path / "models" / "dolphins-global_at-seed0" / "manifest.json").exists()

    def test_synth_data(self, tmp_path):
        code = run_cli(
            ["synth-data", "--dataset", "polbook", "--data-dir", str(tmp_path / "data")]
        )
        assert code == 0
        assert (tmp_path / "data" / "polbook" / "manifest.json").exists()

    def test_report_from_dump(self, tmp_path, capsys):
        run_cli(
            [
                "attack",
                "--dataset",
                "dolphins",
                "--epochs",
                "40",
                "--cap",
                "8",
                "--data-dir",
                str(tmp_path / "data"),
                "--out",
                str(tmp_path / "runs"),
            ]
        )
        dumps = list((tmp_path / "runs").glob("*/full_dump.json"))
        assert dumps
        code = run_cli(
            ["report", str(dumps[0]), "--out", str(tmp_path / "rereport")]
        )
        assert code == 0
        assert (tmp_path / "rereport" / "table.csv").exists()
