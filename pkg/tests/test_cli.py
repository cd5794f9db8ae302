import json
from pathlib import Path

import pytest

from bbclf.cli import main


@pytest.fixture
def config_file(mock_run_config, tmp_path):
    cfg = mock_run_config(seeds=(1, 2))
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg.to_dict()))
    return path, cfg


class TestStageCommands:
    def test_stagewise_pipeline_matches_run_all_result(self, config_file, capsys):
        path, cfg = config_file
        for stage in ("sample", "teach", "pseudolabel", "extract", "train"):
            assert main([stage, "--config", str(path), "--seed", "1"]) == 0
        assert main(["eval", "--config", str(path), "--seed", "1"]) == 0
        out = capsys.readouterr().out
        assert "accuracy:" in out
        result = json.loads(
            (Path(cfg.out_dir) / "runs" / cfg.fingerprint() / "1" / "result.json").read_text()
        )
        assert 0.0 <= result["accuracy"] <= 1.0

    def test_stage_requires_seed(self, config_file, capsys):
        path, _ = config_file
        assert main(["sample", "--config", str(path)]) == 2
        assert "--seed" in capsys.readouterr().err

    def test_stage_out_of_order_fails_with_stage_name(self, config_file, capsys):
        path, _ = config_file
        code = main(["teach", "--config", str(path), "--seed", "2"])
        assert code == 1
        err = capsys.readouterr().err
        assert "teach" in err
        assert "sample" in err  # hint at the missing prerequisite

    def test_nonexistent_config_fails(self, tmp_path, capsys):
        assert main(["sample", "--config", str(tmp_path / "nope.json"), "--seed", "1"]) == 1


class TestRunAllCommand:
    def test_run_all_and_report(self, config_file, capsys):
        path, cfg = config_file
        assert main(["run-all", "--config", str(path)]) == 0
        out = capsys.readouterr().out
        assert "seed 1" in out and "seed 2" in out and "mean" in out

        assert main(["report", "--config", str(path), "--format", "csv"]) == 0
        out = capsys.readouterr().out
        assert out.startswith("task,ablation")

    def test_run_all_single_seed(self, config_file, capsys):
        path, _ = config_file
        assert main(["run-all", "--config", str(path), "--seed", "1"]) == 0
        assert "seed 1: accuracy" in capsys.readouterr().out

    def test_report_before_runs_fails(self, config_file, capsys):
        path, _ = config_file
        assert main(["report", "--config", str(path)]) == 1
        assert "missing result" in capsys.readouterr().err


class TestOverrides:
    def test_ablation_override_changes_run_dir(self, config_file):
        path, cfg = config_file
        assert (
            main(
                [
                    "sample",
                    "--config",
                    str(path),
                    "--seed",
                    "1",
                    "--ablation",
                    "NO_AUG",
                ]
            )
            == 0
        )
        import dataclasses

        from bbclf.harness import Ablation

        no_aug = dataclasses.replace(cfg, ablation=Ablation.NO_AUG)
        run_dir = Path(cfg.out_dir) / "runs" / no_aug.fingerprint() / "1"
        assert (run_dir / "split.jsonl").exists()

    def test_out_override_redirects_artifacts(self, config_file, tmp_path):
        path, cfg = config_file
        alt = tmp_path / "alt-out"
        assert (
            main(["sample", "--config", str(path), "--seed", "1", "--out", str(alt)])
            == 0
        )
        assert (alt / "runs" / cfg.fingerprint() / "1" / "split.jsonl").exists()
