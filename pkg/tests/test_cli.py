import json
from pathlib import Path

import pytest
from click.testing import CliRunner
from PIL import Image

from shad3s.cli import main
from shad3s.dataset import manifest_hash
from shad3s.tam import build_default_catalog


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def tams_dir(tmp_path_factory):
    path = tmp_path_factory.mktemp("tams")
    build_default_catalog(path, size=512)
    return path


@pytest.fixture(scope="module")
def dataset_dir(runner, tams_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    result = runner.invoke(main, [
        "datagen", "--max-solids", "1", "--scenes", "3", "--poses", "2",
        "--seed", "1", "--out", str(out), "--size", "64",
        "--tams", str(tams_dir)])
    assert result.exit_code == 0, result.output
    return out


@pytest.fixture(scope="module")
def trained_dir(runner, dataset_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    result = runner.invoke(main, [
        "train", "--model", "dm", "--data", str(dataset_dir),
        "--out", str(out), "--epochs", "1", "--depth", "4",
        "--base-width", "8", "--max-width", "16", "--seed", "0"])
    assert result.exit_code == 0, result.output
    return out


class TestTopLevel:
    def test_version(self, runner):
        result = runner.invoke(main, ["--version"])
        assert result.exit_code == 0
        assert "0.1.0" in result.output

    def test_unknown_flag_usage_error(self, runner):
        result = runner.invoke(main, ["datagen", "--bogus"])
        assert result.exit_code == 2

    def test_unknown_command(self, runner):
        assert runner.invoke(main, ["frobnicate"]).exit_code == 2


class TestDatagen:
    def test_outputs_and_manifest(self, dataset_dir):
        rows = Path(dataset_dir, "manifest.jsonl").read_text().splitlines()
        assert len(rows) == 3 * 2
        manifest = json.loads(
            Path(dataset_dir, "run_manifest.json").read_text())
        assert manifest["command"] == "datagen"
        assert manifest["config"]["seed"] == 1
        assert manifest["wall_time_s"] >= 0

    def test_rerun_identical(self, runner, tams_dir, tmp_path):
        args = ["datagen", "--max-solids", "1", "--scenes", "2", "--poses",
                "1", "--seed", "4", "--size", "64", "--tams", str(tams_dir)]
        for sub in ("a", "b"):
            result = runner.invoke(main, args + ["--out",
                                                 str(tmp_path / sub)])
            assert result.exit_code == 0, result.output
        assert manifest_hash(tmp_path / "a" / "manifest.jsonl") == \
            manifest_hash(tmp_path / "b" / "manifest.jsonl")


class TestConfigFile:
    def test_precedence(self, runner, tams_dir, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("seed = 7\nsize = 64\n")
        out = tmp_path / "from-config"
        result = runner.invoke(main, [
            "--config", str(cfg), "datagen", "--max-solids", "1",
            "--scenes", "1", "--poses", "1", "--out", str(out),
            "--tams", str(tams_dir)])
        assert result.exit_code == 0, result.output
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["config"]["seed"] == 7  # from file
        out2 = tmp_path / "flag-wins"
        result = runner.invoke(main, [
            "--config", str(cfg), "datagen", "--max-solids", "1",
            "--scenes", "1", "--poses", "1", "--seed", "9",
            "--out", str(out2), "--tams", str(tams_dir)])
        assert result.exit_code == 0, result.output
        manifest = json.loads((out2 / "run_manifest.json").read_text())
        assert manifest["config"]["seed"] == 9  # flag overrides file

    def test_malformed_config(self, runner, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("this is not a key value pair\n")
        result = runner.invoke(main, ["--config", str(cfg), "tam", "synth",
                                      "--out", str(tmp_path / "x")])
        assert result.exit_code == 2


class TestTam:
    def test_synth_and_validate(self, runner, tmp_path):
        out = tmp_path / "cat"
        result = runner.invoke(main, ["tam", "synth", "--out", str(out),
                                      "--size", "256"])
        assert result.exit_code == 0, result.output
        result = runner.invoke(main, ["tam", "validate", "--dir", str(out)])
        assert result.exit_code == 0, result.output
        assert result.output.count("ok") == 6

    def test_validate_rejects_corrupted(self, runner, tams_dir, tmp_path):
        import shutil
        bad = tmp_path / "bad"
        shutil.copytree(tams_dir, bad)
        fam = sorted(p for p in bad.iterdir() if p.is_dir())[0]
        # swap darkest and lightest tone: breaks coverage monotonicity
        t1, t4 = fam / "tone1.png", fam / "tone4.png"
        tmp = fam / "tmp.png"
        t1.rename(tmp), t4.rename(t1), tmp.rename(t4)
        result = runner.invoke(main, ["tam", "validate", "--dir", str(bad)])
        assert result.exit_code == 1


class TestTrainEval:
    def test_train_artifacts(self, trained_dir):
        assert (trained_dir / "ckpt_e1.bin").exists()
        assert (trained_dir / "metrics.jsonl").exists()
        manifest = json.loads((trained_dir / "run_manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["config"]["model"] == "dm"

    def test_eval_report(self, runner, dataset_dir, trained_dir, tams_dir,
                         tmp_path):
        rows = [json.loads(l) for l in
                Path(dataset_dir, "manifest.jsonl").read_text().splitlines()]
        split = rows[0]["split"]  # tiny set may land entirely in one split
        out = tmp_path / "eval"
        result = runner.invoke(main, [
            "eval", "--ckpt", str(trained_dir / "ckpt_e1.bin"),
            "--data", str(dataset_dir), "--split", split,
            "--out", str(out), "--progressive", "pose",
            "--tams", str(tams_dir), "--size", "64"])
        assert result.exit_code == 0, result.output
        report = json.loads((out / "report.json").read_text())
        assert set(report) == {"psnr", "ssim", "inception_score",
                               "inception_score_std", "inference_time_ms",
                               "n_samples"}
        assert (out / "pose.png").exists()

    def test_eval_empty_split_fails(self, runner, dataset_dir, trained_dir,
                                    tmp_path):
        result = runner.invoke(main, [
            "eval", "--ckpt", str(trained_dir / "ckpt_e1.bin"),
            "--data", str(dataset_dir), "--split", "nosuch",
            "--out", str(tmp_path / "e")])
        assert result.exit_code == 1


class TestComplete:
    def _contour(self, path):
        img = Image.new("L", (256, 256), 255)
        for x in range(64, 192):
            for y in (64, 191):
                img.putpixel((x, y), 0)
                img.putpixel((y, x), 0)
        img.save(path)
        return path

    def test_deterministic_output(self, runner, trained_dir, tams_dir,
                                  tmp_path):
        contour = self._contour(tmp_path / "contour.png")
        outs = []
        for sub in ("a.png", "b.png"):
            result = runner.invoke(main, [
                "complete", "--contour", str(contour), "--azimuth", "45",
                "--elevation", "30", "--texture", "parallel-45",
                "--ckpt", str(trained_dir / "ckpt_e1.bin"),
                "--tams", str(tams_dir), "--out", str(tmp_path / sub)])
            assert result.exit_code == 0, result.output
            outs.append((tmp_path / sub).read_bytes())
        assert outs[0] == outs[1]

    def test_unknown_texture_fails(self, runner, trained_dir, tams_dir,
                                   tmp_path):
        contour = self._contour(tmp_path / "c.png")
        result = runner.invoke(main, [
            "complete", "--contour", str(contour), "--azimuth", "45",
            "--elevation", "30", "--texture", "nope",
            "--ckpt", str(trained_dir / "ckpt_e1.bin"),
            "--tams", str(tams_dir), "--out", str(tmp_path / "o.png")])
        assert result.exit_code == 1


class TestServeHelp:
    def test_help(self, runner):
        result = runner.invoke(main, ["serve", "--help"])
        assert result.exit_code == 0
        assert "--ckpt-dir" in result.output
