import json
import re

import pytest

from signenc import cli
from signenc.landmarks import load_manifest, read_landmark_file

from conftest import make_document, make_person


def run_cli(*args) -> int:
    return cli.main([str(a) for a in args])


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data") / "ds"
    code = run_cli(
        "synth", "--out", root, "--classes", 3, "--signers", 3,
        "--takes", 2, "--frames", 10, 16, "--noise", 0.01, "--seed", 4,
    )
    assert code == cli.EXIT_OK
    return root


@pytest.fixture(scope="module")
def tiny_run(tiny_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("runs") / "run1"
    code = run_cli(
        "run", "--dataset", tiny_dataset, "--out", out, "--seed", 9, "--limit", 2,
        "--set", "model.epochs=2", "--set", "model.batch_size=8",
        "--set", "model.learning_rate=0.001", "--set", "model.patience=2",
    )
    assert code == cli.EXIT_OK
    return out


class TestSynth:
    def test_counts_printed_and_manifest_written(self, tiny_dataset, capsys):
        manifest = load_manifest(tiny_dataset / "manifest.json")
        assert len(manifest.samples) == 18

    def test_bad_spec_exits_usage(self):
        assert run_cli("synth", "--out", "/tmp/x", "--classes", 0) == cli.EXIT_USAGE


class TestRun:
    def test_artifacts_layout(self, tiny_run):
        assert (tiny_run / "config.json").is_file()
        assert (tiny_run / "splits.json").is_file()
        assert (tiny_run / "report.json").is_file()
        assert (tiny_run / "report.csv").is_file()
        for sid in ("000", "001"):
            section = tiny_run / "sections" / sid
            assert (section / "model.slc").is_file()
            assert (section / "metrics.json").is_file()
            assert (section / "confusion.csv").is_file()
            assert (section / "audit.json").is_file()

    def test_limit_respected(self, tiny_run):
        splits = json.loads((tiny_run / "splits.json").read_text())
        assert len(splits) == 2
        report = json.loads((tiny_run / "report.json").read_text())
        assert len(report["sections"]) == 2

    def test_report_structure(self, tiny_run):
        report = json.loads((tiny_run / "report.json").read_text())
        assert report["format"] == "report-v1"
        for metric in ("accuracy", "macro_precision", "macro_recall", "macro_f1"):
            assert set(report["aggregate"][metric]) == {"mean", "std"}
        assert report["config"]["seed"] == 9
        assert report["timing"]["count"] > 0

    def test_no_test_signer_leakage_in_audit(self, tiny_run):
        for section in (tiny_run / "sections").iterdir():
            audit = json.loads((section / "audit.json").read_text())
            touched = audit["train"] + audit["val"]
            assert touched, "audit must record training samples"
            assert not [s for s in touched if s.startswith(audit["test_signer"] + "/")]

    def test_resume_skips_completed_sections(self, tiny_run, tiny_dataset, capsys):
        before = (tiny_run / "report.json").read_bytes()
        (tiny_run / "report.json").unlink()
        code = run_cli(
            "run", "--dataset", tiny_dataset, "--out", tiny_run, "--seed", 9, "--limit", 2,
            "--set", "model.epochs=2", "--set", "model.batch_size=8",
            "--set", "model.learning_rate=0.001", "--set", "model.patience=2",
        )
        assert code == cli.EXIT_OK
        assert (tiny_run / "report.json").read_bytes() == before

    def test_config_mismatch_refused_without_force(self, tiny_run, tiny_dataset, capsys):
        code = run_cli(
            "run", "--dataset", tiny_dataset, "--out", tiny_run, "--seed", 10, "--limit", 1,
            "--set", "model.epochs=1", "--set", "model.patience=1",
        )
        assert code == cli.EXIT_USAGE
        assert "force" in capsys.readouterr().err

    def test_missing_seed_is_usage_error(self, tiny_dataset, tmp_path, capsys):
        code = run_cli("run", "--dataset", tiny_dataset, "--out", tmp_path / "r")
        assert code == cli.EXIT_USAGE
        assert "seed" in capsys.readouterr().err

    def test_config_file_with_flag_overrides(self, tiny_dataset, tmp_path):
        config = tmp_path / "cfg.json"
        config.write_text(json.dumps({
            "dataset": str(tiny_dataset),
            "seed": 13,
            "splits.limit": 1,
            "model.epochs": 1,
            "model.patience": 1,
            "model.batch_size": 8,
            "augment.enabled": False,
        }))
        out = tmp_path / "r"
        code = run_cli("run", "--config", config, "--out", out, "--seed", 14)
        assert code == cli.EXIT_OK
        stored = json.loads((out / "config.json").read_text())["config"]
        assert stored["seed"] == 14           # flag beats file
        assert stored["augment.enabled"] is False
        assert stored["splits.limit"] == 1

    def test_unknown_config_key_rejected(self, tiny_dataset, tmp_path, capsys):
        code = run_cli(
            "run", "--dataset", tiny_dataset, "--out", tmp_path / "r", "--seed", 1,
            "--set", "model.warp=9",
        )
        assert code == cli.EXIT_USAGE
        assert "model.warp" in capsys.readouterr().err

    def test_missing_dataset_dir_is_config_error(self, tmp_path, capsys):
        code = run_cli("run", "--dataset", tmp_path / "nope", "--out", tmp_path / "r", "--seed", 1)
        assert code == cli.EXIT_USAGE
        assert "not a directory" in capsys.readouterr().err

    def test_dataset_without_manifest_is_data_error(self, tmp_path):
        (tmp_path / "empty").mkdir()
        code = run_cli("run", "--dataset", tmp_path / "empty", "--out", tmp_path / "r", "--seed", 1)
        assert code == cli.EXIT_DATA


class TestReportCommand:
    def test_rebuilds_report(self, tiny_run, capsys):
        (tiny_run / "report.json").unlink()
        assert run_cli("report", "--run", tiny_run) == cli.EXIT_OK
        out = capsys.readouterr().out
        assert re.search(r"accuracy\s+\d\.\d\d ± \d\.\d\d", out)
        assert (tiny_run / "report.json").is_file()

    def test_heatmaps_written(self, tiny_run):
        pytest.importorskip("matplotlib")
        assert run_cli("report", "--run", tiny_run, "--heatmaps") == cli.EXIT_OK
        png = tiny_run / "sections" / "000" / "confusion.png"
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


class TestRunnerConfig:
    def test_config_hash_ignores_out_and_workers(self, tiny_dataset):
        from signenc.runner import RunConfig, config_hash

        a = RunConfig(dataset=str(tiny_dataset), out="x", seed=1, workers=1)
        b = RunConfig(dataset=str(tiny_dataset), out="y", seed=1, workers=8)
        c = RunConfig(dataset=str(tiny_dataset), out="x", seed=2, workers=1)
        assert config_hash(a) == config_hash(b)
        assert config_hash(a) != config_hash(c)

    def test_threads_env_caps_workers(self, monkeypatch):
        from signenc.runner import THREADS_ENV, RunConfig, effective_workers

        cfg = RunConfig(dataset="d", out="o", seed=1, workers=6)
        monkeypatch.delenv(THREADS_ENV, raising=False)
        assert effective_workers(cfg) == 6
        monkeypatch.setenv(THREADS_ENV, "2")
        assert effective_workers(cfg) == 2
        monkeypatch.setenv(THREADS_ENV, "16")
        assert effective_workers(cfg) == 6


class TestEncodeCommand:
    def test_single_file(self, tiny_dataset, tmp_path):
        manifest = load_manifest(tiny_dataset / "manifest.json")
        slm = tiny_dataset / manifest.samples[0].path
        png = tmp_path / "img.png"
        assert run_cli("encode", "--input", slm, "--png-out", png) == cli.EXIT_OK
        assert png.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_dataset_tree(self, tiny_dataset, tmp_path):
        out = tmp_path / "pngs"
        assert run_cli("encode", "--input", tiny_dataset, "--png-out", out) == cli.EXIT_OK
        assert len(list(out.rglob("*.png"))) == 18


class TestBench:
    def test_stats_reported(self, tiny_run, tiny_dataset, tmp_path, capsys):
        model = tiny_run / "sections" / "000" / "model.slc"
        stats_file = tmp_path / "bench.json"
        code = run_cli(
            "bench", "--model", model, "--dataset", tiny_dataset,
            "--count", 12, "--json", stats_file,
        )
        assert code == cli.EXIT_OK
        stats = json.loads(stats_file.read_text())
        assert set(stats) == {"encode", "resize", "predict", "total"}
        assert stats["total"]["count"] == 12
        assert stats["total"]["median_ms"] > 0

    def test_missing_model_is_data_error(self, tiny_dataset, tmp_path):
        code = run_cli("bench", "--model", tmp_path / "no.slc", "--dataset", tiny_dataset)
        assert code == cli.EXIT_DATA

    def test_repeated_medians_stable(self, tiny_run, tiny_dataset):
        from signenc.runner import run_bench

        model = tiny_run / "sections" / "000" / "model.slc"
        medians = [
            run_bench(model, tiny_dataset, count=40)["total"]["median_ms"]
            for _ in range(2)
        ]
        assert abs(medians[0] - medians[1]) / min(medians) <= 0.20

    def test_zero_count_rejected(self, tiny_run, tiny_dataset):
        from signenc.runner import run_bench

        with pytest.raises(ValueError, match="positive"):
            run_bench(tiny_run / "sections" / "000" / "model.slc", tiny_dataset, count=0)


def _write_frames(take_dir, count=4, person=None):
    take_dir.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        doc = make_document([person or make_person()])
        (take_dir / f"frame_{i:06d}.json").write_bytes(doc)


class TestIngest:
    def test_minds_style_tree(self, tmp_path):
        root = tmp_path / "raw"
        for signer in ("s1", "s2"):
            for label in ("hello", "thanks"):
                for take in range(2):
                    _write_frames(root / signer / label / str(take))
        out = tmp_path / "ds"
        code = run_cli("ingest", "--root", root, "--out", out, "--width", 640, "--height", 480)
        assert code == cli.EXIT_OK
        manifest = load_manifest(out / "manifest.json")
        assert len(manifest.samples) == 8
        assert manifest.classes == ("hello", "thanks")
        seq = read_landmark_file(out / manifest.samples[0].path)
        assert seq.num_landmarks == 126
        assert seq.num_frames == 4

    def test_ufop_style_tree_with_annotations(self, tmp_path):
        root = tmp_path / "raw"
        _write_frames(root / "s1" / "vid1", count=60)
        csv = tmp_path / "segments.csv"
        csv.write_text(
            "video_id,sign_label,start_frame,end_frame\n"
            "vid1,wave,20,25\n"
            "vid1,wave,40,45\n"
        )
        out = tmp_path / "ds"
        code = run_cli(
            "ingest", "--root", root, "--out", out,
            "--width", 640, "--height", 480, "--annotations", csv,
        )
        assert code == cli.EXIT_OK
        manifest = load_manifest(out / "manifest.json")
        assert len(manifest.samples) == 2
        # 15-frame padding on both sides: frames 5..40 -> 36 frames
        assert manifest.samples[0].frame_count == 36
        assert [s.take for s in manifest.samples] == [0, 1]

    def test_missing_annotation_names_video(self, tmp_path, capsys):
        root = tmp_path / "raw"
        _write_frames(root / "s1" / "vid1", count=10)
        _write_frames(root / "s1" / "vid2", count=10)
        csv = tmp_path / "segments.csv"
        csv.write_text("video_id,sign_label,start_frame,end_frame\nvid1,wave,2,5\n")
        code = run_cli(
            "ingest", "--root", root, "--out", tmp_path / "ds",
            "--width", 640, "--height", 480, "--annotations", csv,
        )
        assert code == cli.EXIT_DATA
        assert "vid2" in capsys.readouterr().err

    def test_bad_frame_file_fails_that_sample_only(self, tmp_path, capsys):
        root = tmp_path / "raw"
        _write_frames(root / "s1" / "hello" / "0")
        _write_frames(root / "s1" / "hello" / "1")
        (root / "s1" / "hello" / "1" / "frame_000001.json").write_bytes(b"{broken")
        code = run_cli("ingest", "--root", root, "--out", tmp_path / "ds",
                       "--width", 640, "--height", 480)
        assert code == cli.EXIT_DATA
        manifest = load_manifest(tmp_path / "ds" / "manifest.json")
        assert len(manifest.samples) == 1  # the good take survived

    def test_empty_tree_is_data_error(self, tmp_path):
        (tmp_path / "raw").mkdir()
        code = run_cli("ingest", "--root", tmp_path / "raw", "--out", tmp_path / "ds",
                       "--width", 640, "--height", 480)
        assert code == cli.EXIT_DATA


class TestUsage:
    def test_unknown_command(self, capsys):
        assert run_cli("frobnicate") == cli.EXIT_USAGE

    def test_missing_required_argument(self, capsys):
        assert run_cli("synth") == cli.EXIT_USAGE


class TestAblate:
    def test_three_variants(self, tiny_dataset, tmp_path):
        out = tmp_path / "ablation"
        code = run_cli(
            "ablate", "--dataset", tiny_dataset, "--out", out, "--seed", 3, "--limit", 1,
            "--set", "model.epochs=1", "--set", "model.patience=1",
            "--set", "model.batch_size=8",
        )
        assert code == cli.EXIT_OK
        rows = json.loads((out / "ablation.json").read_text())
        assert [r["variant"] for r in rows] == ["default", "uniformize_on", "augment_off"]
        assert [(r["data_aug"], r["uniformize"]) for r in rows] == [
            (True, False), (True, True), (False, False),
        ]
        csv_lines = (out / "ablation.csv").read_text().strip().splitlines()
        assert len(csv_lines) == 4
        for name, _, _ in [("default",)*3, ("uniformize_on",)*3, ("augment_off",)*3]:
            assert (out / name / "report.json").is_file()
