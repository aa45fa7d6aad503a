import hashlib
import json
import shutil
from pathlib import Path

import numpy as np
import pytest

from mock_endpoint import MockEndpoint
from squint import imageio
from squint.cli import main
from squint.imaging import ImageBuffer

DATA = Path(__file__).parent / "data"
FIXTURES = DATA / "fixtures"
GOLDEN = DATA / "golden"


def tree_hash(root: Path) -> dict:
    return {str(p.relative_to(root)): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(root.rglob("*")) if p.is_file()}


def write_color(path, seed, h=40, w=40):
    rng = np.random.default_rng(seed)
    imageio.write_image(path, ImageBuffer(rng.integers(0, 256, (h, w, 3), dtype=np.uint8)))


class TestFilterCommand:
    def test_single_png(self, tmp_path, capsys):
        write_color(tmp_path / "in.png", 0)
        rc = main(["filter", "--input", "in.png", "--output", str(tmp_path / "out"),
                   "--root", str(tmp_path)])
        assert rc == 0
        assert "1 ok, 0 failed" in capsys.readouterr().out
        out = imageio.read_image(tmp_path / "out" / "in.png")
        assert out.channels == 1 and (out.height, out.width) == (40, 40)

    def test_directory_preserves_structure(self, tmp_path):
        (tmp_path / "imgs/sub").mkdir(parents=True)
        write_color(tmp_path / "imgs/a.png", 1)
        write_color(tmp_path / "imgs/sub/b.png", 2)
        rc = main(["filter", "--input", str(tmp_path / "imgs"),
                   "--output", str(tmp_path / "out")])
        assert rc == 0
        assert (tmp_path / "out/a.png").exists()
        assert (tmp_path / "out/sub/b.png").exists()

    def test_manifest_mode_summary(self, tmp_path, capsys):
        rc = main(["synth", "--output", str(tmp_path / "set"), "--n", "6",
                   "--classes", "3", "--image-size", "32", "--seed", "3"])
        assert rc == 0
        rc = main(["filter", "--manifest", "manifest.jsonl",
                   "--output", str(tmp_path / "filtered"), "--root", str(tmp_path / "set")])
        assert rc == 0
        assert "6 ok, 0 failed" in capsys.readouterr().out
        assert len(list((tmp_path / "filtered/images").glob("*.png"))) == 6

    def test_corrupt_file_nonzero_exit(self, tmp_path, capsys):
        (tmp_path / "imgs").mkdir()
        write_color(tmp_path / "imgs/good.png", 4)
        (tmp_path / "imgs/bad.png").write_bytes(b"junk")
        rc = main(["filter", "--input", str(tmp_path / "imgs"),
                   "--output", str(tmp_path / "out")])
        assert rc == 1
        captured = capsys.readouterr()
        assert "1 ok, 1 failed" in captured.out
        assert "bad.png" in captured.err

    def test_replicate3_output(self, tmp_path):
        write_color(tmp_path / "in.png", 5)
        main(["filter", "--input", str(tmp_path / "in.png"),
              "--output", str(tmp_path / "out"), "--replicate3"])
        out = imageio.read_image(tmp_path / "out/in.png")
        assert out.channels == 3
        assert np.array_equal(out.pixels[:, :, 0], out.pixels[:, :, 1])

    def test_ppm_input_becomes_pgm(self, tmp_path):
        rng = np.random.default_rng(6)
        imageio.write_image(tmp_path / "in.ppm",
                            ImageBuffer(rng.integers(0, 256, (8, 8, 3), dtype=np.uint8)))
        main(["filter", "--input", str(tmp_path / "in.ppm"), "--output", str(tmp_path / "out")])
        assert (tmp_path / "out/in.pgm").exists()

    def test_rerun_byte_identical(self, tmp_path):
        write_color(tmp_path / "in.png", 7)
        for name in ("o1", "o2"):
            main(["filter", "--input", str(tmp_path / "in.png"),
                  "--output", str(tmp_path / name)])
        assert tree_hash(tmp_path / "o1") == tree_hash(tmp_path / "o2")


class TestSynthCommand:
    def test_generates_requested_set(self, tmp_path, capsys):
        rc = main(["synth", "--output", str(tmp_path / "d"), "--n", "20",
                   "--classes", "10", "--image-size", "32", "--seed", "1"])
        assert rc == 0
        assert "wrote 20 samples" in capsys.readouterr().out
        assert len(list((tmp_path / "d/images").glob("*.png"))) == 20

    def test_study_emits_two_accuracy_columns(self, tmp_path, capsys):
        rc = main(["synth", "--output", str(tmp_path / "d"), "--n", "10",
                   "--classes", "5", "--image-size", "64", "--seed", "2", "--study"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "unfiltered" in out and "filtered" in out
        study = json.loads((tmp_path / "d/study.json").read_text())
        assert set(study) >= {"unfiltered_accuracy", "filtered_accuracy", "gap", "total"}

    def test_rerun_byte_identical_including_study(self, tmp_path):
        args = ["--n", "8", "--classes", "4", "--image-size", "32", "--seed", "9", "--study"]
        main(["synth", "--output", str(tmp_path / "a")] + args)
        main(["synth", "--output", str(tmp_path / "b")] + args)
        assert tree_hash(tmp_path / "a") == tree_hash(tmp_path / "b")

    def test_effective_config_echoed(self, tmp_path):
        main(["synth", "--output", str(tmp_path / "d"), "--n", "4", "--classes", "2",
              "--image-size", "32", "--seed", "0"])
        cfg = json.loads((tmp_path / "d/effective-config.json").read_text())
        assert cfg["synth"]["class_count"] == 2
        assert cfg["command"] == "synth"


class TestEvaluateCommand:
    def test_golden_classification_report(self, tmp_path):
        rc = main(["evaluate", "--manifest", str(FIXTURES / "classification_manifest.jsonl"),
                   "--predictions", str(FIXTURES / "classification_predictions.jsonl"),
                   "--kind", "classification", "--output", str(tmp_path / "rep")])
        assert rc == 0
        assert (tmp_path / "rep/report.json").read_bytes() == \
            (GOLDEN / "classification_report.json").read_bytes()
        assert (tmp_path / "rep/report.txt").read_bytes() == \
            (GOLDEN / "classification_report.txt").read_bytes()

    def test_golden_char_report(self, tmp_path):
        rc = main(["evaluate", "--manifest", str(FIXTURES / "char_manifest.jsonl"),
                   "--predictions", str(FIXTURES / "char_predictions.jsonl"),
                   "--kind", "char", "--output", str(tmp_path / "rep")])
        assert rc == 0
        assert (tmp_path / "rep/report.json").read_bytes() == \
            (GOLDEN / "char_report.json").read_bytes()

    def test_all_correct_toy_set(self, tmp_path, capsys):
        manifest = tmp_path / "m.jsonl"
        shutil.copy(FIXTURES / "char_manifest.jsonl", manifest)
        preds = tmp_path / "p.jsonl"
        preds.write_text('{"sample_id": "c01", "raw_text": "\\"abc\\""}\n'
                         '{"sample_id": "c02", "raw_text": "\\"def\\""}\n'
                         '{"sample_id": "c03", "raw_text": "\\"ghi\\""}\n')
        rc = main(["evaluate", "--manifest", str(manifest), "--predictions", str(preds),
                   "--kind", "char", "--output", str(tmp_path / "rep")])
        assert rc == 0
        report = json.loads((tmp_path / "rep/report.json").read_text())
        assert report["sequences"]["wer"] == 0.0
        assert report["sequences"]["cer"] == 0.0

    def test_unknown_sample_id_fails(self, tmp_path, capsys):
        preds = tmp_path / "p.jsonl"
        preds.write_text('{"sample_id": "nope", "raw_text": "cat"}\n')
        rc = main(["evaluate", "--manifest", str(FIXTURES / "classification_manifest.jsonl"),
                   "--predictions", str(preds), "--kind", "classification",
                   "--output", str(tmp_path / "rep")])
        assert rc == 1
        assert "nope" in capsys.readouterr().err


class TestReportCommand:
    def test_renders_saved_report(self, capsys):
        rc = main(["report", "--input", str(GOLDEN / "classification_report.json")])
        assert rc == 0
        out = capsys.readouterr().out
        assert out == (GOLDEN / "classification_report.txt").read_text()


class TestQueryCommand:
    def test_missing_auth_env_fails_fast(self, tmp_path, monkeypatch, capsys):
        monkeypatch.delenv("SQUINT_MISSING_TOKEN", raising=False)
        main(["synth", "--output", str(tmp_path / "d"), "--n", "4", "--classes", "2",
              "--image-size", "32", "--seed", "0"])
        rc = main(["query", "--manifest", "d/manifest.jsonl", "--variant", "illusion",
                   "--output", str(tmp_path / "preds.jsonl"), "--root", str(tmp_path),
                   "--base-url", "http://127.0.0.1:1", "--model", "m",
                   "--auth-env", "SQUINT_MISSING_TOKEN"])
        assert rc == 1
        assert "SQUINT_MISSING_TOKEN" in capsys.readouterr().err
        assert not (tmp_path / "preds.jsonl").exists()

    def test_query_and_resume(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setenv("TOK", "x")
        main(["synth", "--output", str(tmp_path / "d"), "--n", "4", "--classes", "2",
              "--image-size", "32", "--seed", "0"])
        with MockEndpoint(fallback=("ok", "disk")) as server:
            base = ["query", "--manifest", str(tmp_path / "d/manifest.jsonl"),
                    "--variant", "illusion", "--output", str(tmp_path / "preds.jsonl"),
                    "--root", str(tmp_path / "d"), "--base-url", server.url,
                    "--model", "m", "--auth-env", "TOK", "--retry-limit", "0"]
            assert main(base) == 0
            first = capsys.readouterr().out
            assert "4 new requests" in first
            assert main(base) == 0
            second = capsys.readouterr().out
            assert "0 new requests" in second and "4 skipped" in second
        lines = (tmp_path / "preds.jsonl").read_text().splitlines()
        assert len(lines) == 4


class TestConfigPrecedence:
    def test_flag_beats_file_beats_default(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"filter": {"gaussian_ksize": 9, "median_ksize": 7}}))
        write_color(tmp_path / "in.png", 8)
        main(["filter", "--input", str(tmp_path / "in.png"), "--output", str(tmp_path / "o"),
              "--config", str(cfg), "--median-ksize", "3"])
        effective = json.loads((tmp_path / "o/effective-config.json").read_text())
        assert effective["filter"]["gaussian_ksize"] == 9   # from file
        assert effective["filter"]["median_ksize"] == 3     # flag wins
        assert effective["filter"]["box_kw"] == 20          # default

    def test_invalid_config_rejected(self, tmp_path, capsys):
        write_color(tmp_path / "in.png", 9)
        rc = main(["filter", "--input", str(tmp_path / "in.png"),
                   "--output", str(tmp_path / "o"), "--gaussian-ksize", "10"])
        assert rc == 1
        assert "gaussian_ksize" in capsys.readouterr().err
