import json
from pathlib import Path

import numpy as np
import pytest

from mock_endpoint import MockEndpoint
from squint import metrics
from squint.client import (AuthError, EndpointConfig, MissingLabels, QueryResult,
                           build_prompt, query_image, run_evaluation)
from squint.dataset import (Manifest, SampleRecord, get_labelset, load_predictions)
from squint.imaging import ImageBuffer
from squint import imageio

DATA = Path(__file__).parent / "data"

TINY = ImageBuffer(np.arange(12, dtype=np.uint8).reshape(2, 2, 3))


def cfg_for(server, **overrides) -> EndpointConfig:
    defaults = dict(base_url=server.url, model_name="mock-model",
                    auth_token_env="SQUINT_TEST_TOKEN", max_concurrent=2,
                    retry_limit=2, timeout=2.0, backoff=0.01)
    defaults.update(overrides)
    return EndpointConfig(**defaults)


@pytest.fixture(autouse=True)
def token_env(monkeypatch):
    monkeypatch.setenv("SQUINT_TEST_TOKEN", "sekrit")


class TestPrompts:
    def test_golden_prompt_bytes(self):
        golden = (DATA / "golden_prompts.txt").read_text(encoding="utf-8").splitlines()
        expected = {golden[i].strip("[]"): golden[i + 1] for i in range(0, len(golden), 2)}
        mnist = get_labelset("IllusionMNIST")
        animals = get_labelset("IllusionAnimals")
        assert build_prompt("classification", "raw", mnist) == \
            expected["classification raw IllusionMNIST"]
        assert build_prompt("char", "raw") == expected["char raw"]
        assert build_prompt("classification", "illusion", animals) == \
            expected["classification illusion IllusionAnimals"]
        assert build_prompt("char", "illusion") == expected["char illusion"]

    def test_raw_prompt_prefix(self):
        p = build_prompt("classification", "raw", get_labelset("IllusionMNIST"))
        assert p.startswith("Which class is in the picture:")

    def test_char_illusion_mentions_no_illusion_reply(self):
        assert 'answer with "No illusion"' in build_prompt("char", "illusion")

    def test_illusion_class_list_ends_with_no_illusion(self):
        p = build_prompt("classification", "illusion", get_labelset("IllusionAnimals"))
        assert "rooster, No illusion." in p

    def test_filtered_uses_illusion_template(self):
        animals = get_labelset("IllusionAnimals")
        assert build_prompt("classification", "filtered", animals) == \
            build_prompt("classification", "illusion", animals)

    def test_missing_labels(self):
        with pytest.raises(MissingLabels):
            build_prompt("classification", "raw")


class TestQueryImage:
    def test_passthrough(self):
        with MockEndpoint(fallback=("ok", "dog")) as server:
            res = query_image(cfg_for(server), TINY, "what?", sample_id="s1")
        assert res.raw_text == "dog"
        assert res.failure_reason is None
        assert res.attempt_count == 1

    def test_timeout_no_retry(self):
        with MockEndpoint(script=[("sleep", 1.0)]) as server:
            res = query_image(cfg_for(server, retry_limit=0, timeout=0.2), TINY, "p")
        assert res.failure_reason == "timeout"
        assert res.attempt_count == 1

    def test_rate_limited_twice_then_success(self):
        with MockEndpoint(script=[("status", 429), ("status", 429), ("ok", "cat")]) as server:
            res = query_image(cfg_for(server), TINY, "p")
        assert res.raw_text == "cat"
        assert res.attempt_count == 3

    def test_retries_exhausted(self):
        with MockEndpoint(script=[("status", 500)] * 5) as server:
            res = query_image(cfg_for(server, retry_limit=1), TINY, "p")
        assert res.failure_reason == "http-500"
        assert res.attempt_count == 2

    def test_malformed_response_not_retried(self):
        with MockEndpoint(script=[("malformed",)]) as server:
            res = query_image(cfg_for(server), TINY, "p")
        assert res.failure_reason == "malformed-response"
        assert res.attempt_count == 1

    def test_missing_token_env(self, monkeypatch):
        monkeypatch.delenv("SQUINT_TEST_TOKEN")
        with MockEndpoint() as server:
            with pytest.raises(AuthError):
                query_image(cfg_for(server), TINY, "p")

    def test_rejected_token(self):
        with MockEndpoint(require_token="other") as server:
            with pytest.raises(AuthError):
                query_image(cfg_for(server), TINY, "p")

    def test_token_sent_as_bearer(self):
        with MockEndpoint(require_token="sekrit") as server:
            res = query_image(cfg_for(server), TINY, "p")
        assert res.raw_text == "dog"

    def test_result_invariant(self):
        with pytest.raises(ValueError):
            QueryResult("s", "text", "also-failure", 0.0, 1)
        with pytest.raises(ValueError):
            QueryResult("s", None, None, 0.0, 1)


def make_manifest(tmp_path, n=10, kind="classification", variant="illusion"):
    labels = get_labelset("IllusionAnimals", include_no_illusion=True)
    records = []
    rng = np.random.default_rng(0)
    for i in range(n):
        rel = f"images/m{i:03d}.png"
        img = ImageBuffer(rng.integers(0, 256, size=(24, 24, 3), dtype=np.uint8))
        (tmp_path / "images").mkdir(exist_ok=True)
        imageio.write_image(tmp_path / rel, img)
        label = labels.classes[i % 3] if kind == "classification" else "abc"
        records.append(SampleRecord(f"m{i:03d}", rel, variant, kind, label, "test"))
    return Manifest(tuple(records), labels if kind == "classification" else None)


class TestRunEvaluation:
    def test_empty_manifest_writes_empty_file(self, tmp_path):
        manifest = Manifest((), get_labelset("IllusionAnimals"))
        out = tmp_path / "preds.jsonl"
        with MockEndpoint() as server:
            summary = run_evaluation(manifest, "illusion", cfg_for(server), out,
                                     images_root=tmp_path)
        assert out.exists() and out.read_bytes() == b""
        assert summary.requested == 0 and summary.failed == 0

    def test_ten_samples_match_transcript(self, tmp_path):
        manifest = make_manifest(tmp_path, n=10)
        script = [("ok", f"answer-{i}") for i in range(10)]
        out = tmp_path / "preds.jsonl"
        with MockEndpoint(script=script) as server:
            summary = run_evaluation(manifest, "illusion",
                                     cfg_for(server, max_concurrent=1), out,
                                     images_root=tmp_path)
        assert summary.succeeded == 10
        pairs = load_predictions(out)
        # with one lane the scripted answers land on ids in sorted order
        assert pairs == [(f"m{i:03d}", f"answer-{i}") for i in range(10)]

    def test_lines_ordered_by_sample_id(self, tmp_path):
        manifest = make_manifest(tmp_path, n=8)
        out = tmp_path / "preds.jsonl"
        with MockEndpoint(delay=0.02) as server:
            run_evaluation(manifest, "illusion", cfg_for(server, max_concurrent=4),
                           out, images_root=tmp_path)
        ids = [sid for sid, _ in load_predictions(out)]
        assert ids == sorted(ids)

    def test_resume_skips_existing(self, tmp_path):
        manifest = make_manifest(tmp_path, n=6)
        out = tmp_path / "preds.jsonl"
        with MockEndpoint() as server:
            first = run_evaluation(manifest, "illusion", cfg_for(server), out,
                                   images_root=tmp_path)
            count_after_first = server.request_count
            second = run_evaluation(manifest, "illusion", cfg_for(server), out,
                                    images_root=tmp_path)
            assert server.request_count == count_after_first
        assert first.succeeded == 6
        assert second.requested == 0 and second.skipped == 6
        assert len(load_predictions(out)) == 6

    def test_failed_samples_retried_on_resume(self, tmp_path):
        manifest = make_manifest(tmp_path, n=3)
        out = tmp_path / "preds.jsonl"
        with MockEndpoint(script=[("status", 418)]) as server:
            first = run_evaluation(manifest, "illusion",
                                   cfg_for(server, max_concurrent=1, retry_limit=0),
                                   out, images_root=tmp_path)
            assert first.failed == 1 and first.succeeded == 2
            assert first.failures[0][1] == "http-418"
            second = run_evaluation(manifest, "illusion",
                                    cfg_for(server, max_concurrent=1, retry_limit=0),
                                    out, images_root=tmp_path)
        assert second.requested == 1 and second.succeeded == 1
        assert len(load_predictions(out)) == 3

    def test_bounded_concurrency(self, tmp_path):
        manifest = make_manifest(tmp_path, n=12)
        out = tmp_path / "preds.jsonl"
        with MockEndpoint(delay=0.05) as server:
            run_evaluation(manifest, "illusion", cfg_for(server, max_concurrent=3),
                           out, images_root=tmp_path)
            assert server.peak_in_flight <= 3
            assert server.peak_in_flight >= 2  # parallelism actually happened

    def test_filtered_applies_reveal_on_the_fly(self, tmp_path):
        manifest = make_manifest(tmp_path, n=2, variant="illusion")
        out = tmp_path / "preds.jsonl"
        with MockEndpoint() as server:
            summary = run_evaluation(manifest, "filtered", cfg_for(server), out,
                                     images_root=tmp_path)
            assert summary.succeeded == 2
            prompt = server.prompts[0]
        assert "illusion" in prompt  # filtered variant uses the illusion template

    def test_prompt_selected_by_variant(self, tmp_path):
        manifest = make_manifest(tmp_path, n=2, variant="raw")
        out = tmp_path / "preds.jsonl"
        with MockEndpoint() as server:
            run_evaluation(manifest, "raw", cfg_for(server), out, images_root=tmp_path)
            assert server.prompts[0].startswith("Which class is in the picture:")

    def test_missing_image_reported_not_fatal(self, tmp_path):
        labels = get_labelset("IllusionAnimals")
        records = (SampleRecord("gone", "missing.png", "illusion", "classification",
                                "cat", "test"),)
        out = tmp_path / "preds.jsonl"
        with MockEndpoint() as server:
            summary = run_evaluation(Manifest(records, labels), "illusion",
                                     cfg_for(server), out, images_root=tmp_path)
        assert summary.failed == 1
        assert summary.failures[0][0] == "gone"
        assert summary.failures[0][1].startswith("io-error")

    def test_shuffled_predictions_score_identically(self, tmp_path):
        manifest = make_manifest(tmp_path, n=6)
        out = tmp_path / "preds.jsonl"
        with MockEndpoint(fallback=("ok", "cat")) as server:
            run_evaluation(manifest, "illusion", cfg_for(server), out,
                           images_root=tmp_path)
        pairs = load_predictions(out)
        report = metrics.render_canonical(
            metrics.score_predictions(manifest, pairs, "classification"))
        shuffled = list(reversed(pairs))
        report2 = metrics.render_canonical(
            metrics.score_predictions(manifest, shuffled, "classification"))
        assert report == report2
