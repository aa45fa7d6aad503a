"""HTTP client that sends dataset images to a vision-chat endpoint.

Targets the common chat-completions wire shape: a single-turn user message
holding the prompt text plus a base64 PNG data URL, answered with
``choices[0].message.content``. The auth token is read from an environment
variable and never written to disk.
"""

from __future__ import annotations

import base64
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import requests

from . import imageio
from .dataset import Manifest, SampleRecord, load_predictions
from .imaging import ImageBuffer, replicate_to_rgb
from .pipeline import DEFAULT_FILTER, FilterConfig, reveal


class AuthError(RuntimeError):
    """Missing or rejected credentials; never retried."""


class MissingLabels(ValueError):
    """Classification prompt requested without a label set."""


RAW_CLASSIFICATION_TEMPLATE = (
    "Which class is in the picture: {class_names}. "
    "Just choose the correct class without any extra explanation."
)
RAW_CHAR_TEMPLATE = (
    "What sequence of characters are in the picture? "
    "Just say the sequence. Put your answer in quotation marks."
)
ILLUSION_CLASSIFICATION_TEMPLATE = (
    "There might be an illusion of something in the image or not. "
    "These are the classes that an illusion might belong to: {class_names}. "
    "Just choose the correct class without any extra explanation."
)
ILLUSION_CHAR_TEMPLATE = (
    "There might be an illusion of a sequence of characters in the picture. "
    'If you cannot detect the sequence of characters, answer with "No illusion". '
    "If you can detect the sequence of characters, what sequence of characters "
    "are in the picture? Just say the sequence. Put your answer in quotation marks."
)


@dataclass(frozen=True)
class PromptTemplate:
    kind: str                 # classification | char
    variant: str              # raw | illusion_or_filtered
    text: str


BUILTIN_TEMPLATES = (
    PromptTemplate("classification", "raw", RAW_CLASSIFICATION_TEMPLATE),
    PromptTemplate("char", "raw", RAW_CHAR_TEMPLATE),
    PromptTemplate("classification", "illusion_or_filtered", ILLUSION_CLASSIFICATION_TEMPLATE),
    PromptTemplate("char", "illusion_or_filtered", ILLUSION_CHAR_TEMPLATE),
)


def build_prompt(kind: str, variant: str, labels=None) -> str:
    """Fill the right template; illusion/filtered class lists end with "No illusion"."""
    illusory = variant in ("illusion", "filtered", "illusion_or_filtered")
    if kind == "char":
        return ILLUSION_CHAR_TEMPLATE if illusory else RAW_CHAR_TEMPLATE
    if kind != "classification":
        raise ValueError(f"kind must be classification or char, got {kind!r}")
    if labels is None:
        raise MissingLabels("classification prompts need a label set")
    if illusory:
        names = labels.with_no_illusion().classes
        return ILLUSION_CLASSIFICATION_TEMPLATE.format(class_names=", ".join(names))
    return RAW_CLASSIFICATION_TEMPLATE.format(class_names=", ".join(labels.base_classes))


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    auth_token_env: str = "VLM_API_TOKEN"
    max_concurrent: int = 4
    retry_limit: int = 3
    timeout: float = 60.0
    backoff: float = 0.5

    def __post_init__(self) -> None:
        if self.max_concurrent < 1:
            raise ValueError(f"max_concurrent must be >= 1, got {self.max_concurrent}")
        if self.retry_limit < 0:
            raise ValueError(f"retry_limit must be >= 0, got {self.retry_limit}")


@dataclass(frozen=True)
class QueryResult:
    sample_id: str
    raw_text: str | None
    failure_reason: str | None
    latency: float
    attempt_count: int

    def __post_init__(self) -> None:
        if (self.raw_text is None) == (self.failure_reason is None):
            raise ValueError("exactly one of raw_text/failure_reason must be set")


def _auth_token(cfg: EndpointConfig) -> str:
    token = os.environ.get(cfg.auth_token_env)
    if not token:
        raise AuthError(f"environment variable {cfg.auth_token_env} is not set")
    return token


def _request_body(cfg: EndpointConfig, image: ImageBuffer, prompt: str) -> dict:
    data_url = "data:image/png;base64," + base64.b64encode(imageio.encode_png(image)).decode("ascii")
    return {
        "model": cfg.model_name,
        "messages": [{
            "role": "user",
            "content": [
                {"type": "text", "text": prompt},
                {"type": "image_url", "image_url": {"url": data_url}},
            ],
        }],
    }


def query_image(cfg: EndpointConfig, image: ImageBuffer, prompt: str,
                sample_id: str = "") -> QueryResult:
    """Single vision-chat request with exponential backoff on transient failures.

    Retryable: HTTP 429 and 5xx, timeouts, connection errors. AuthError
    (401/403 or missing token) raises instead of returning a result.
    """
    token = _auth_token(cfg)
    url = cfg.base_url.rstrip("/") + "/chat/completions"
    body = _request_body(cfg, image, prompt)
    headers = {"Authorization": f"Bearer {token}"}
    start = time.monotonic()
    attempts = 0
    failure = "unreachable"
    while attempts <= cfg.retry_limit:
        attempts += 1
        retryable = False
        try:
            resp = requests.post(url, json=body, headers=headers, timeout=cfg.timeout)
            if resp.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credentials (HTTP {resp.status_code})")
            if resp.status_code == 429:
                failure, retryable = "rate-limited", True
            elif resp.status_code >= 500:
                failure, retryable = f"http-{resp.status_code}", True
            elif resp.status_code != 200:
                failure = f"http-{resp.status_code}"
            else:
                try:
                    text = resp.json()["choices"][0]["message"]["content"]
                    if not isinstance(text, str):
                        raise TypeError
                except (ValueError, KeyError, IndexError, TypeError):
                    failure = "malformed-response"
                else:
                    return QueryResult(sample_id, text, None,
                                       time.monotonic() - start, attempts)
        except requests.Timeout:
            failure, retryable = "timeout", True
        except requests.ConnectionError:
            failure, retryable = "connection-error", True
        if not retryable or attempts > cfg.retry_limit:
            break
        time.sleep(cfg.backoff * 2 ** (attempts - 1))
    return QueryResult(sample_id, None, failure, time.monotonic() - start, attempts)


@dataclass
class RunSummary:
    requested: int = 0
    succeeded: int = 0
    failed: int = 0
    skipped: int = 0
    failures: list[tuple[str, str]] = field(default_factory=list)


def _select_targets(manifest: Manifest, variant: str) -> list[tuple[SampleRecord, bool]]:
    """Records to query, flagged with whether reveal() must run on the fly."""
    if variant == "filtered":
        pre = {r.id: r for r in manifest.records if r.variant == "filtered"}
        targets = [(r, False) for r in pre.values()]
        targets += [(r, True) for r in manifest.records
                    if r.variant == "illusion" and r.id not in pre]
    else:
        targets = [(r, False) for r in manifest.records if r.variant == variant]
    return sorted(targets, key=lambda t: t[0].id)


def run_evaluation(manifest: Manifest, variant: str, cfg: EndpointConfig,
                   output_path: str | Path, *, images_root: str | Path = ".",
                   filter_config: FilterConfig = DEFAULT_FILTER,
                   replicate_channels: bool = False) -> RunSummary:
    """Query every manifest sample for one variant, appending prediction lines.

    Resumable: sample ids already present in the output file are skipped.
    Within one run, lines are appended in sample-id order. Failed samples
    are reported in the summary and left out of the file so a rerun retries
    them.
    """
    if variant not in ("raw", "illusion", "filtered"):
        raise ValueError(f"variant must be raw, illusion, or filtered, got {variant!r}")
    _auth_token(cfg)  # fail fast before any request
    output_path = Path(output_path)
    root = Path(images_root)
    existing = {sid for sid, _ in load_predictions(output_path)} if output_path.exists() else set()

    summary = RunSummary()
    targets: list[tuple[SampleRecord, bool]] = []
    for rec, on_the_fly in _select_targets(manifest, variant):
        if rec.id in existing:
            summary.skipped += 1
        else:
            targets.append((rec, on_the_fly))
    summary.requested = len(targets)

    prompts = {kind: build_prompt(kind, variant, manifest.labelset)
               for kind in {rec.kind for rec, _ in targets}}

    def task(rec: SampleRecord, on_the_fly: bool) -> QueryResult:
        try:
            image = imageio.read_image(root / rec.image_path)
            if on_the_fly:
                image = reveal(image, filter_config)
            if replicate_channels and image.channels == 1:
                image = replicate_to_rgb(image)
        except Exception as exc:
            return QueryResult(rec.id, None, f"io-error: {exc}", 0.0, 0)
        return query_image(cfg, image, prompts[rec.kind], sample_id=rec.id)

    output_path.parent.mkdir(parents=True, exist_ok=True)
    with output_path.open("a", encoding="utf-8") as out, \
            ThreadPoolExecutor(max_workers=cfg.max_concurrent) as pool:
        futures = [pool.submit(task, rec, fly) for rec, fly in targets]
        for (rec, _), fut in zip(targets, futures):
            result = fut.result()
            if result.raw_text is not None:
                out.write(json.dumps({"sample_id": rec.id, "raw_text": result.raw_text},
                                     ensure_ascii=False) + "\n")
                out.flush()
                summary.succeeded += 1
            else:
                summary.failed += 1
                summary.failures.append((rec.id, result.failure_reason))
    return summary
