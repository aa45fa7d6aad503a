"""Classification and sequence metrics: accuracy, macro P/R/F1, WER, CER, coverage.

All percentages are on a 0-100 scale. WER and CER aggregate at corpus level
(summed edits over summed reference length), so CER can exceed 100 when
hypotheses are much longer than their references. Macro averages are
unweighted means over every class in the label set; a class whose
denominator is zero scores 0 for that statistic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import (NO_ILLUSION, LabelSet, Manifest, NotCovered, Prediction,
                      normalize_prediction)


class EmptyReference(ValueError):
    """A reference sequence (or the whole reference corpus) is empty."""


class LengthMismatch(ValueError):
    """Reference and hypothesis lists differ in length."""


class EmptyMatrix(ValueError):
    """Confusion matrix holds no scored samples."""


class EmptyInput(ValueError):
    """Operation needs at least one element."""


class UnknownSampleId(KeyError):
    """Prediction refers to a sample id missing from the manifest."""


class KindMismatch(ValueError):
    """Prediction/evaluation kind disagrees with the sample record."""


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Minimum insertions + deletions + substitutions turning a into b."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, sa in enumerate(a, 1):
        cur = [i]
        for j, sb in enumerate(b, 1):
            cur.append(min(prev[j] + 1,
                           cur[j - 1] + 1,
                           prev[j - 1] + (sa != sb)))
        prev = cur
    return prev[-1]


def _check_corpus(refs: Sequence[str], hyps: Sequence[str]) -> None:
    if len(refs) != len(hyps):
        raise LengthMismatch(f"{len(refs)} references vs {len(hyps)} hypotheses")
    if not refs:
        raise EmptyReference("reference corpus is empty")


def cer_corpus(refs: Sequence[str], hyps: Sequence[str]) -> float:
    """Corpus character error rate: 100 * sum(char edits) / sum(ref chars)."""
    edits, total = char_edit_counts(refs, hyps)
    return 100.0 * edits / total


def wer_corpus(refs: Sequence[str], hyps: Sequence[str]) -> float:
    """Corpus word error rate; tokens are maximal runs of non-whitespace."""
    edits, total = word_edit_counts(refs, hyps)
    return 100.0 * edits / total


def char_edit_counts(refs: Sequence[str], hyps: Sequence[str]) -> tuple[int, int]:
    _check_corpus(refs, hyps)
    edits = total = 0
    for ref, hyp in zip(refs, hyps):
        if not ref:
            raise EmptyReference("empty reference string")
        edits += levenshtein(ref, hyp)
        total += len(ref)
    return edits, total


def word_edit_counts(refs: Sequence[str], hyps: Sequence[str]) -> tuple[int, int]:
    _check_corpus(refs, hyps)
    edits = total = 0
    for ref, hyp in zip(refs, hyps):
        rtok, htok = ref.split(), hyp.split()
        if not rtok:
            raise EmptyReference(f"reference {ref!r} has no tokens")
        edits += levenshtein(rtok, htok)
        total += len(rtok)
    return edits, total


@dataclass(frozen=True)
class SeqEvalReport:
    wer: float
    cer: float
    total_ref_words: int
    total_ref_chars: int
    total_word_edits: int
    total_char_edits: int


def evaluate_sequences(refs: Sequence[str], hyps: Sequence[str]) -> SeqEvalReport:
    word_edits, words = word_edit_counts(refs, hyps)
    char_edits, chars = char_edit_counts(refs, hyps)
    return SeqEvalReport(wer=100.0 * word_edits / words,
                         cer=100.0 * char_edits / chars,
                         total_ref_words=words, total_ref_chars=chars,
                         total_word_edits=word_edits, total_char_edits=char_edits)


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Rows are true labels, columns are predicted labels, in label-set order."""

    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        c = len(self.labels)
        if counts.shape != (c, c):
            raise ValueError(f"counts must be {c}x{c}, got {counts.shape}")
        if (counts < 0).any():
            raise ValueError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def build_confusion(pairs: Sequence[tuple[str, str]], labels: LabelSet) -> ConfusionMatrix:
    """Tally (true, predicted) pairs; every label must be in the set."""
    from .dataset import UnknownLabel
    index = {cls: i for i, cls in enumerate(labels.classes)}
    counts = np.zeros((len(labels.classes), len(labels.classes)), dtype=np.int64)
    for true, pred in pairs:
        if true not in index:
            raise UnknownLabel(f"true label {true!r} not in label set {labels.name!r}")
        if pred not in index:
            raise UnknownLabel(f"predicted label {pred!r} not in label set {labels.name!r}")
        counts[index[true], index[pred]] += 1
    return ConfusionMatrix(tuple(labels.classes), counts)


@dataclass(frozen=True)
class ClassStats:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class ClassificationReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: tuple[ClassStats, ...]


def classification_report(cm: ConfusionMatrix) -> ClassificationReport:
    """Accuracy plus per-class and macro precision/recall/F1, as percentages."""
    total = cm.total
    if total == 0:
        raise EmptyMatrix("confusion matrix holds no samples")
    counts = cm.counts
    per_class = []
    for i, label in enumerate(cm.labels):
        tp = int(counts[i, i])
        pred = int(counts[:, i].sum())
        true = int(counts[i, :].sum())
        precision = tp / pred if pred else 0.0
        recall = tp / true if true else 0.0
        f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append(ClassStats(label, 100.0 * precision, 100.0 * recall,
                                    100.0 * f1, true))
    c = len(cm.labels)
    return ClassificationReport(
        accuracy=100.0 * float(np.trace(counts)) / total,
        macro_precision=sum(s.precision for s in per_class) / c,
        macro_recall=sum(s.recall for s in per_class) / c,
        macro_f1=sum(s.f1 for s in per_class) / c,
        per_class=tuple(per_class),
    )


def coverage(preds: Sequence[Prediction]) -> float:
    """Percentage of predictions whose answer normalized into a scoreable value."""
    if not preds:
        raise EmptyInput("coverage needs at least one prediction")
    covered = sum(1 for p in preds if p.covered)
    return 100.0 * covered / len(preds)


@dataclass(frozen=True)
class MetricsReport:
    """Everything cmd-evaluate emits for one predictions file."""

    kind: str
    counts: dict
    coverage_percent: float | None
    classification: ClassificationReport | None = None
    confusion: ConfusionMatrix | None = None
    sequences: SeqEvalReport | None = None


def score_predictions(manifest: Manifest, predictions: Sequence[tuple[str, str]],
                      kind: str) -> MetricsReport:
    """Normalize raw answers and score them against manifest ground truth.

    Not-covered predictions only affect coverage. Char-kind no-illusion
    replies are counted but excluded from WER/CER, as are samples whose
    ground truth is the no-illusion class.
    """
    by_id = manifest.by_id()
    normalized: list[tuple[Prediction, str]] = []  # (prediction, true_label)
    for sid, raw in predictions:
        rec = by_id.get(sid)
        if rec is None:
            raise UnknownSampleId(f"sample id {sid!r} not in manifest")
        if rec.kind != kind:
            raise KindMismatch(f"sample {sid!r} has kind {rec.kind!r}, scoring {kind!r}")
        normalized.append((normalize_prediction(sid, raw, kind, manifest.labelset),
                           rec.true_label))

    preds = [p for p, _ in normalized]
    counts = {"total": len(preds), "covered": sum(1 for p in preds if p.covered)}
    cov = coverage(preds) if preds else None

    if kind == "classification":
        pairs = [(true, p.normalized) for p, true in normalized if p.covered]
        counts["scored"] = len(pairs)
        if not pairs:
            return MetricsReport(kind, counts, cov)
        cm = build_confusion(pairs, manifest.labelset)
        return MetricsReport(kind, counts, cov, classification=classification_report(cm),
                             confusion=cm)

    no_illusion_replies = sum(1 for p in preds
                              if isinstance(p.normalized, NotCovered) and p.normalized.no_illusion)
    refs = [true for p, true in normalized if p.covered and true != NO_ILLUSION]
    hyps = [p.normalized for p, true in normalized if p.covered and true != NO_ILLUSION]
    counts["scored"] = len(refs)
    counts["no_illusion_replies"] = no_illusion_replies
    counts["no_illusion_truths"] = sum(1 for _, true in normalized if true == NO_ILLUSION)
    seq = evaluate_sequences(refs, hyps) if refs else None
    return MetricsReport(kind, counts, cov, sequences=seq)


def _round2(x: float) -> str:
    return f"{x:.2f}"


def render_canonical(report: MetricsReport) -> bytes:
    """Key-sorted JSON with a trailing newline; byte-stable across runs."""
    payload: dict = {"kind": report.kind, "counts": dict(sorted(report.counts.items())),
                     "coverage_percent": report.coverage_percent}
    if report.classification is not None:
        rep = report.classification
        payload["classification"] = {
            "accuracy": rep.accuracy,
            "macro_precision": rep.macro_precision,
            "macro_recall": rep.macro_recall,
            "macro_f1": rep.macro_f1,
            "per_class": [{"label": s.label, "precision": s.precision, "recall": s.recall,
                           "f1": s.f1, "support": s.support} for s in rep.per_class],
        }
    else:
        payload["classification"] = None
    if report.confusion is not None:
        payload["confusion"] = {"labels": list(report.confusion.labels),
                                "counts": report.confusion.counts.tolist()}
    else:
        payload["confusion"] = None
    if report.sequences is not None:
        seq = report.sequences
        payload["sequences"] = {"wer": seq.wer, "cer": seq.cer,
                                "total_ref_words": seq.total_ref_words,
                                "total_ref_chars": seq.total_ref_chars,
                                "total_word_edits": seq.total_word_edits,
                                "total_char_edits": seq.total_char_edits}
    else:
        payload["sequences"] = None
    return (json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def parse_canonical(data: bytes) -> MetricsReport:
    """Inverse of render_canonical."""
    payload = json.loads(data.decode("utf-8"))
    classification = confusion = sequences = None
    if payload.get("classification") is not None:
        rep = payload["classification"]
        classification = ClassificationReport(
            accuracy=rep["accuracy"], macro_precision=rep["macro_precision"],
            macro_recall=rep["macro_recall"], macro_f1=rep["macro_f1"],
            per_class=tuple(ClassStats(s["label"], s["precision"], s["recall"],
                                       s["f1"], s["support"])
                            for s in rep["per_class"]))
    if payload.get("confusion") is not None:
        confusion = ConfusionMatrix(tuple(payload["confusion"]["labels"]),
                                    np.asarray(payload["confusion"]["counts"], dtype=np.int64))
    if payload.get("sequences") is not None:
        seq = payload["sequences"]
        sequences = SeqEvalReport(seq["wer"], seq["cer"], seq["total_ref_words"],
                                  seq["total_ref_chars"], seq["total_word_edits"],
                                  seq["total_char_edits"])
    return MetricsReport(payload["kind"], payload["counts"], payload["coverage_percent"],
                         classification=classification, confusion=confusion,
                         sequences=sequences)


def render_table(report: MetricsReport) -> str:
    """Human-readable aligned table of the same numbers."""
    lines: list[str] = []
    cov = "-" if report.coverage_percent is None else _round2(report.coverage_percent)
    if report.classification is not None:
        rep = report.classification
        lines.append(f"{'accuracy':>10} {'precision':>10} {'recall':>10} "
                     f"{'f1':>10} {'coverage':>10}")
        lines.append(f"{_round2(rep.accuracy):>10} {_round2(rep.macro_precision):>10} "
                     f"{_round2(rep.macro_recall):>10} {_round2(rep.macro_f1):>10} {cov:>10}")
        lines.append("")
        width = max(len("label"), *(len(s.label) for s in rep.per_class))
        lines.append(f"{'label':<{width}} {'precision':>10} {'recall':>10} "
                     f"{'f1':>10} {'support':>8}")
        for s in rep.per_class:
            lines.append(f"{s.label:<{width}} {_round2(s.precision):>10} "
                         f"{_round2(s.recall):>10} {_round2(s.f1):>10} {s.support:>8}")
    elif report.sequences is not None:
        seq = report.sequences
        lines.append(f"{'wer':>10} {'cer':>10} {'coverage':>10}")
        lines.append(f"{_round2(seq.wer):>10} {_round2(seq.cer):>10} {cov:>10}")
    else:
        lines.append(f"no scored samples (coverage {cov})")
    lines.append("")
    lines.append("counts: " + ", ".join(f"{k}={v}" for k, v in sorted(report.counts.items())))
    return "\n".join(lines) + "\n"
