"""Label sets, sample manifests, and normalization of free-text model answers.

Manifests are JSON-lines files: the first line is a header that binds the
label set, every following line is one sample record with a fixed field
order. Predictions files hold one ``{"sample_id", "raw_text"}`` object per
line.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

NO_ILLUSION = "No illusion"

MANIFEST_FORMAT = "manifest-v1"

VARIANTS = ("raw", "illusion", "filtered")
KINDS = ("classification", "char")
SPLITS = ("train", "test")


class ParseError(ValueError):
    """Manifest or predictions file could not be parsed; includes line number."""


class UnknownLabel(ValueError):
    """Label is not a member of the bound label set."""


class DuplicateId(ValueError):
    """The same sample id appears twice."""


@dataclass(frozen=True)
class NotCovered:
    """An answer that could not be normalized into a scoreable value.

    ``no_illusion`` marks an explicit no-illusion reply in char mode, which
    is a non-answer for edit-distance scoring but is counted separately.
    """

    no_illusion: bool = False


NOT_COVERED = NotCovered()
NO_ILLUSION_REPLY = NotCovered(no_illusion=True)


@dataclass(frozen=True)
class LabelSet:
    """Ordered class list; when flagged, "No illusion" is always the last class."""

    name: str
    classes: tuple[str, ...]
    includes_no_illusion: bool = False

    def __post_init__(self) -> None:
        if not self.classes or any(not c for c in self.classes):
            raise ValueError("classes must be nonempty strings")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("classes must be unique")
        has = NO_ILLUSION in self.classes
        if self.includes_no_illusion != has:
            raise ValueError(f"{NO_ILLUSION!r} present iff includes_no_illusion is set")
        if has and self.classes[-1] != NO_ILLUSION:
            raise ValueError(f"{NO_ILLUSION!r} must be the last class")

    @property
    def base_classes(self) -> tuple[str, ...]:
        """Classes without the trailing no-illusion entry."""
        return self.classes[:-1] if self.includes_no_illusion else self.classes

    def with_no_illusion(self) -> "LabelSet":
        if self.includes_no_illusion:
            return self
        return LabelSet(self.name, self.classes + (NO_ILLUSION,), True)

    def without_no_illusion(self) -> "LabelSet":
        if not self.includes_no_illusion:
            return self
        return LabelSet(self.name, self.base_classes, False)


_MNIST_CLASSES = tuple(f"digit {d}" for d in range(10))
_FASHION_CLASSES = ("t-shirt/top", "trouser", "pullover", "dress", "coat",
                    "sandal", "shirt", "sneaker", "bag", "ankle boot")
_ANIMAL_CLASSES = ("cat", "dog", "pigeon", "butterfly", "elephant",
                   "horse", "deer", "snake", "fish", "rooster")

_BUILTIN_CLASSES = {
    "IllusionMNIST": _MNIST_CLASSES,
    "IllusionFashionMNIST": _FASHION_CLASSES,
    "IllusionAnimals": _ANIMAL_CLASSES,
}


def builtin_labelsets() -> list[LabelSet]:
    """The three built-in datasets, each with and without "No illusion"."""
    sets = []
    for name, classes in _BUILTIN_CLASSES.items():
        sets.append(LabelSet(name, classes, False))
        sets.append(LabelSet(name, classes + (NO_ILLUSION,), True))
    return sets


def get_labelset(name: str, include_no_illusion: bool = False) -> LabelSet:
    if name not in _BUILTIN_CLASSES:
        raise KeyError(f"no built-in label set named {name!r}")
    base = LabelSet(name, _BUILTIN_CLASSES[name], False)
    return base.with_no_illusion() if include_no_illusion else base


@dataclass(frozen=True)
class SampleRecord:
    id: str
    image_path: str
    variant: str
    kind: str
    true_label: str
    split: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("id must be nonempty")
        if not self.image_path or Path(self.image_path).is_absolute():
            raise ValueError(f"image_path must be a nonempty relative path, got {self.image_path!r}")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.kind == "char" and self.true_label != NO_ILLUSION \
                and not 3 <= len(self.true_label) <= 5:
            raise ValueError(f"char true_label must be 3-5 characters or {NO_ILLUSION!r}, "
                             f"got {self.true_label!r}")


@dataclass(frozen=True)
class Manifest:
    records: tuple[SampleRecord, ...]
    labelset: LabelSet | None = None

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for rec in self.records:
            if rec.id in seen:
                raise DuplicateId(f"duplicate sample id {rec.id!r}")
            seen.add(rec.id)
            if rec.kind == "classification":
                if self.labelset is None:
                    raise UnknownLabel(f"record {rec.id!r} is classification but the "
                                       "manifest binds no label set")
                if rec.true_label not in self.labelset.classes:
                    raise UnknownLabel(f"record {rec.id!r}: label {rec.true_label!r} not in "
                                       f"label set {self.labelset.name!r}")

    def by_id(self) -> dict[str, SampleRecord]:
        return {rec.id: rec for rec in self.records}


def _labelset_to_json(ls: LabelSet | None):
    if ls is None:
        return None
    return {"name": ls.name, "classes": list(ls.classes),
            "includes_no_illusion": ls.includes_no_illusion}


def _labelset_from_json(obj) -> LabelSet | None:
    if obj is None:
        return None
    return LabelSet(obj["name"], tuple(obj["classes"]), obj["includes_no_illusion"])


def save_manifest(manifest: Manifest, path: str | Path) -> None:
    """Write the canonical manifest file; load(save(m)) == m byte-stably."""
    lines = [json.dumps({"format": MANIFEST_FORMAT,
                         "labelset": _labelset_to_json(manifest.labelset)},
                        ensure_ascii=False)]
    for rec in manifest.records:
        lines.append(json.dumps({"id": rec.id, "image_path": rec.image_path,
                                 "variant": rec.variant, "kind": rec.kind,
                                 "true_label": rec.true_label, "split": rec.split},
                                ensure_ascii=False))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


_RECORD_FIELDS = ("id", "image_path", "variant", "kind", "true_label", "split")


def load_manifest(path: str | Path) -> Manifest:
    text = Path(path).read_text(encoding="utf-8")
    numbered = [(i + 1, ln) for i, ln in enumerate(text.splitlines()) if ln.strip()]
    if not numbered:
        raise ParseError(f"{path}: empty manifest")
    records: list[SampleRecord] = []
    labelset: LabelSet | None = None
    for pos, (lineno, line) in enumerate(numbered):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if pos == 0:
            if not isinstance(obj, dict) or obj.get("format") != MANIFEST_FORMAT:
                raise ParseError(f"{path}:{lineno}: first line must be a "
                                 f"{MANIFEST_FORMAT!r} header")
            try:
                labelset = _labelset_from_json(obj.get("labelset"))
            except (KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"{path}:{lineno}: bad labelset: {exc}") from exc
            continue
        if not isinstance(obj, dict) or set(obj) != set(_RECORD_FIELDS):
            raise ParseError(f"{path}:{lineno}: record must have exactly the fields "
                             f"{_RECORD_FIELDS}")
        try:
            records.append(SampleRecord(**{f: obj[f] for f in _RECORD_FIELDS}))
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    try:
        return Manifest(tuple(records), labelset)
    except (DuplicateId, UnknownLabel) as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def save_predictions(pairs: list[tuple[str, str]], path: str | Path) -> None:
    lines = [json.dumps({"sample_id": sid, "raw_text": raw}, ensure_ascii=False)
             for sid, raw in pairs]
    Path(path).write_text("".join(ln + "\n" for ln in lines), encoding="utf-8")


def load_predictions(path: str | Path) -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    seen: set[str] = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            sid, raw = obj["sample_id"], obj["raw_text"]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ParseError(f"{path}:{lineno}: bad prediction line: {exc}") from exc
        if not isinstance(sid, str) or not isinstance(raw, str):
            raise ParseError(f"{path}:{lineno}: sample_id and raw_text must be strings")
        if sid in seen:
            raise DuplicateId(f"{path}:{lineno}: duplicate sample id {sid!r}")
        seen.add(sid)
        pairs.append((sid, raw))
    return pairs


@dataclass(frozen=True)
class Prediction:
    sample_id: str
    raw_text: str
    normalized: "str | NotCovered"

    @property
    def covered(self) -> bool:
        return isinstance(self.normalized, str)


def _word_bounded(text: str, start: int, end: int) -> bool:
    before = text[start - 1] if start > 0 else ""
    after = text[end] if end < len(text) else ""
    return not before.isalnum() and not after.isalnum()


def _find_word_bounded(haystack: str, needle: str) -> int:
    """Position of the earliest whole-word occurrence, or -1."""
    pos = haystack.find(needle)
    while pos != -1:
        if _word_bounded(haystack, pos, pos + len(needle)):
            return pos
        pos = haystack.find(needle, pos + 1)
    return -1


def normalize_class_answer(raw: str, labels: LabelSet) -> "str | NotCovered":
    """Map free text onto a class, or NOT_COVERED.

    Case-insensitive: a no-illusion phrase wins first (when the set has that
    class), otherwise the longest class name occurring as a whole-word
    substring, ties broken by earliest occurrence.
    """
    folded = raw.casefold()
    if labels.includes_no_illusion and _find_word_bounded(folded, NO_ILLUSION.casefold()) != -1:
        return NO_ILLUSION
    best: tuple[int, int, str] | None = None  # (-length, position, class)
    for cls in labels.base_classes:
        needle = cls.casefold()
        pos = _find_word_bounded(folded, needle)
        if pos != -1:
            key = (-len(needle), pos, cls)
            if best is None or key < best:
                best = key
    return best[2] if best else NOT_COVERED


_QUOTED = re.compile(r'"([^"]*)"')


def normalize_char_answer(raw: str) -> "str | NotCovered":
    """Extract a character-sequence answer, or a NotCovered marker.

    The first double-quoted span wins; failing that, a bare whitespace-free
    token of 1-16 characters. A candidate (or bare reply) equal to
    "No illusion" becomes the no-illusion marker.
    """
    m = _QUOTED.search(raw)
    if m is not None:
        candidate = m.group(1)
        if candidate.casefold() == NO_ILLUSION.casefold():
            return NO_ILLUSION_REPLY
        return candidate
    stripped = raw.strip()
    if stripped.casefold() == NO_ILLUSION.casefold():
        return NO_ILLUSION_REPLY
    if 1 <= len(stripped) <= 16 and not any(ch.isspace() for ch in stripped):
        return stripped
    return NOT_COVERED


def normalize_prediction(sample_id: str, raw_text: str, kind: str,
                         labels: LabelSet | None = None) -> Prediction:
    if kind == "classification":
        if labels is None:
            raise UnknownLabel("classification normalization needs a label set")
        return Prediction(sample_id, raw_text, normalize_class_answer(raw_text, labels))
    if kind == "char":
        return Prediction(sample_id, raw_text, normalize_char_answer(raw_text))
    raise ValueError(f"kind must be one of {KINDS}, got {kind!r}")
