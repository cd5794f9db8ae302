"""Dataset loading, seeded few-shot splits, and the unlabeled pool.

Datasets are JSONL files with one record per line:
``{"text_a": str, "text_b": str|null, "label": str}``. Unlabeled pool
files use the same schema with ``"label": null``.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

from .errors import InsufficientDataError, ParseError, ValidationError

if TYPE_CHECKING:
    from .prompt import TaskSpec


@dataclass(frozen=True)
class LabeledExample:
    """One or two text segments plus a label from the task's label space."""

    text_a: str
    text_b: str | None
    label: str


@dataclass(frozen=True)
class FewShotSplit:
    """Equal-sized train/dev sets with exactly K examples per class each."""

    train: tuple[LabeledExample, ...]
    dev: tuple[LabeledExample, ...]
    seed: int
    k: int


@dataclass(frozen=True)
class UnlabeledPool:
    """Label-free texts disjoint from the few-shot split, for augmentation."""

    texts: tuple[tuple[str, str | None], ...]
    source: str


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def content_key(text_a: str, text_b: str | None) -> str:
    """Hash of the whitespace-normalized text content, ignoring any label."""
    payload = _normalize_ws(text_a) + "\x1f" + (_normalize_ws(text_b) if text_b else "")
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def example_key(example: LabeledExample) -> str:
    """Identity hash of (text_a, text_b, label) after whitespace normalization."""
    payload = content_key(example.text_a, example.text_b) + "\x1f" + example.label
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def derive_seed(*parts) -> int:
    """Stable 64-bit integer seed derived from heterogeneous parts."""
    payload = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _check_example(ex: LabeledExample, spec: TaskSpec) -> None:
    if not ex.text_a:
        raise ValidationError("text_a must be non-empty")
    if spec.is_pair and ex.text_b is None:
        raise ValidationError(f"task '{spec.name}' is a pair task; text_b missing")
    if not spec.is_pair and ex.text_b is not None:
        raise ValidationError(
            f"task '{spec.name}' is a single-segment task; unexpected text_b"
        )
    if ex.label not in spec.label_space:
        raise ValidationError(f"unknown label '{ex.label}' for task '{spec.name}'")


def load_dataset(path: str | Path, spec: TaskSpec) -> list[LabeledExample]:
    """Load a labeled JSONL dataset, validating every record against the task."""
    examples: list[LabeledExample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from exc
            if not isinstance(record, dict) or "text_a" not in record:
                raise ParseError("record must be an object with 'text_a'", lineno)
            label = record.get("label")
            if label is None:
                raise ParseError("labeled dataset record has null label", lineno)
            ex = LabeledExample(
                text_a=str(record["text_a"]),
                text_b=record.get("text_b"),
                label=str(label),
            )
            try:
                _check_example(ex, spec)
            except ValidationError as exc:
                raise ValidationError(f"line {lineno}: {exc}") from exc
            examples.append(ex)
    return examples


def load_pool_file(path: str | Path, source: str | None = None) -> UnlabeledPool:
    """Load an unlabeled pool file (same schema as datasets, label null)."""
    texts: list[tuple[str, str | None]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from exc
            if not isinstance(record, dict) or "text_a" not in record:
                raise ParseError("record must be an object with 'text_a'", lineno)
            texts.append((str(record["text_a"]), record.get("text_b")))
    return UnlabeledPool(texts=tuple(texts), source=source or str(path))


def save_examples(path: str | Path, examples, extra: dict | None = None) -> None:
    """Write examples as JSONL; `extra` fields are merged into every record."""
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            record = {"text_a": ex.text_a, "text_b": ex.text_b, "label": ex.label}
            if extra:
                record.update(extra)
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def sample_few_shot(
    data: list[LabeledExample], k: int, seed: int
) -> FewShotSplit:
    """Draw a K-shot train/dev split, deterministically from (data, k, seed).

    Examples are deduplicated by identity and order-normalized (sorted by
    identity hash) before the seeded per-class shuffle, so the result does
    not depend on the input ordering. The first K examples per class go to
    train, the next K to dev.
    """
    if k <= 0:
        raise ValidationError("k must be positive")
    by_label: dict[str, dict[str, LabeledExample]] = {}
    for ex in data:
        by_label.setdefault(ex.label, {})[example_key(ex)] = ex

    train: list[LabeledExample] = []
    dev: list[LabeledExample] = []
    for label in sorted(by_label):
        unique = by_label[label]
        if len(unique) < 2 * k:
            raise InsufficientDataError(
                f"label '{label}' has {len(unique)} unique examples; "
                f"need at least {2 * k}"
            )
        keys = sorted(unique)
        rng = random.Random(derive_seed("few-shot", seed, label))
        rng.shuffle(keys)
        train.extend(unique[key] for key in keys[:k])
        dev.extend(unique[key] for key in keys[k : 2 * k])
    return FewShotSplit(train=tuple(train), dev=tuple(dev), seed=seed, k=k)


def build_unlabeled_pool(
    data: list[LabeledExample], split: FewShotSplit, cap: int
) -> UnlabeledPool:
    """Strip labels and drop anything content-identical to a split member.

    The split's dev examples are excluded as well as train. Input order is
    preserved; the pool is deduplicated by content and truncated at `cap`.
    """
    if cap < 0:
        raise ValidationError("cap must be >= 0")
    taken = {content_key(ex.text_a, ex.text_b) for ex in split.train}
    taken.update(content_key(ex.text_a, ex.text_b) for ex in split.dev)
    texts: list[tuple[str, str | None]] = []
    for ex in data:
        if len(texts) >= cap:
            break
        key = content_key(ex.text_a, ex.text_b)
        if key in taken:
            continue
        taken.add(key)
        texts.append((ex.text_a, ex.text_b))
    return UnlabeledPool(texts=tuple(texts), source="training-set-minus-split")
