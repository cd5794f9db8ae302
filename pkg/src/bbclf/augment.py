"""Pseudo-labeling, confidence filtering, class balancing, and merging.

Only pool items whose top label probability is strictly above the
threshold survive; surviving classes are then downsampled to the
smallest class count so the classifier trains on balanced data.
"""

from __future__ import annotations

import enum
import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path

from .corpus import FewShotSplit, LabeledExample, UnlabeledPool, content_key, derive_seed
from .errors import ParseError, ValidationError
from .prompt import TaskSpec
from .teacher import TeacherModel, predict_label_distributions

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PseudoLabeledExample:
    text_a: str
    text_b: str | None
    pseudo_label: str
    confidence: float


class BalanceStrategy(enum.Enum):
    MIN_CAP = "min_cap"


@dataclass(frozen=True)
class AugmentedSet:
    examples: tuple[PseudoLabeledExample, ...]
    per_class_counts: dict[str, int]
    threshold: float


def pseudo_label(
    teacher: TeacherModel,
    pool: UnlabeledPool,
    spec: TaskSpec,
    threshold: float = 0.9,
) -> list[PseudoLabeledExample]:
    """Label the pool with the teacher, keeping confidence strictly > threshold.

    Pool order is canonicalized (sorted by content hash) before scoring so
    downstream seeded steps are independent of pool construction order.
    """
    if not 0.0 <= threshold < 1.0:
        raise ValidationError("threshold must be in [0, 1)")
    texts = sorted(pool.texts, key=lambda t: content_key(t[0], t[1]))
    if not texts:
        return []
    probs = predict_label_distributions(teacher, spec, texts)
    retained: list[PseudoLabeledExample] = []
    for (text_a, text_b), row in zip(texts, probs):
        best = int(row.argmax())
        confidence = float(row[best])
        if confidence > threshold:
            retained.append(
                PseudoLabeledExample(
                    text_a=text_a,
                    text_b=text_b,
                    pseudo_label=spec.label_space[best],
                    confidence=confidence,
                )
            )
    return retained


def balance_classes(
    items: list[PseudoLabeledExample],
    strategy: BalanceStrategy = BalanceStrategy.MIN_CAP,
    seed: int = 0,
    threshold: float = 0.9,
    label_space: tuple[str, ...] | None = None,
) -> AugmentedSet:
    """Downsample every present class to the smallest class count.

    Within a class, higher-confidence items are preferred; ties are broken
    by a seeded shuffle. Classes with no retained items stay absent (with
    a warning); an entirely empty input yields an empty set, not an error.
    """
    if strategy is not BalanceStrategy.MIN_CAP:
        raise ValidationError(f"unknown balance strategy {strategy}")
    by_class: dict[str, list[PseudoLabeledExample]] = {}
    for item in items:
        by_class.setdefault(item.pseudo_label, []).append(item)
    if label_space:
        for label in label_space:
            if label not in by_class:
                logger.warning("no pseudo-labeled examples for class '%s'", label)
    if not by_class:
        logger.warning("augmentation is empty: no items above the threshold")
        return AugmentedSet(examples=(), per_class_counts={}, threshold=threshold)

    n_min = min(len(v) for v in by_class.values())
    kept: list[PseudoLabeledExample] = []
    counts: dict[str, int] = {}
    for label in sorted(by_class):
        members = sorted(
            by_class[label], key=lambda it: content_key(it.text_a, it.text_b)
        )
        rng = random.Random(derive_seed("balance", seed, label))
        tiebreak = {id(it): rng.random() for it in members}
        members.sort(key=lambda it: (-it.confidence, tiebreak[id(it)]))
        kept.extend(members[:n_min])
        counts[label] = n_min
    return AugmentedSet(
        examples=tuple(kept), per_class_counts=counts, threshold=threshold
    )


def merge_train(
    aug: AugmentedSet, split: FewShotSplit
) -> list[tuple[LabeledExample, str, float]]:
    """Union of gold train examples and pseudo-labeled ones, all at weight 1.

    A content collision between a pseudo-labeled item and a gold example
    resolves to the gold label. Gold examples come first in the output.
    """
    merged: list[tuple[LabeledExample, str, float]] = []
    gold_keys = set()
    for ex in split.train:
        gold_keys.add(content_key(ex.text_a, ex.text_b))
        merged.append((ex, ex.label, 1.0))
    for item in aug.examples:
        if content_key(item.text_a, item.text_b) in gold_keys:
            continue
        ex = LabeledExample(
            text_a=item.text_a, text_b=item.text_b, label=item.pseudo_label
        )
        merged.append((ex, item.pseudo_label, 1.0))
    return merged


def save_augmented(path: str | Path, aug: AugmentedSet) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in aug.examples:
            record = {
                "text_a": item.text_a,
                "text_b": item.text_b,
                "pseudo_label": item.pseudo_label,
                "confidence": item.confidence,
            }
            fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")


def load_augmented(path: str | Path, threshold: float) -> AugmentedSet:
    examples: list[PseudoLabeledExample] = []
    counts: dict[str, int] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                item = PseudoLabeledExample(
                    text_a=record["text_a"],
                    text_b=record.get("text_b"),
                    pseudo_label=record["pseudo_label"],
                    confidence=float(record["confidence"]),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ParseError(f"bad augmented record: {exc}", lineno) from exc
            examples.append(item)
            counts[item.pseudo_label] = counts.get(item.pseudo_label, 0) + 1
    return AugmentedSet(
        examples=tuple(examples), per_class_counts=counts, threshold=threshold
    )
