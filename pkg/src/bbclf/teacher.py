"""Prompt-based teacher finetuning, grid search, and label-word scoring.

The teacher sees templated inputs with one demonstration per label
appended; the same rendering is used for training, dev evaluation, and
pseudo-label prediction so its feature space stays consistent.
"""

from __future__ import annotations

import itertools
import logging
import math
import random
from dataclasses import dataclass, replace

import numpy as np

from .backends.types import TeacherBackend
from .corpus import FewShotSplit, derive_seed
from .errors import ContractError, TrainingError, ValidationError
from .prompt import (
    DemonstrationSet,
    TaskSpec,
    append_demonstrations,
    apply_template,
    render_demonstration,
    verbalize,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TeacherTrainConfig:
    batch_size: int = 2
    max_seq_len: int = 128
    max_steps: int = 2000
    learning_rate: float = 1e-5
    grad_accum_steps: int = 1
    seed: int = 0

    def __post_init__(self):
        if min(self.batch_size, self.max_seq_len, self.grad_accum_steps) < 1:
            raise ValidationError("teacher config counts must be positive")
        if self.max_steps < 0:
            raise ValidationError("max_steps must be >= 0")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")


@dataclass(frozen=True)
class GridSpace:
    learning_rates: tuple[float, ...] = (1e-5, 2e-5)
    grad_accum: tuple[int, ...] = (1, 2)

    def __post_init__(self):
        if not self.learning_rates or not self.grad_accum:
            raise ValidationError("grid axes must be non-empty")

    def variants(self) -> list[tuple[float, int]]:
        return list(itertools.product(self.learning_rates, self.grad_accum))


@dataclass
class TeacherModel:
    backend: TeacherBackend
    dev_accuracy: float
    config: TeacherTrainConfig
    demos: DemonstrationSet
    artifact_ref: str | None = None


def render_for_teacher(
    spec: TaskSpec,
    example,
    demos: DemonstrationSet,
    max_seq_len: int,
) -> str:
    """Template + demonstrations, truncated to the token budget.

    Token counting is whitespace-based; real subword budgeting belongs to
    the backend. Demonstrations are dropped from the right (last label
    first) until the text fits; the original input and its mask slot are
    never truncated.
    """
    prompt = apply_template(spec, example)
    demo_parts = [
        render_demonstration(spec, demos.by_label[label])
        for label in spec.label_space
        if label in demos.by_label
    ]
    sep = " </s> "
    while True:
        rendered = sep.join([prompt.rendered] + demo_parts)
        if len(rendered.split()) <= max_seq_len or not demo_parts:
            return rendered
        demo_parts.pop()


def _predict_probs(
    backend: TeacherBackend,
    spec: TaskSpec,
    rendered_texts: list[str],
) -> np.ndarray:
    """Label probabilities via softmax restricted to the label words."""
    words = [verbalize(spec, label) for label in spec.label_space]
    logits = np.asarray(backend.predict(rendered_texts, words), dtype=np.float64)
    if logits.shape != (len(rendered_texts), len(words)):
        raise ContractError(f"teacher predict returned shape {logits.shape}")
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def evaluate(
    backend: TeacherBackend,
    examples,
    spec: TaskSpec,
    demos: DemonstrationSet,
    max_seq_len: int,
    batch_size: int = 64,
) -> float:
    """Argmax-label-word accuracy; ties resolve to label-space order."""
    examples = list(examples)
    if not examples:
        raise ValidationError("cannot evaluate on an empty set")
    correct = 0
    for start in range(0, len(examples), batch_size):
        batch = examples[start : start + batch_size]
        rendered = [
            render_for_teacher(spec, ex, demos, max_seq_len) for ex in batch
        ]
        probs = _predict_probs(backend, spec, rendered)
        preds = probs.argmax(axis=1)
        for ex, pred in zip(batch, preds):
            if spec.label_space[pred] == ex.label:
                correct += 1
    accuracy = correct / len(examples)
    if math.isnan(accuracy):
        raise ContractError("dev accuracy is NaN")
    return accuracy


def finetune(
    backend: TeacherBackend,
    split: FewShotSplit,
    spec: TaskSpec,
    demos: DemonstrationSet,
    cfg: TeacherTrainConfig,
) -> TeacherModel:
    """Train the backend on the rendered train split and score it on dev.

    Runs at most ``max_steps`` micro-batches of ``batch_size`` examples;
    one parameter update is issued per ``grad_accum_steps`` micro-batches
    (the accumulated texts go out as a single train_batch call).
    """
    rendered = [
        render_for_teacher(spec, ex, demos, cfg.max_seq_len) for ex in split.train
    ]
    golds = [verbalize(spec, ex.label) for ex in split.train]
    n = len(rendered)
    if n == 0:
        raise TrainingError("empty train split")

    rng = random.Random(derive_seed("teacher-shuffle", cfg.seed))
    order: list[int] = []
    buffer_texts: list[str] = []
    buffer_golds: list[str] = []
    micro_steps = 0
    while micro_steps < cfg.max_steps:
        if not order:
            order = list(range(n))
            rng.shuffle(order)
        take = order[: cfg.batch_size]
        order = order[cfg.batch_size :]
        buffer_texts.extend(rendered[i] for i in take)
        buffer_golds.extend(golds[i] for i in take)
        micro_steps += 1
        if micro_steps % cfg.grad_accum_steps == 0:
            backend.train_batch(buffer_texts, buffer_golds, cfg.learning_rate)
            buffer_texts, buffer_golds = [], []
    if buffer_texts:
        backend.train_batch(buffer_texts, buffer_golds, cfg.learning_rate)

    dev_accuracy = evaluate(backend, split.dev, spec, demos, cfg.max_seq_len)
    return TeacherModel(
        backend=backend, dev_accuracy=dev_accuracy, config=cfg, demos=demos
    )


def grid_search(
    backend_factory,
    split: FewShotSplit,
    spec: TaskSpec,
    demos: DemonstrationSet,
    grid: GridSpace,
    base_cfg: TeacherTrainConfig | None = None,
    trace: list | None = None,
) -> TeacherModel:
    """Train one variant per grid point and return the best-on-dev model.

    Ties are broken toward the lower learning rate, then the lower
    gradient-accumulation count. ``trace`` (if given) collects
    ``(learning_rate, grad_accum, dev_accuracy)`` for every variant.
    """
    base = base_cfg or TeacherTrainConfig()
    best: TeacherModel | None = None
    failures: list[str] = []
    for lr, accum in sorted(grid.variants()):
        cfg = replace(base, learning_rate=lr, grad_accum_steps=accum)
        try:
            model = finetune(backend_factory(), split, spec, demos, cfg)
        except Exception as exc:  # noqa: BLE001 - aggregated below
            logger.warning("grid variant lr=%g accum=%d failed: %s", lr, accum, exc)
            failures.append(f"lr={lr} accum={accum}: {exc}")
            continue
        logger.info(
            "grid variant lr=%g accum=%d dev_accuracy=%.4f",
            lr,
            accum,
            model.dev_accuracy,
        )
        if trace is not None:
            trace.append((lr, accum, model.dev_accuracy))
        if best is None or model.dev_accuracy > best.dev_accuracy:
            best = model
    if best is None:
        raise TrainingError(
            "all grid variants failed: " + "; ".join(failures)
        )
    return best


def predict_label_distribution(
    model: TeacherModel, spec: TaskSpec, text
) -> dict[str, float]:
    """Per-label probability at the mask slot, normalized over label words."""
    rendered = render_for_teacher(spec, text, model.demos, model.config.max_seq_len)
    probs = _predict_probs(model.backend, spec, [rendered])[0]
    return {label: float(p) for label, p in zip(spec.label_space, probs)}


def predict_label_distributions(
    model: TeacherModel, spec: TaskSpec, texts: list, batch_size: int = 64
) -> np.ndarray:
    """Batched form of ``predict_label_distribution``; rows follow label order."""
    out = []
    for start in range(0, len(texts), batch_size):
        batch = texts[start : start + batch_size]
        rendered = [
            render_for_teacher(spec, t, model.demos, model.config.max_seq_len)
            for t in batch
        ]
        out.append(_predict_probs(model.backend, spec, rendered))
    return np.concatenate(out) if out else np.zeros((0, len(spec.label_space)))
