"""Toy corpus generators for desk-scale runs and the test suite.

Texts are built from disjoint per-class token lexicons plus shared filler
tokens, so a bag-of-tokens model can separate the classes and planted-mode
encoder runs have an unambiguous oracle label per text.
"""

from __future__ import annotations

import random
from pathlib import Path

from .corpus import LabeledExample, save_examples, derive_seed
from .prompt import TaskSpec


def make_toy_task(
    name: str = "toy-sentiment",
    labels: tuple[str, ...] = ("negative", "positive"),
    words: dict[str, str] | None = None,
) -> TaskSpec:
    """Single-segment cloze task usable with generated toy examples."""
    if words is None:
        defaults = ["bad", "great", "okay", "odd", "rare", "new"]
        words = {label: defaults[i] for i, label in enumerate(labels)}
    return TaskSpec(
        name=name,
        label_space=labels,
        template="<X> . It was [MASK] .",
        verbalizer=words,
        is_pair=False,
    )


def class_lexicon(label_index: int, size: int = 12) -> list[str]:
    return [f"w{label_index}x{i}" for i in range(size)]


FILLER = [f"filler{i}" for i in range(20)]


def make_toy_examples(
    labels: tuple[str, ...],
    n_per_class: int,
    seed: int = 0,
    tokens_per_text: int = 5,
) -> list[LabeledExample]:
    """Unique texts whose tokens identify their class."""
    rng = random.Random(derive_seed("toy-data", seed, ",".join(labels), n_per_class))
    seen: set[str] = set()
    examples: list[LabeledExample] = []
    for li, label in enumerate(labels):
        lexicon = class_lexicon(li)
        made = 0
        while made < n_per_class:
            tokens = rng.sample(lexicon, tokens_per_text) + rng.sample(FILLER, 2)
            rng.shuffle(tokens)
            text = " ".join(tokens)
            if text in seen:
                continue
            seen.add(text)
            examples.append(LabeledExample(text_a=text, text_b=None, label=label))
            made += 1
    return examples


def write_toy_dataset(
    path: str | Path,
    labels: tuple[str, ...],
    n_per_class: int,
    seed: int = 0,
) -> list[LabeledExample]:
    examples = make_toy_examples(labels, n_per_class, seed)
    save_examples(path, examples)
    return examples
