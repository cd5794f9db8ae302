"""Cloze templating, label verbalization, and per-label demonstrations.

A task template embeds the raw text into a pattern with exactly one
``[MASK]`` slot (``<X>`` for single-segment tasks, ``<X1>``/``<X2>`` for
pairs). Demonstrations are templated train examples whose mask slot is
filled with the verbalized label; they are appended only on the teacher
path, never for feature extraction.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .corpus import FewShotSplit, LabeledExample, derive_seed, example_key
from .errors import InsufficientDataError, StateError, TemplateError, ValidationError

MASK = "[MASK]"

#: Joined between the templated input and each appended demonstration.
#: A single space plus the backend's sequence-separator token.
DEFAULT_DEMO_SEPARATOR = " </s> "


@dataclass(frozen=True)
class TaskSpec:
    """Label space, template, and verbalizer for one classification task.

    ``label_space`` ordering is fixed and used for all argmax tie-breaking
    downstream.
    """

    name: str
    label_space: tuple[str, ...]
    template: str
    verbalizer: dict[str, str]
    is_pair: bool

    def __post_init__(self):
        if len(self.label_space) < 2:
            raise ValidationError(f"task '{self.name}': need at least 2 labels")
        if self.template.count(MASK) != 1:
            raise ValidationError(
                f"task '{self.name}': template must contain exactly one {MASK}"
            )
        missing = [l for l in self.label_space if l not in self.verbalizer]
        if missing:
            raise ValidationError(
                f"task '{self.name}': verbalizer missing labels {missing}"
            )
        words = [self.verbalizer[l] for l in self.label_space]
        if len(set(words)) != len(words):
            raise ValidationError(f"task '{self.name}': verbalizer is not injective")
        if self.is_pair:
            if "<X1>" not in self.template or "<X2>" not in self.template:
                raise ValidationError(
                    f"task '{self.name}': pair template needs <X1> and <X2>"
                )
        elif "<X>" not in self.template:
            raise ValidationError(f"task '{self.name}': template needs <X>")

    def label_for_word(self, word: str) -> str:
        for label in self.label_space:
            if self.verbalizer[label] == word:
                return label
        raise ValidationError(f"no label maps to word '{word}'")


@dataclass(frozen=True)
class PromptText:
    """A rendered cloze input with exactly one unresolved mask slot."""

    rendered: str
    mask_slot_index: int
    demonstrations_appended: bool = False


@dataclass(frozen=True)
class DemonstrationSet:
    """One train example per label, fixed per run."""

    by_label: dict[str, LabeledExample] = field(default_factory=dict)
    seed: int = 0


def _segments(example) -> tuple[str, str | None]:
    if isinstance(example, LabeledExample):
        return example.text_a, example.text_b
    if isinstance(example, str):
        return example, None
    text_a, text_b = example
    return text_a, text_b


def apply_template(spec: TaskSpec, example) -> PromptText:
    """Embed an example (or bare text) into the task's cloze pattern.

    Accepts a LabeledExample, a plain string, or a (text_a, text_b) tuple.
    Placeholders are replaced verbatim.
    """
    text_a, text_b = _segments(example)
    if spec.is_pair and text_b is None:
        raise TemplateError(f"task '{spec.name}' expects two segments")
    if not spec.is_pair and text_b is not None:
        raise TemplateError(f"task '{spec.name}' expects a single segment")
    for segment in (text_a, text_b):
        if segment and MASK in segment:
            raise TemplateError(f"input segment may not contain {MASK}")
    if spec.is_pair:
        rendered = spec.template.replace("<X1>", text_a).replace("<X2>", text_b)
    else:
        rendered = spec.template.replace("<X>", text_a)
    return PromptText(rendered=rendered, mask_slot_index=rendered.index(MASK))


def verbalize(spec: TaskSpec, label: str) -> str:
    """Map a label to its mask-slot word."""
    if label not in spec.label_space:
        raise ValidationError(f"unknown label '{label}' for task '{spec.name}'")
    return spec.verbalizer[label]


def sample_demonstrations(
    split: FewShotSplit, spec: TaskSpec, seed: int
) -> DemonstrationSet:
    """Pick one train example per label, deterministically from the seed."""
    by_label: dict[str, LabeledExample] = {}
    for label in spec.label_space:
        candidates = sorted(
            (ex for ex in split.train if ex.label == label), key=example_key
        )
        if not candidates:
            raise InsufficientDataError(
                f"train split has no example for label '{label}'"
            )
        rng = random.Random(derive_seed("demo", seed, label))
        by_label[label] = candidates[rng.randrange(len(candidates))]
    return DemonstrationSet(by_label=by_label, seed=seed)


def render_demonstration(spec: TaskSpec, demo: LabeledExample) -> str:
    """Template a demonstration and fill its mask slot with the label word."""
    templated = apply_template(spec, demo)
    return templated.rendered.replace(MASK, verbalize(spec, demo.label), 1)


def append_demonstrations(
    prompt: PromptText,
    demos: DemonstrationSet,
    spec: TaskSpec,
    separator: str = DEFAULT_DEMO_SEPARATOR,
) -> PromptText:
    """Append one filled-in demonstration per label, in label-space order.

    The original mask slot stays unresolved; demonstrations carry label
    words instead of masks.
    """
    if prompt.demonstrations_appended:
        raise StateError("demonstrations already appended to this prompt")
    parts = [prompt.rendered]
    for label in spec.label_space:
        if label not in demos.by_label:
            raise InsufficientDataError(f"demonstration set missing label '{label}'")
        parts.append(render_demonstration(spec, demos.by_label[label]))
    rendered = separator.join(parts)
    if rendered.count(MASK) != 1:
        raise TemplateError("rendered prompt must keep exactly one mask slot")
    return PromptText(
        rendered=rendered,
        mask_slot_index=prompt.mask_slot_index,
        demonstrations_appended=True,
    )


def _registry_from_mapping(raw: dict) -> dict[str, TaskSpec]:
    registry = {}
    for name, entry in raw.items():
        registry[name] = TaskSpec(
            name=name,
            label_space=tuple(entry["label_space"]),
            template=entry["template"],
            verbalizer=dict(entry["verbalizer"]),
            is_pair=bool(entry["is_pair"]),
        )
    return registry


def load_registry(path: str | Path) -> dict[str, TaskSpec]:
    """Load a task registry file: JSON map of task name -> spec fields."""
    with open(path, encoding="utf-8") as fh:
        return _registry_from_mapping(json.load(fh))


def default_registry() -> dict[str, TaskSpec]:
    """The eight shipped task specs."""
    raw = json.loads(
        resources.files("bbclf").joinpath("data/tasks.json").read_text("utf-8")
    )
    return _registry_from_mapping(raw)


def get_task(name: str, registry_path: str | Path | None = None) -> TaskSpec:
    registry = load_registry(registry_path) if registry_path else default_registry()
    if name not in registry:
        raise ValidationError(
            f"unknown task '{name}'; known: {', '.join(sorted(registry))}"
        )
    return registry[name]
