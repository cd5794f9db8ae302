"""Few-shot text classification over black-box encoder APIs.

A frozen encoder (reachable only through an inference API) supplies
mask-position hidden states; a small MLP head is trained on max-pooled
features from the last four layers. Training data is enlarged by a
prompt-finetuned teacher that pseudo-labels unlabeled text, filtered at a
confidence threshold and class-balanced before merging with the gold
few-shot split.
"""

from .corpus import (
    FewShotSplit,
    LabeledExample,
    UnlabeledPool,
    build_unlabeled_pool,
    load_dataset,
    sample_few_shot,
)
from .harness import Ablation, RunConfig, RunReport, aggregate, run_all, run_single
from .prompt import TaskSpec, apply_template, default_registry, verbalize

__version__ = "0.1.0"

__all__ = [
    "Ablation",
    "FewShotSplit",
    "LabeledExample",
    "RunConfig",
    "RunReport",
    "TaskSpec",
    "UnlabeledPool",
    "aggregate",
    "apply_template",
    "build_unlabeled_pool",
    "default_registry",
    "load_dataset",
    "run_all",
    "run_single",
    "sample_few_shot",
    "verbalize",
    "__version__",
]
