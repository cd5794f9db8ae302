"""End-to-end run orchestration, multi-seed aggregation, and reporting.

A run executes: sample -> (teach -> pseudolabel, unless the ablation says
otherwise) -> extract -> train -> eval, persisting one artifact per stage
under ``<out>/runs/<config fingerprint>/<seed>/``. Stage functions can be
invoked individually (the CLI maps one subcommand to each) and will read
their inputs back from the run directory, so a failed run resumes from
the last completed stage.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import hashlib
import io
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import classifier as clf
from . import teacher as teacher_mod
from .augment import (
    AugmentedSet,
    BalanceStrategy,
    balance_classes,
    load_augmented,
    merge_train,
    pseudo_label,
    save_augmented,
)
from .backends import (
    EncoderRequest,
    FeatureCache,
    HttpEncoderClient,
    HttpTeacherClient,
    LayerMode,
    MockEncoder,
    MockEncoderConfig,
    MockTeacherBackend,
    MockTeacherConfig,
    Position,
    feature_key,
    pool_features,
)
from .corpus import (
    FewShotSplit,
    LabeledExample,
    build_unlabeled_pool,
    load_dataset,
    sample_few_shot,
)
from .errors import AggregationError, StageError, ValidationError
from .prompt import TaskSpec, apply_template, get_task, sample_demonstrations
from .teacher import GridSpace, TeacherModel, TeacherTrainConfig, grid_search

logger = logging.getLogger(__name__)


class Ablation(enum.Enum):
    FULL = "FULL"
    NO_AUG = "NO_AUG"
    CLS_TOKEN = "CLS_TOKEN"
    LAST_LAYER = "LAST_LAYER"
    TEACHER_ONLY = "TEACHER_ONLY"


#: Default unlabeled-data budgets per shipped task.
DEFAULT_POOL_CAPS = {
    "trec": 4600,
    "agnews": 8900,
    "yelp": 8900,
    "sst2": 4000,
    "mrpc": 3100,
    "qqp": 3000,
    "qnli": 3000,
    "snli": 6000,
}
FALLBACK_POOL_CAP = 4000


@dataclass(frozen=True)
class RunConfig:
    task: str
    train_file: str
    test_file: str
    k: int = 16
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    ablation: Ablation = Ablation.FULL
    threshold: float = 0.9
    pool_cap: int | None = None
    mock: bool = False
    encoder_url: str | None = None
    teacher_url: str | None = None
    mock_encoder: dict = field(default_factory=dict)
    mock_teacher: dict = field(default_factory=dict)
    teacher_cfg: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    classifier: dict = field(default_factory=dict)
    registry_path: str | None = None
    out_dir: str = "bbclf-out"

    def __post_init__(self):
        if not self.seeds:
            raise ValidationError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ValidationError("seeds must be distinct")

    @staticmethod
    def from_dict(data: dict) -> RunConfig:
        data = dict(data)
        if "ablation" in data and not isinstance(data["ablation"], Ablation):
            data["ablation"] = Ablation(str(data["ablation"]).upper())
        if "seeds" in data:
            data["seeds"] = tuple(int(s) for s in data["seeds"])
        known = {f.name for f in dataclasses.fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        return RunConfig(**data)

    @staticmethod
    def from_file(path: str | Path) -> RunConfig:
        with open(path, encoding="utf-8") as fh:
            return RunConfig.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["ablation"] = self.ablation.value
        data["seeds"] = list(self.seeds)
        return data

    def fingerprint(self) -> str:
        payload = self.to_dict()
        payload.pop("out_dir")
        canonical = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def resolved_pool_cap(self) -> int:
        if self.pool_cap is not None:
            return self.pool_cap
        return DEFAULT_POOL_CAPS.get(self.task, FALLBACK_POOL_CAP)

    def teacher_train_config(self, seed: int) -> TeacherTrainConfig:
        return TeacherTrainConfig(**{**self.teacher_cfg, "seed": seed})

    def grid_space(self) -> GridSpace:
        if self.grid:
            return GridSpace(
                learning_rates=tuple(self.grid.get("learning_rates", (1e-5, 2e-5))),
                grad_accum=tuple(self.grid.get("grad_accum", (1, 2))),
            )
        if self.mock:
            # The paper-scale finetuning rates barely move the mock teacher's
            # bag-of-token weights; mock runs default to rates that converge.
            return GridSpace(learning_rates=(0.5, 1.0), grad_accum=(1, 2))
        return GridSpace()


@dataclass
class RunReport:
    task: str
    ablation: str
    per_seed: dict[int, float]
    mean: float
    std: float
    fingerprint: str


class RunContext:
    """Per-(config, seed) paths, backends, and lazily loaded inputs."""

    def __init__(self, cfg: RunConfig, seed: int):
        self.cfg = cfg
        self.seed = seed
        self.run_dir = Path(cfg.out_dir) / "runs" / cfg.fingerprint() / str(seed)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self._spec: TaskSpec | None = None
        self._train_data: list[LabeledExample] | None = None
        self._test_data: list[LabeledExample] | None = None
        self._encoder = None
        self._encoder_meta: dict | None = None
        self._cache: FeatureCache | None = None

    # --- paths -----------------------------------------------------------
    def path(self, name: str) -> Path:
        return self.run_dir / name

    # --- inputs ----------------------------------------------------------
    @property
    def spec(self) -> TaskSpec:
        if self._spec is None:
            self._spec = get_task(self.cfg.task, self.cfg.registry_path)
        return self._spec

    @property
    def train_data(self) -> list[LabeledExample]:
        if self._train_data is None:
            self._train_data = load_dataset(self.cfg.train_file, self.spec)
        return self._train_data

    @property
    def test_data(self) -> list[LabeledExample]:
        if self._test_data is None:
            self._test_data = load_dataset(self.cfg.test_file, self.spec)
        return self._test_data

    # --- backends --------------------------------------------------------
    @property
    def encoder(self):
        if self._encoder is None:
            url = os.environ.get("ENCODER_URL") or self.cfg.encoder_url
            if self.cfg.mock or not url:
                mock_cfg = MockEncoderConfig(**self.cfg.mock_encoder)
                encoder = MockEncoder(mock_cfg)
                if mock_cfg.mode == "planted":
                    for ex in self.train_data + self.test_data:
                        rendered = apply_template(self.spec, ex).rendered
                        encoder.register_oracle(rendered, ex.label)
                self._encoder = encoder
            else:
                self._encoder = HttpEncoderClient(url)
        return self._encoder

    def teacher_backend_factory(self):
        url = os.environ.get("TEACHER_URL") or self.cfg.teacher_url
        if self.cfg.mock or not url:
            mock_cfg = MockTeacherConfig(
                **{
                    **self.cfg.mock_teacher,
                    "artifact_dir": str(self.path("teacher_artifacts")),
                }
            )
            return lambda: MockTeacherBackend(mock_cfg)
        return lambda: HttpTeacherClient(url)

    @property
    def feature_cache(self) -> FeatureCache:
        if self._cache is None:
            self._cache = FeatureCache(self.path("features.cache"))
        return self._cache

    # --- shared derivations ------------------------------------------------
    def demonstrations(self, split: FewShotSplit):
        return sample_demonstrations(split, self.spec, self.seed)

    def position(self) -> Position:
        if self.cfg.ablation is Ablation.CLS_TOKEN:
            return Position.CLS
        return Position.MASK

    def layer_mode(self) -> LayerMode:
        if self.cfg.ablation is Ablation.LAST_LAYER:
            return LayerMode.LAST1
        return LayerMode.LAST4

    def load_split(self) -> FewShotSplit:
        path = self.path("split.jsonl")
        if not path.exists():
            raise FileNotFoundError(f"{path} missing; run the sample stage first")
        train: list[LabeledExample] = []
        dev: list[LabeledExample] = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                record = json.loads(line)
                ex = LabeledExample(
                    text_a=record["text_a"],
                    text_b=record.get("text_b"),
                    label=record["label"],
                )
                (train if record["role"] == "train" else dev).append(ex)
        return FewShotSplit(
            train=tuple(train), dev=tuple(dev), seed=self.seed, k=self.cfg.k
        )

    def load_teacher(self) -> TeacherModel:
        path = self.path("teacher.json")
        if not path.exists():
            raise FileNotFoundError(f"{path} missing; run the teach stage first")
        payload = json.loads(path.read_text(encoding="utf-8"))
        backend = self.teacher_backend_factory()()
        backend.load(payload["artifact_ref"])
        split = self.load_split()
        return TeacherModel(
            backend=backend,
            dev_accuracy=payload["dev_accuracy"],
            config=TeacherTrainConfig(**payload["config"]),
            demos=self.demonstrations(split),
            artifact_ref=payload["artifact_ref"],
        )

    def features_for(self, contents: list[tuple[str, str | None]]) -> np.ndarray:
        """Pooled feature matrix for raw (text_a, text_b) contents.

        Rendered with the bare template (no demonstrations). Cache hits are
        served from disk; misses go to the encoder and are written back.
        """
        position = self.position()
        mode = self.layer_mode()
        cache = self.feature_cache
        if self._encoder_meta is None:
            self._encoder_meta = self.encoder.meta()
        meta = self._encoder_meta
        model_id = str(meta["model_id"])
        rows = []
        for content in contents:
            rendered = apply_template(self.spec, content).rendered
            key = feature_key(rendered, position, mode, model_id)
            vec = cache.get(key)
            if vec is None:
                states = self.encoder.encode(
                    EncoderRequest(
                        rendered_text=rendered, position=position, layer_mode=mode
                    )
                )
                vec = pool_features(states, position).values
                cache.put(key, vec)
            rows.append(vec)
        return np.stack(rows) if rows else np.zeros((0, int(meta["d"])))

    def mlp_config(self, input_dim: int) -> clf.MLPConfig:
        overrides = dict(self.cfg.classifier)
        return clf.MLPConfig(
            input_dim=input_dim,
            num_classes=len(self.spec.label_space),
            seed=self.seed,
            **overrides,
        )


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(
        json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def write_manifest(ctx: RunContext) -> dict:
    """Config-derived stage parameters, used for ablation-isolation diffs."""
    cfg = ctx.cfg
    augment_on = cfg.ablation in (Ablation.FULL, Ablation.CLS_TOKEN, Ablation.LAST_LAYER)
    manifest = {
        "task": cfg.task,
        "k": cfg.k,
        "seed": ctx.seed,
        "ablation": cfg.ablation.value,
        "augmentation": {
            "enabled": augment_on,
            "threshold": cfg.threshold,
            "strategy": BalanceStrategy.MIN_CAP.value,
            "pool_cap": cfg.resolved_pool_cap(),
            "grid": {
                "learning_rates": list(cfg.grid_space().learning_rates),
                "grad_accum": list(cfg.grid_space().grad_accum),
            },
        },
        "features": {
            "position": ctx.position().value,
            "layer_mode": ctx.layer_mode().value,
        },
        "classifier": {
            "enabled": cfg.ablation is not Ablation.TEACHER_ONLY,
            "overrides": dict(cfg.classifier),
        },
    }
    _write_json(ctx.path("manifest.json"), manifest)
    return manifest


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def do_sample(ctx: RunContext) -> FewShotSplit:
    split = sample_few_shot(ctx.train_data, ctx.cfg.k, ctx.seed)
    with open(ctx.path("split.jsonl"), "w", encoding="utf-8") as fh:
        for role, examples in (("train", split.train), ("dev", split.dev)):
            for ex in examples:
                record = {
                    "role": role,
                    "text_a": ex.text_a,
                    "text_b": ex.text_b,
                    "label": ex.label,
                }
                fh.write(json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n")
    write_manifest(ctx)
    return split


def do_teach(ctx: RunContext, split: FewShotSplit | None = None) -> TeacherModel:
    split = split or ctx.load_split()
    demos = ctx.demonstrations(split)
    trace: list = []
    model = grid_search(
        ctx.teacher_backend_factory(),
        split,
        ctx.spec,
        demos,
        ctx.cfg.grid_space(),
        base_cfg=ctx.cfg.teacher_train_config(ctx.seed),
        trace=trace,
    )
    artifact_ref = f"teacher-seed{ctx.seed}"
    model.backend.save(artifact_ref)
    model.artifact_ref = artifact_ref
    _write_json(
        ctx.path("teacher.json"),
        {
            "dev_accuracy": model.dev_accuracy,
            "config": dataclasses.asdict(model.config),
            "artifact_ref": artifact_ref,
            "variants": [
                {"learning_rate": lr, "grad_accum": ga, "dev_accuracy": acc}
                for lr, ga, acc in trace
            ],
        },
    )
    return model


def do_pseudolabel(
    ctx: RunContext,
    teacher: TeacherModel | None = None,
    split: FewShotSplit | None = None,
) -> AugmentedSet:
    split = split or ctx.load_split()
    teacher = teacher or ctx.load_teacher()
    pool = build_unlabeled_pool(ctx.train_data, split, ctx.cfg.resolved_pool_cap())
    retained = pseudo_label(teacher, pool, ctx.spec, ctx.cfg.threshold)
    aug = balance_classes(
        retained,
        BalanceStrategy.MIN_CAP,
        seed=ctx.seed,
        threshold=ctx.cfg.threshold,
        label_space=ctx.spec.label_space,
    )
    save_augmented(ctx.path("aug.jsonl"), aug)
    _write_json(
        ctx.path("aug_manifest.json"),
        {
            "threshold": ctx.cfg.threshold,
            "strategy": BalanceStrategy.MIN_CAP.value,
            "seed": ctx.seed,
            "pool_size": len(pool.texts),
            "retained_before_balance": len(retained),
            "per_class_counts": aug.per_class_counts,
        },
    )
    return aug


def _merged_items(ctx: RunContext, split: FewShotSplit, aug: AugmentedSet | None):
    if aug is None:
        aug = AugmentedSet(examples=(), per_class_counts={}, threshold=ctx.cfg.threshold)
    return merge_train(aug, split)


def do_extract(
    ctx: RunContext,
    split: FewShotSplit | None = None,
    aug: AugmentedSet | None = None,
) -> int:
    """Warm the feature cache for every text the train/eval stages will use."""
    if ctx.cfg.ablation is Ablation.TEACHER_ONLY:
        raise ValidationError("extract stage does not apply to TEACHER_ONLY runs")
    split = split or ctx.load_split()
    if aug is None and _augmentation_enabled(ctx.cfg):
        aug = load_augmented(ctx.path("aug.jsonl"), ctx.cfg.threshold)
    merged = _merged_items(ctx, split, aug)
    contents = [(ex.text_a, ex.text_b) for ex, _, _ in merged]
    contents += [(ex.text_a, ex.text_b) for ex in split.dev]
    contents += [(ex.text_a, ex.text_b) for ex in ctx.test_data]
    ctx.features_for(contents)
    return len(ctx.feature_cache)


def do_train(
    ctx: RunContext,
    split: FewShotSplit | None = None,
    aug: AugmentedSet | None = None,
) -> clf.MLPModel:
    if ctx.cfg.ablation is Ablation.TEACHER_ONLY:
        raise ValidationError("train stage does not apply to TEACHER_ONLY runs")
    split = split or ctx.load_split()
    if aug is None and _augmentation_enabled(ctx.cfg):
        aug = load_augmented(ctx.path("aug.jsonl"), ctx.cfg.threshold)
    merged = _merged_items(ctx, split, aug)
    label_index = {label: i for i, label in enumerate(ctx.spec.label_space)}

    x_train = ctx.features_for([(ex.text_a, ex.text_b) for ex, _, _ in merged])
    y_train = np.array([label_index[label] for _, label, _ in merged])
    x_dev = ctx.features_for([(ex.text_a, ex.text_b) for ex in split.dev])
    y_dev = np.array([label_index[ex.label] for ex in split.dev])

    cfg = ctx.mlp_config(input_dim=x_train.shape[1])
    if cfg.normalize_features:
        x_train, x_dev = clf.standardize(x_train, x_dev)
    model = clf.init_model(cfg)
    best, history = clf.train(model, (x_train, y_train), (x_dev, y_dev), cfg)
    clf.save_model(best, cfg, ctx.path("mlp.model"))
    _write_json(ctx.path("history.json"), dataclasses.asdict(history))
    return best


def do_eval(ctx: RunContext, model: clf.MLPModel | None = None) -> float:
    if ctx.cfg.ablation is Ablation.TEACHER_ONLY:
        teacher = ctx.load_teacher()
        acc = teacher_mod.evaluate(
            teacher.backend,
            ctx.test_data,
            ctx.spec,
            teacher.demos,
            teacher.config.max_seq_len,
        )
    else:
        if model is None:
            model, _ = clf.load_model(ctx.path("mlp.model"))
        x_test = ctx.features_for([(ex.text_a, ex.text_b) for ex in ctx.test_data])
        if ctx.cfg.classifier.get("normalize_features"):
            # Refit the standardizer on the training matrix so test features
            # see the same transform the model was trained under.
            split = ctx.load_split()
            aug = (
                load_augmented(ctx.path("aug.jsonl"), ctx.cfg.threshold)
                if _augmentation_enabled(ctx.cfg)
                else None
            )
            merged = _merged_items(ctx, split, aug)
            x_train = ctx.features_for([(ex.text_a, ex.text_b) for ex, _, _ in merged])
            _, x_test = clf.standardize(x_train, x_test)
        label_index = {label: i for i, label in enumerate(ctx.spec.label_space)}
        y_test = np.array([label_index[ex.label] for ex in ctx.test_data])
        acc = clf.accuracy(model, x_test, y_test)
    _write_json(
        ctx.path("result.json"),
        {
            "task": ctx.cfg.task,
            "ablation": ctx.cfg.ablation.value,
            "seed": ctx.seed,
            "fingerprint": ctx.cfg.fingerprint(),
            "n_test": len(ctx.test_data),
            "accuracy": acc,
        },
    )
    return acc


def _augmentation_enabled(cfg: RunConfig) -> bool:
    return cfg.ablation in (Ablation.FULL, Ablation.CLS_TOKEN, Ablation.LAST_LAYER)


def run_single(cfg: RunConfig, seed: int) -> float:
    """Execute every stage for one seed; returns the test accuracy.

    Any stage failure aborts the run with the stage name; artifacts from
    completed stages stay on disk for resumption via the per-stage CLI.
    """
    ctx = RunContext(cfg, seed)

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:
            raise StageError(name, exc) from exc

    split = stage("sample", do_sample, ctx)
    if cfg.ablation is Ablation.TEACHER_ONLY:
        stage("teach", do_teach, ctx, split)
        return stage("eval", do_eval, ctx)

    aug: AugmentedSet | None = None
    if _augmentation_enabled(cfg):
        teacher = stage("teach", do_teach, ctx, split)
        aug = stage("pseudolabel", do_pseudolabel, ctx, teacher, split)
    stage("extract", do_extract, ctx, split, aug)
    model = stage("train", do_train, ctx, split, aug)
    return stage("eval", do_eval, ctx, model)


# ---------------------------------------------------------------------------
# aggregation and reports
# ---------------------------------------------------------------------------


def aggregate(accuracies: list[float]) -> tuple[float, float]:
    """Arithmetic mean and population standard deviation."""
    if not accuracies:
        raise AggregationError("cannot aggregate an empty accuracy list")
    arr = np.asarray(accuracies, dtype=np.float64)
    return float(arr.mean()), float(arr.std(ddof=0))


def aggregate_runs(cfg: RunConfig) -> RunReport:
    """Collect per-seed results; a missing seed fails rather than averaging."""
    fingerprint = cfg.fingerprint()
    per_seed: dict[int, float] = {}
    for seed in cfg.seeds:
        path = Path(cfg.out_dir) / "runs" / fingerprint / str(seed) / "result.json"
        if not path.exists():
            raise AggregationError(
                f"missing result for seed {seed} (expected {path})"
            )
        record = json.loads(path.read_text(encoding="utf-8"))
        per_seed[seed] = float(record["accuracy"])
    mean, std = aggregate(list(per_seed.values()))
    return RunReport(
        task=cfg.task,
        ablation=cfg.ablation.value,
        per_seed=per_seed,
        mean=mean,
        std=std,
        fingerprint=fingerprint,
    )


class ReportFormat(enum.Enum):
    CSV = "csv"
    MARKDOWN = "markdown"


def format_cell(mean: float, std: float) -> str:
    """Accuracy cell as percent with the std in brackets, e.g. ``88.8 (2.1)``."""
    return f"{mean * 100:.1f} ({std * 100:.1f})"


def emit_report(
    reports: list[RunReport],
    fmt: ReportFormat = ReportFormat.MARKDOWN,
    path: str | Path | None = None,
) -> str:
    """Render one row per (task, ablation); writes to `path` when given."""
    if not reports:
        raise ValidationError("emit_report needs at least one report")
    rows = sorted(reports, key=lambda r: (r.task, r.ablation))
    if fmt is ReportFormat.CSV:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["task", "ablation", "seeds", "mean", "std", "accuracy"])
        for r in rows:
            writer.writerow(
                [
                    r.task,
                    r.ablation,
                    len(r.per_seed),
                    f"{r.mean:.6f}",
                    f"{r.std:.6f}",
                    format_cell(r.mean, r.std),
                ]
            )
        text = buf.getvalue()
    else:
        lines = [
            "| task | ablation | accuracy |",
            "| --- | --- | --- |",
        ]
        lines.extend(
            f"| {r.task} | {r.ablation} | {format_cell(r.mean, r.std)} |"
            for r in rows
        )
        text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def run_all(cfg: RunConfig) -> RunReport:
    """Run every configured seed, then aggregate and write report files."""
    for seed in cfg.seeds:
        acc = run_single(cfg, seed)
        logger.info("seed %d: accuracy %.4f", seed, acc)
    report = aggregate_runs(cfg)
    base = Path(cfg.out_dir) / "runs" / report.fingerprint
    _write_json(
        base / "aggregate.json",
        {
            "task": report.task,
            "ablation": report.ablation,
            "fingerprint": report.fingerprint,
            "per_seed": {str(s): a for s, a in report.per_seed.items()},
            "mean": report.mean,
            "std": report.std,
        },
    )
    emit_report([report], ReportFormat.MARKDOWN, base / "report.md")
    emit_report([report], ReportFormat.CSV, base / "report.csv")
    return report
