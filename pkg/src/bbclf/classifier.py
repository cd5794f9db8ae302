"""The 2-layer tanh MLP head: init, forward, cross-entropy, training.

Training is mini-batch Adam on the average cross-entropy against one-hot
targets, with dev-accuracy early stopping and best-on-dev checkpointing.
All numerics run through :mod:`bbclf.kernels`.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .corpus import derive_seed
from .errors import ContractError, DivergenceError, ValidationError

logger = logging.getLogger(__name__)

ARTIFACT_VERSION = 1

_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


@dataclass(frozen=True)
class MLPConfig:
    input_dim: int
    num_classes: int
    hidden_dim: int | None = None  # defaults to input_dim
    seed: int = 0
    learning_rate: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 5
    normalize_features: bool = False

    def __post_init__(self):
        if min(self.input_dim, self.batch_size, self.max_epochs, self.patience) < 1:
            raise ValidationError("MLP config counts must be positive")
        if self.hidden_dim is not None and self.hidden_dim < 1:
            raise ValidationError("hidden_dim must be positive")
        if self.num_classes < 2:
            raise ValidationError("num_classes must be >= 2")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")

    @property
    def hidden(self) -> int:
        return self.hidden_dim if self.hidden_dim is not None else self.input_dim


@dataclass
class MLPModel:
    w1: np.ndarray  # (hidden, d)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (classes, hidden)
    b2: np.ndarray  # (classes,)

    @property
    def param_count(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size

    def params(self) -> tuple[np.ndarray, ...]:
        return self.w1, self.b1, self.w2, self.b2

    def copy(self) -> MLPModel:
        return MLPModel(
            self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy()
        )

    def check_finite(self) -> None:
        for p in self.params():
            if not np.all(np.isfinite(p)):
                raise ContractError("model parameters contain non-finite values")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    dev_accuracy: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0


def init_model(cfg: MLPConfig) -> MLPModel:
    """Seeded init: uniform in ±sqrt(1/fan_in) for weights, zero biases."""
    rng = np.random.default_rng(derive_seed("mlp-init", cfg.seed))
    h, d, c = cfg.hidden, cfg.input_dim, cfg.num_classes
    s1 = (1.0 / d) ** 0.5
    s2 = (1.0 / h) ** 0.5
    return MLPModel(
        w1=rng.uniform(-s1, s1, size=(h, d)),
        b1=np.zeros(h),
        w2=rng.uniform(-s2, s2, size=(c, h)),
        b2=np.zeros(c),
    )


def forward(model: MLPModel, features: np.ndarray) -> np.ndarray:
    """softmax(W2 tanh(W1 x + b1) + b2); accepts one vector or a batch."""
    x = np.ascontiguousarray(np.atleast_2d(np.asarray(features, dtype=np.float64)))
    if x.shape[1] != model.w1.shape[1]:
        raise ContractError(
            f"feature dimension {x.shape[1]} != model input {model.w1.shape[1]}"
        )
    probs = kernels.forward_probs(x, *model.params())
    return probs[0] if np.asarray(features).ndim == 1 else probs


def ce_loss(probabilities: np.ndarray, one_hot: np.ndarray) -> float:
    """Mean negative log probability of the gold class.

    Zero gold probabilities are clamped at 1e-12 (with a warning) so the
    loss stays finite.
    """
    p = np.atleast_2d(np.asarray(probabilities, dtype=np.float64))
    y = np.atleast_2d(np.asarray(one_hot, dtype=np.float64))
    if p.shape != y.shape or p.shape[0] == 0:
        raise ValidationError("probabilities and labels must be equal, non-empty")
    gold = (p * y).sum(axis=1)
    if np.any(gold <= 0.0):
        logger.warning("gold-label probability of 0 clamped to 1e-12")
    return float(-np.mean(np.log(np.maximum(gold, 1e-12))))


def loss_and_grads(model: MLPModel, x: np.ndarray, y_onehot: np.ndarray):
    """Batch loss plus analytic gradients for every parameter tensor."""
    x = np.ascontiguousarray(np.asarray(x, dtype=np.float64))
    y = np.ascontiguousarray(np.asarray(y_onehot, dtype=np.float64))
    return kernels.loss_and_grads(x, y, *model.params())


def one_hot(labels: np.ndarray, num_classes: int) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    out = np.zeros((labels.shape[0], num_classes))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def accuracy(model: MLPModel, x: np.ndarray, labels: np.ndarray) -> float:
    probs = forward(model, np.atleast_2d(x))
    return float(np.mean(probs.argmax(axis=1) == np.asarray(labels)))


def predict(model: MLPModel, feature: np.ndarray) -> int:
    """Argmax class index; exact ties go to the lowest index."""
    probs = forward(model, feature)
    return int(np.argmax(probs))


def standardize(train_x: np.ndarray, *others: np.ndarray):
    """Per-coordinate standardization fit on the train matrix."""
    mu = train_x.mean(axis=0)
    sigma = train_x.std(axis=0)
    sigma = np.where(sigma < 1e-12, 1.0, sigma)
    scaled = [(train_x - mu) / sigma]
    scaled.extend((o - mu) / sigma for o in others)
    return scaled if others else scaled[0]


def train(
    model: MLPModel,
    train_set: tuple[np.ndarray, np.ndarray],
    dev_set: tuple[np.ndarray, np.ndarray],
    cfg: MLPConfig,
    dev_eval_fn=None,
) -> tuple[MLPModel, TrainHistory]:
    """Mini-batch Adam with early stopping on dev accuracy.

    Dev accuracy is measured at the end of each epoch; training stops when
    it has not exceeded the best seen for ``patience`` consecutive epochs,
    and the parameters from the best epoch (earliest on ties) are
    returned. ``dev_eval_fn(model, epoch) -> float`` replaces the default
    dev evaluation when given.

    Epochs are 1-indexed in the returned history.
    """
    x_train, y_train = train_set
    x_dev, y_dev = dev_set
    x_train = np.ascontiguousarray(np.asarray(x_train, dtype=np.float64))
    x_dev = np.ascontiguousarray(np.asarray(x_dev, dtype=np.float64))
    if x_train.shape[0] == 0 or x_dev.shape[0] == 0:
        raise ValidationError("train and dev sets must be non-empty")
    if x_train.shape[1] != cfg.input_dim:
        raise ContractError(
            f"train features have dim {x_train.shape[1]}, config says {cfg.input_dim}"
        )
    y_onehot = one_hot(y_train, cfg.num_classes)

    current = model.copy()
    adam_m = [np.zeros_like(p) for p in current.params()]
    adam_v = [np.zeros_like(p) for p in current.params()]
    t = 0
    rng = np.random.default_rng(derive_seed("mlp-shuffle", cfg.seed))

    history = TrainHistory()
    best = current.copy()
    best_acc = -1.0
    epochs_since_best = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(x_train.shape[0])
        batch_losses = []
        for start in range(0, order.shape[0], cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss, *grads = kernels.loss_and_grads(
                np.ascontiguousarray(x_train[idx]),
                np.ascontiguousarray(y_onehot[idx]),
                *current.params(),
            )
            if not np.isfinite(loss):
                raise DivergenceError(epoch, cfg.learning_rate)
            t += 1
            for p, g, m, v in zip(current.params(), grads, adam_m, adam_v):
                kernels.adam_step(
                    p, g, m, v, t, cfg.learning_rate, _ADAM_BETA1, _ADAM_BETA2,
                    _ADAM_EPS,
                )
            batch_losses.append(loss)
        train_loss = float(np.mean(batch_losses))
        if dev_eval_fn is not None:
            dev_acc = float(dev_eval_fn(current, epoch))
        else:
            dev_acc = accuracy(current, x_dev, y_dev)
        history.train_loss.append(train_loss)
        history.dev_accuracy.append(dev_acc)
        if dev_acc > best_acc:
            best_acc = dev_acc
            best = current.copy()
            history.best_epoch = epoch
            epochs_since_best = 0
        else:
            epochs_since_best += 1
        if epochs_since_best >= cfg.patience:
            break

    history.stopped_epoch = len(history.dev_accuracy)
    best.check_finite()
    return best, history


def save_model(model: MLPModel, cfg: MLPConfig, path: str | Path) -> None:
    """Versioned JSON artifact: config + flat parameter arrays + checksum."""
    params = {
        "w1": model.w1.ravel().tolist(),
        "b1": model.b1.tolist(),
        "w2": model.w2.ravel().tolist(),
        "b2": model.b2.tolist(),
    }
    checksum = hashlib.sha256(
        json.dumps(params, sort_keys=True).encode("utf-8")
    ).hexdigest()
    payload = {
        "format_version": ARTIFACT_VERSION,
        "config": asdict(cfg),
        "shapes": {
            "w1": list(model.w1.shape),
            "w2": list(model.w2.shape),
        },
        "params": params,
        "checksum": checksum,
    }
    Path(path).write_text(
        json.dumps(payload, sort_keys=True), encoding="utf-8"
    )


def load_model(path: str | Path) -> tuple[MLPModel, MLPConfig]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format_version") != ARTIFACT_VERSION:
        raise ValidationError(
            f"unsupported model artifact version {payload.get('format_version')}"
        )
    checksum = hashlib.sha256(
        json.dumps(payload["params"], sort_keys=True).encode("utf-8")
    ).hexdigest()
    if checksum != payload["checksum"]:
        raise ValidationError("model artifact checksum mismatch")
    cfg = MLPConfig(**payload["config"])
    shapes = payload["shapes"]
    model = MLPModel(
        w1=np.asarray(payload["params"]["w1"]).reshape(shapes["w1"]),
        b1=np.asarray(payload["params"]["b1"]),
        w2=np.asarray(payload["params"]["w2"]).reshape(shapes["w2"]),
        b2=np.asarray(payload["params"]["b2"]),
    )
    expected = (
        cfg.hidden * cfg.input_dim
        + cfg.hidden
        + cfg.num_classes * cfg.hidden
        + cfg.num_classes
    )
    if model.param_count != expected:
        raise ValidationError(
            f"artifact has {model.param_count} parameters, config implies {expected}"
        )
    model.check_finite()
    return model, cfg
