"""Deterministic in-process backends for desk-scale runs and tests.

The mock encoder hashes request content into reproducible pseudo-random
hidden states. In "planted" mode it instead emits, for texts registered
in its oracle, the true label's unit direction plus seeded noise, so a
linear probe on the pooled features is learnable by construction.

The mock teacher is a multinomial linear model over hashed bag-of-token
features, trained by full-batch gradient descent per ``train_batch`` call.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..corpus import derive_seed
from ..errors import ContractError, ValidationError
from .types import (
    EncoderRequest,
    LayerHiddenStates,
    LayerMode,
    layer_count,
)


def _rng(*parts) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))


@dataclass
class MockEncoderConfig:
    d: int = 16
    mode: str = "hash"  # "hash" | "planted"
    noise_scale: float = 0.1
    model_id: str = "mock-encoder"
    num_layers: int = 12
    direction_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("hash", "planted"):
            raise ValidationError(f"unknown mock encoder mode '{self.mode}'")
        if self.d < 1:
            raise ValidationError("d must be positive")


def label_direction(config: MockEncoderConfig, label: str) -> np.ndarray:
    """Deterministic unit direction for a label in planted mode."""
    v = _rng("planted-direction", config.direction_seed, config.d, label).standard_normal(
        config.d
    )
    return v / np.linalg.norm(v)


class MockEncoder:
    """In-process encoder test double; deterministic function of (text, config)."""

    def __init__(self, config: MockEncoderConfig | None = None):
        self.config = config or MockEncoderConfig()
        # planted-mode oracle: rendered text -> true label. Test/run plumbing
        # only; the pipeline itself never reads labels from here.
        self.oracle: dict[str, str] = {}

    def register_oracle(self, rendered_text: str, label: str) -> None:
        self.oracle[rendered_text] = label

    def meta(self) -> dict:
        return {
            "d": self.config.d,
            "num_layers": self.config.num_layers,
            "model_id": self.config.model_id,
        }

    def encode(self, request: EncoderRequest) -> LayerHiddenStates:
        cfg = self.config
        n_layers = layer_count(request.layer_mode)
        if cfg.mode == "planted":
            label = self.oracle.get(request.rendered_text)
            if label is None:
                raise ValidationError(
                    "planted mock has no oracle entry for this text"
                )
            base = label_direction(cfg, label)
            noise_rng = _rng(
                "planted-noise",
                cfg.direction_seed,
                request.rendered_text,
                request.position.value,
                request.layer_mode.value,
                cfg.model_id,
            )
            vec = base + cfg.noise_scale * noise_rng.standard_normal(cfg.d)
            vectors = np.tile(vec, (n_layers, 1))
        else:
            rows = []
            for layer in range(n_layers):
                rng = _rng(
                    "hash-layer",
                    cfg.model_id,
                    request.position.value,
                    request.layer_mode.value,
                    layer,
                    request.rendered_text,
                )
                rows.append(rng.standard_normal(cfg.d))
            vectors = np.stack(rows)
        states = LayerHiddenStates(vectors=vectors, d=cfg.d, model_id=cfg.model_id)
        states.check_mode(request.layer_mode)
        return states


def _token_index(token: str, dim: int) -> int:
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") % dim


@dataclass
class MockTeacherConfig:
    feature_dim: int = 2048
    artifact_dir: str | None = None


class MockTeacherBackend:
    """Trainable multinomial linear model over hashed bag-of-token features.

    Weights start at zero, so an untrained backend scores every word
    equally. ``update_count`` tracks parameter updates (one per
    ``train_batch`` call) for effective-batch-size checks.
    """

    def __init__(self, config: MockTeacherConfig | None = None):
        self.config = config or MockTeacherConfig()
        self.weights: dict[str, np.ndarray] = {}
        self.update_count = 0
        self.texts_seen = 0

    def _features(self, text: str) -> np.ndarray:
        x = np.zeros(self.config.feature_dim)
        for token in text.lower().split():
            x[_token_index(token, self.config.feature_dim)] += 1.0
        return x

    def _ensure_words(self, words) -> list[str]:
        for word in words:
            if word not in self.weights:
                self.weights[word] = np.zeros(self.config.feature_dim)
        return sorted(self.weights)

    def train_batch(self, texts: list[str], gold_words: list[str], lr: float) -> float:
        if len(texts) != len(gold_words):
            raise ContractError("texts and gold_words must have equal length")
        if not texts:
            raise ContractError("train_batch requires a non-empty batch")
        vocab = self._ensure_words(gold_words)
        w = np.stack([self.weights[word] for word in vocab])  # (V, F)
        x = np.stack([self._features(t) for t in texts])  # (n, F)
        logits = x @ w.T
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        gold_idx = np.array([vocab.index(word) for word in gold_words])
        n = len(texts)
        loss = float(-np.mean(np.log(np.maximum(p[np.arange(n), gold_idx], 1e-12))))
        target = np.zeros_like(p)
        target[np.arange(n), gold_idx] = 1.0
        grad = (p - target).T @ x / n  # (V, F)
        for i, word in enumerate(vocab):
            self.weights[word] = self.weights[word] - lr * grad[i]
        self.update_count += 1
        self.texts_seen += n
        return loss

    def predict(self, texts: list[str], candidate_words: list[str]) -> np.ndarray:
        if not candidate_words:
            raise ContractError("predict requires candidate words")
        x = np.stack([self._features(t) for t in texts])
        rows = []
        for word in candidate_words:
            w = self.weights.get(word)
            rows.append(np.zeros(len(texts)) if w is None else x @ w)
        return np.stack(rows, axis=1)  # (n, |candidates|)

    def _artifact_path(self, artifact_id: str) -> Path:
        if self.config.artifact_dir is None:
            raise ValidationError("mock teacher has no artifact_dir configured")
        safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in artifact_id)
        return Path(self.config.artifact_dir) / f"{safe}.json"

    def save(self, artifact_id: str) -> None:
        path = self._artifact_path(artifact_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "feature_dim": self.config.feature_dim,
            "update_count": self.update_count,
            "weights": {w: v.tolist() for w, v in sorted(self.weights.items())},
        }
        path.write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")

    def load(self, artifact_id: str) -> None:
        path = self._artifact_path(artifact_id)
        payload = json.loads(path.read_text(encoding="utf-8"))
        if payload["feature_dim"] != self.config.feature_dim:
            raise ContractError(
                "artifact feature_dim does not match backend configuration"
            )
        self.weights = {
            w: np.asarray(v, dtype=np.float64) for w, v in payload["weights"].items()
        }
        self.update_count = int(payload["update_count"])
