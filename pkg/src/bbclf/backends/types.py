"""Wire-contract types for the encoder and teacher backends."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from .. import kernels
from ..errors import ContractError, RequestError
from ..prompt import MASK


class Position(enum.Enum):
    MASK = "mask"
    CLS = "cls"


class LayerMode(enum.Enum):
    LAST4 = "last4"
    LAST1 = "last1"


def layer_count(mode: LayerMode) -> int:
    return 4 if mode is LayerMode.LAST4 else 1


@dataclass(frozen=True)
class EncoderRequest:
    """One hidden-state extraction request."""

    rendered_text: str
    position: Position = Position.MASK
    layer_mode: LayerMode = LayerMode.LAST4

    def __post_init__(self):
        if self.position is Position.MASK and self.rendered_text.count(MASK) != 1:
            raise RequestError(
                "mask-position request requires exactly one unresolved mask slot"
            )


@dataclass(frozen=True)
class LayerHiddenStates:
    """Per-layer hidden vectors at the requested position, last layer last."""

    vectors: np.ndarray  # shape (num_layers, d)
    d: int
    model_id: str

    def __post_init__(self):
        arr = np.asarray(self.vectors, dtype=np.float64)
        object.__setattr__(self, "vectors", arr)
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ContractError("layer vectors must be a non-empty 2-d array")
        if arr.shape[1] != self.d:
            raise ContractError(
                f"layer vectors have dimension {arr.shape[1]}, expected {self.d}"
            )

    def check_mode(self, mode: LayerMode) -> None:
        expected = layer_count(mode)
        if self.vectors.shape[0] != expected:
            raise ContractError(
                f"{mode.value} response must carry {expected} layer vectors, "
                f"got {self.vectors.shape[0]}"
            )


@dataclass(frozen=True)
class FeatureVector:
    """Pooled hidden-state vector plus provenance of how it was produced."""

    values: np.ndarray  # shape (d,)
    provenance: tuple[str, str, str]  # (position, layer_mode, model_id)

    @property
    def d(self) -> int:
        return int(self.values.shape[0])


def pool_features(
    states: LayerHiddenStates, position: Position = Position.MASK
) -> FeatureVector:
    """Elementwise max over the layer vectors (identity for a single layer)."""
    if states.vectors.shape[0] < 1:
        raise ContractError("cannot pool an empty layer list")
    pooled = kernels.max_pool(np.ascontiguousarray(states.vectors))
    mode = LayerMode.LAST4 if states.vectors.shape[0] == 4 else LayerMode.LAST1
    return FeatureVector(
        values=pooled, provenance=(position.value, mode.value, states.model_id)
    )


def feature_key(
    rendered_text: str, position: Position, layer_mode: LayerMode, model_id: str
) -> str:
    """Content-addressed cache key for a pooled feature."""
    payload = "\x1f".join(
        [rendered_text, position.value, layer_mode.value, model_id]
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@runtime_checkable
class EncoderBackend(Protocol):
    """Anything that can serve hidden states at a requested position."""

    def encode(self, request: EncoderRequest) -> LayerHiddenStates: ...

    def meta(self) -> dict: ...


@runtime_checkable
class TeacherBackend(Protocol):
    """Trainable masked-word scorer used for pseudo-labeling.

    ``predict`` returns one row of logits per text, one column per
    candidate word.
    """

    def train_batch(self, texts: list[str], gold_words: list[str], lr: float) -> float: ...

    def predict(self, texts: list[str], candidate_words: list[str]) -> np.ndarray: ...

    def save(self, artifact_id: str) -> None: ...

    def load(self, artifact_id: str) -> None: ...
