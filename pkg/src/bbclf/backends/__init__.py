from .cache import FeatureCache
from .http import HttpEncoderClient, HttpTeacherClient
from .mock import (
    MockEncoder,
    MockEncoderConfig,
    MockTeacherBackend,
    MockTeacherConfig,
    label_direction,
)
from .types import (
    EncoderBackend,
    EncoderRequest,
    FeatureVector,
    LayerHiddenStates,
    LayerMode,
    Position,
    TeacherBackend,
    feature_key,
    pool_features,
)

__all__ = [
    "EncoderBackend",
    "EncoderRequest",
    "FeatureCache",
    "FeatureVector",
    "HttpEncoderClient",
    "HttpTeacherClient",
    "LayerHiddenStates",
    "LayerMode",
    "MockEncoder",
    "MockEncoderConfig",
    "MockTeacherBackend",
    "MockTeacherConfig",
    "Position",
    "TeacherBackend",
    "feature_key",
    "label_direction",
    "pool_features",
]
