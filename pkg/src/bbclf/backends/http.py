"""HTTP+JSON clients for remote encoder and teacher backends.

Encoder protocol:
    POST /encode  {"text", "position": "mask"|"cls", "layer_mode": "last4"|"last1"}
                  -> {"d": int, "layers": [[float, ...], ...], "model_id": str}
    GET  /meta    -> {"d": int, "num_layers": int, "model_id": str}

Teacher protocol:
    POST /train_batch {"texts", "gold_words", "lr"} -> {"loss": float}
    POST /predict     {"texts", "candidate_words"}  -> {"logits": [[...], ...]}
    POST /save | /load {"artifact_id"} -> {}
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import requests

from ..errors import BackendError, ContractError, RetryableBackendError
from .types import EncoderRequest, LayerHiddenStates

logger = logging.getLogger(__name__)


class _JsonHttp:
    def __init__(self, base_url: str, retries: int = 3, backoff: float = 0.2,
                 timeout: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self._session = requests.Session()

    def call(self, method: str, route: str, payload: dict | None = None) -> dict:
        url = f"{self.base_url}{route}"
        last_exc: Exception | None = None
        for attempt in range(self.retries):
            try:
                if method == "GET":
                    resp = self._session.get(url, timeout=self.timeout)
                else:
                    resp = self._session.post(url, json=payload, timeout=self.timeout)
            except (requests.ConnectionError, requests.Timeout) as exc:
                last_exc = exc
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * 2**attempt)
                continue
            if resp.status_code >= 500:
                last_exc = BackendError(f"{url} returned {resp.status_code}")
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * 2**attempt)
                continue
            if resp.status_code != 200:
                raise BackendError(
                    f"{url} returned {resp.status_code}: {resp.text[:200]}"
                )
            return resp.json()
        raise RetryableBackendError(
            f"{url} unreachable after {self.retries} attempts: {last_exc}"
        )


class HttpEncoderClient:
    """Encoder client with retry and bounded-parallel batch requests."""

    def __init__(self, base_url: str, expected_d: int | None = None,
                 fan_out: int = 4, retries: int = 3, timeout: float = 30.0):
        self._http = _JsonHttp(base_url, retries=retries, timeout=timeout)
        self.expected_d = expected_d
        self.fan_out = max(1, fan_out)

    def meta(self) -> dict:
        return self._http.call("GET", "/meta")

    def encode(self, request: EncoderRequest) -> LayerHiddenStates:
        payload = {
            "text": request.rendered_text,
            "position": request.position.value,
            "layer_mode": request.layer_mode.value,
        }
        response = self._http.call("POST", "/encode", payload)
        try:
            d = int(response["d"])
            layers = np.asarray(response["layers"], dtype=np.float64)
            model_id = str(response["model_id"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractError(f"malformed /encode response: {exc}") from exc
        if self.expected_d is not None and d != self.expected_d:
            raise ContractError(
                f"backend reports d={d}, configured expectation is {self.expected_d}"
            )
        states = LayerHiddenStates(vectors=layers, d=d, model_id=model_id)
        states.check_mode(request.layer_mode)
        return states

    def encode_many(self, requests_: list[EncoderRequest]) -> list[LayerHiddenStates]:
        if len(requests_) <= 1 or self.fan_out == 1:
            return [self.encode(r) for r in requests_]
        with ThreadPoolExecutor(max_workers=self.fan_out) as pool:
            return list(pool.map(self.encode, requests_))


class HttpTeacherClient:
    """Teacher client speaking the train/predict/save/load protocol."""

    def __init__(self, base_url: str, retries: int = 3, timeout: float = 60.0):
        self._http = _JsonHttp(base_url, retries=retries, timeout=timeout)

    def train_batch(self, texts: list[str], gold_words: list[str], lr: float) -> float:
        response = self._http.call(
            "POST",
            "/train_batch",
            {"texts": list(texts), "gold_words": list(gold_words), "lr": lr},
        )
        return float(response.get("loss", float("nan")))

    def predict(self, texts: list[str], candidate_words: list[str]) -> np.ndarray:
        response = self._http.call(
            "POST",
            "/predict",
            {"texts": list(texts), "candidate_words": list(candidate_words)},
        )
        try:
            logits = np.asarray(response["logits"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise ContractError(f"malformed /predict response: {exc}") from exc
        if logits.shape != (len(texts), len(candidate_words)):
            raise ContractError(
                f"/predict returned shape {logits.shape}, expected "
                f"({len(texts)}, {len(candidate_words)})"
            )
        return logits

    def save(self, artifact_id: str) -> None:
        self._http.call("POST", "/save", {"artifact_id": artifact_id})

    def load(self, artifact_id: str) -> None:
        self._http.call("POST", "/load", {"artifact_id": artifact_id})
