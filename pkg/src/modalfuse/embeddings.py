"""Pluggable embedding providers, on-disk stores, and train-split normalization.

Three provider kinds cover every deployment: a hash-seeded deterministic
provider (test oracle), a write-once file store of precomputed vectors, and
a remote HTTP service. All of them map a content string to a fixed-width
float64 vector.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import requests
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import (
    EmbeddingLookupError,
    ParameterError,
    TransportError,
    ValidationError,
)
from .rng import rng_for

__all__ = [
    "DeterministicProvider",
    "EmbeddingMatrix",
    "EmbeddingNormalizer",
    "EmbeddingStore",
    "ProviderConfig",
    "RemoteProvider",
    "StoreProvider",
    "apply_normalizer",
    "build_provider",
    "deterministic_embed",
    "embed",
    "fit_normalizer",
    "load_store",
    "save_store",
]

STD_FLOOR = 1e-8


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Per-chunk embedding sequence for one session and format."""

    session_id: int
    format_name: str
    rows: np.ndarray  # (n_chunks, dim)

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[0] < 1:
            raise ValidationError(
                f"session {self.session_id}: embedding rows must be a non-empty 2-D matrix"
            )
        if not np.all(np.isfinite(rows)):
            raise ValidationError(f"session {self.session_id}: non-finite embedding values")
        object.__setattr__(self, "rows", rows)

    @property
    def n_chunks(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]


def deterministic_embed(content: str, dim: int, seed: int) -> np.ndarray:
    """Unit vector drawn from a PRNG seeded by a stable hash of (content, seed)."""
    if dim < 1:
        raise ParameterError("dim must be >= 1")
    v = rng_for("embed", content, seed=seed).standard_normal(dim)
    return v / np.linalg.norm(v)


class DeterministicProvider:
    """Hash-seeded random unit vectors; referentially transparent."""

    kind = "deterministic"

    def __init__(self, dim: int, seed: int = 0):
        if dim < 1:
            raise ParameterError("dim must be >= 1")
        self.dim = dim
        self.seed = seed

    def embed(self, content: str) -> np.ndarray:
        return deterministic_embed(content, self.dim, self.seed)


class EmbeddingStore:
    """Write-once mapping of content keys to vectors, one JSONL file on disk."""

    def __init__(self, dim: int, provider: str = "store", vectors: Mapping[str, np.ndarray] | None = None):
        if dim < 1:
            raise ParameterError("dim must be >= 1")
        self.dim = dim
        self.provider = provider
        self._vectors: dict[str, np.ndarray] = {}
        for key, vec in (vectors or {}).items():
            self.put(key, vec)

    def put(self, key: str, vector: np.ndarray) -> None:
        vec = np.asarray(vector, dtype=np.float64)
        if vec.shape != (self.dim,):
            raise ValidationError(f"vector for {key!r} has shape {vec.shape}, expected ({self.dim},)")
        self._vectors[key] = vec

    def get(self, key: str) -> np.ndarray:
        try:
            return self._vectors[key]
        except KeyError:
            raise EmbeddingLookupError(f"no stored vector for content key {key!r}") from None

    def __contains__(self, key: str) -> bool:
        return key in self._vectors

    def __len__(self) -> int:
        return len(self._vectors)

    def keys(self):
        return self._vectors.keys()


def save_store(store: EmbeddingStore, path: str | Path) -> None:
    """Header line with dim/provider, then one ``{"key", "vector"}`` per line."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps({"dim": store.dim, "provider": store.provider}))
        fh.write("\n")
        for key in sorted(store.keys()):
            fh.write(json.dumps({"key": key, "vector": store.get(key).tolist()}, ensure_ascii=False))
            fh.write("\n")


def load_store(path: str | Path) -> EmbeddingStore:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        store = EmbeddingStore(dim=int(header["dim"]), provider=header.get("provider", "store"))
        for line in fh:
            if not line.strip():
                continue
            entry = json.loads(line)
            store.put(entry["key"], np.asarray(entry["vector"], dtype=np.float64))
    return store


class StoreProvider:
    """Reads vectors from an :class:`EmbeddingStore`; misses are errors."""

    kind = "store"

    def __init__(self, store: EmbeddingStore):
        self.store = store
        self.dim = store.dim

    def embed(self, content: str) -> np.ndarray:
        return self.store.get(content)


class RemoteProvider:
    """HTTP embedding service: POST ``{"input": ...}`` -> ``{"embedding": [...]}``.

    One retry with exponential backoff; failures raise
    :class:`TransportError` carrying the retry count. Responses are never
    cached implicitly. ``max_in_flight`` bounds concurrent requests.
    """

    kind = "remote"

    def __init__(
        self,
        endpoint: str,
        dim: int,
        auth_token: str | None = None,
        timeout_s: float = 10.0,
        max_retries: int = 1,
        backoff_s: float = 0.25,
        max_in_flight: int = 8,
    ):
        if dim < 1:
            raise ParameterError("dim must be >= 1")
        self.endpoint = endpoint
        self.dim = dim
        self.auth_token = auth_token
        self.timeout_s = timeout_s
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self._gate = threading.Semaphore(max_in_flight)

    def embed(self, content: str) -> np.ndarray:
        headers = {}
        if self.auth_token:
            headers["Authorization"] = f"Bearer {self.auth_token}"
        last_error = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff_s * (2 ** (attempt - 1)))
            try:
                with self._gate:
                    resp = requests.post(
                        self.endpoint, json={"input": content}, headers=headers, timeout=self.timeout_s
                    )
                resp.raise_for_status()
                vector = np.asarray(resp.json()["embedding"], dtype=np.float64)
            except (requests.RequestException, KeyError, ValueError) as e:
                last_error = e
                continue
            if vector.shape != (self.dim,):
                raise ValidationError(
                    f"remote returned {vector.shape[0] if vector.ndim == 1 else vector.shape} values, expected {self.dim}"
                )
            return vector
        raise TransportError(
            f"remote embedding failed after {self.max_retries + 1} attempts: {last_error}",
            retries=self.max_retries,
        )


@dataclass(frozen=True)
class ProviderConfig:
    """Declarative provider selection for config files and the CLI."""

    kind: str  # deterministic | store | remote
    dim: int
    seed: int = 0
    store_path: str | None = None
    endpoint: str | None = None
    auth_token_env: str | None = None

    def __post_init__(self):
        if self.kind not in ("deterministic", "store", "remote"):
            raise ValidationError(f"unknown provider kind {self.kind!r}")
        if self.dim < 1:
            raise ValidationError("provider dim must be >= 1")
        if self.kind == "store" and not self.store_path:
            raise ValidationError("store provider requires store_path")
        if self.kind == "remote" and not self.endpoint:
            raise ValidationError("remote provider requires endpoint")


def build_provider(config: ProviderConfig):
    import os

    if config.kind == "deterministic":
        return DeterministicProvider(config.dim, config.seed)
    if config.kind == "store":
        store = load_store(config.store_path)
        if store.dim != config.dim:
            raise ValidationError(f"store dim {store.dim} != configured dim {config.dim}")
        return StoreProvider(store)
    token = os.environ.get(config.auth_token_env) if config.auth_token_env else None
    return RemoteProvider(config.endpoint, config.dim, auth_token=token)


def embed(provider, content: str) -> np.ndarray:
    """Embed one content string through any provider object."""
    if not content:
        raise ParameterError("content must be non-empty")
    vector = provider.embed(content)
    if vector.shape != (provider.dim,):
        raise ValidationError(f"provider returned shape {vector.shape}, expected ({provider.dim},)")
    return vector


class EmbeddingNormalizer(TransformerMixin, BaseEstimator):
    """Per-dimension z-score fitted on training rows only.

    Standard deviations are population (ddof=0) and clamped to ``std_floor``
    so constant dimensions stay finite. Fitting must only ever see
    training-split rows; the fitted statistics are then applied unchanged to
    dev and test rows.
    """

    def __init__(self, std_floor: float = STD_FLOOR):
        self.std_floor = std_floor

    def fit(self, X, y=None):
        rows = np.asarray(X, dtype=np.float64)
        if rows.ndim != 2:
            raise ValidationError("normalizer expects a 2-D row matrix")
        if rows.shape[0] < 2:
            raise ValidationError("normalizer needs at least 2 rows")
        self.mean_ = rows.mean(axis=0)
        self.std_ = np.maximum(rows.std(axis=0), self.std_floor)
        self.n_features_in_ = rows.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        rows = np.asarray(X, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != self.n_features_in_:
            raise ValidationError(
                f"expected rows of width {self.n_features_in_}, got shape {rows.shape}"
            )
        return (rows - self.mean_) / self.std_

    def inverse_transform(self, X):
        check_is_fitted(self, "mean_")
        return np.asarray(X, dtype=np.float64) * self.std_ + self.mean_


def fit_normalizer(train_matrices: Iterable[EmbeddingMatrix], std_floor: float = STD_FLOOR) -> EmbeddingNormalizer:
    """Fit a normalizer over all rows of the training-split matrices."""
    mats = list(train_matrices)
    if not mats:
        raise ValidationError("no training matrices to fit on")
    dim = mats[0].dim
    if any(m.dim != dim for m in mats):
        raise ValidationError("embedding dimension mismatch across matrices")
    stacked = np.vstack([m.rows for m in mats])
    return EmbeddingNormalizer(std_floor=std_floor).fit(stacked)


def apply_normalizer(normalizer: EmbeddingNormalizer, m: EmbeddingMatrix) -> EmbeddingMatrix:
    return EmbeddingMatrix(m.session_id, m.format_name, normalizer.transform(m.rows))
