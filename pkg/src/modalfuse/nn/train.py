"""Gradient-based training with seeded determinism.

Classification heads train with softmax cross-entropy (stable log-sum-exp);
regression heads train with squared error and are evaluated with MAE
elsewhere. Severity targets are the severity-level index, not the raw
questionnaire score. All arithmetic is float64: the gradient checks that
gate this module are infeasible at single precision.
"""

from __future__ import annotations

import json
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ..errors import DivergenceError, ValidationError
from .models import ForwardResult, FusionModelSpec, ModelSpec, backward, forward

__all__ = [
    "TrainConfig",
    "TrainedModel",
    "extract_features",
    "load_model",
    "loss_and_grad",
    "loss_value",
    "model_checksum",
    "predict_label",
    "predict_logits",
    "predict_value",
    "save_model",
    "train",
]


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max()
    return shifted - np.log(np.exp(shifted).sum())


def loss_and_grad(head: str, output: np.ndarray, target) -> tuple[float, np.ndarray]:
    """Per-sample loss and its gradient with respect to the raw output."""
    if head in ("binary", "multiclass"):
        t = int(target)
        if not (0 <= t < output.shape[0]):
            raise ValidationError(f"target {t} out of range for {output.shape[0]} classes")
        log_probs = _log_softmax(output)
        grad = np.exp(log_probs)
        grad[t] -= 1.0
        return float(-log_probs[t]), grad
    diff = float(output[0]) - float(target)
    return diff * diff, np.array([2.0 * diff])


def loss_value(head: str, output: np.ndarray, target) -> float:
    return loss_and_grad(head, output, target)[0]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 16
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    early_stop_patience: int | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValidationError("epochs and batch_size must be >= 1")
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be >= 0")
        if self.optimizer not in ("sgd", "adam"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "optimizer": self.optimizer,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "seed": self.seed,
            "early_stop_patience": self.early_stop_patience,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        return TrainConfig(**d)


@dataclass(frozen=True)
class TrainedModel:
    spec: ModelSpec | FusionModelSpec
    params: dict[str, np.ndarray]
    train_history: tuple[float, ...]
    dev_history: tuple[float, ...] = ()
    seed: int = 0

    @property
    def head(self) -> str:
        return self.spec.head


class _Adam:
    def __init__(self, params: Mapping[str, np.ndarray], lr: float, beta1: float, beta2: float, eps: float):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        self.t += 1
        for k in params:
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            m_hat = self.m[k] / (1 - self.beta1 ** self.t)
            v_hat = self.v[k] / (1 - self.beta2 ** self.t)
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray]) -> None:
        for k in params:
            params[k] -= self.lr * grads[k]


def _mean_batch_gradient(spec, params, batch) -> tuple[float, dict[str, np.ndarray]]:
    grads = {name: np.zeros_like(p) for name, p in params.items()}
    total = 0.0
    for x, target in batch:
        result = forward(spec, params, x)
        loss, dout = loss_and_grad(spec.head, result.output, target)
        total += loss
        backward(spec, params, result, dout, grads)
    scale = 1.0 / len(batch)
    for k in grads:
        grads[k] *= scale
    return total * scale, grads


def train(
    spec: ModelSpec | FusionModelSpec,
    data: Sequence[tuple],
    config: TrainConfig,
    init: Mapping[str, np.ndarray] | None = None,
    dev_data: Sequence[tuple] | None = None,
) -> TrainedModel:
    """Train a model to convergence or the epoch cap, deterministically.

    ``data`` is a sequence of (input, target) pairs. When ``dev_data`` and
    ``early_stop_patience`` are both set, training stops after that many
    epochs without a dev-loss improvement and the best parameters are kept.
    A full batch (batch_size >= len(data)) is consumed in the given sample
    order without shuffling.
    """
    from .models import init_params

    if not data:
        raise ValidationError("training data is empty")
    params = {k: v.copy() for k, v in (init or init_params(spec, config.seed)).items()}
    if config.optimizer == "adam":
        opt = _Adam(params, config.learning_rate, config.beta1, config.beta2, config.eps)
    else:
        opt = _Sgd(config.learning_rate)
    rng = np.random.default_rng(config.seed)
    n = len(data)
    full_batch = config.batch_size >= n
    history: list[float] = []
    dev_history: list[float] = []
    best_dev = np.inf
    best_params = None
    stale = 0
    for epoch in range(config.epochs):
        order = np.arange(n) if full_batch else rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = [data[i] for i in order[start:start + config.batch_size]]
            loss, grads = _mean_batch_gradient(spec, params, batch)
            epoch_loss += loss * len(batch)
            opt.step(params, grads)
        epoch_loss /= n
        if not np.isfinite(epoch_loss):
            raise DivergenceError(f"non-finite training loss at epoch {epoch}", epoch=epoch)
        history.append(epoch_loss)
        if dev_data is not None:
            dev_loss = float(
                np.mean([loss_value(spec.head, forward(spec, params, x).output, t) for x, t in dev_data])
            )
            dev_history.append(dev_loss)
            if config.early_stop_patience is not None:
                if dev_loss < best_dev - 1e-12:
                    best_dev = dev_loss
                    best_params = {k: v.copy() for k, v in params.items()}
                    stale = 0
                else:
                    stale += 1
                    if stale > config.early_stop_patience:
                        break
    if best_params is not None:
        params = best_params
    return TrainedModel(
        spec=spec,
        params=params,
        train_history=tuple(history),
        dev_history=tuple(dev_history),
        seed=config.seed,
    )


def predict_logits(model: TrainedModel, x) -> np.ndarray:
    return forward(model.spec, model.params, x).output


def predict_label(model: TrainedModel, x) -> int:
    return int(np.argmax(predict_logits(model, x)))


def predict_value(model: TrainedModel, x) -> float:
    return float(predict_logits(model, x)[0])


def extract_features(model: TrainedModel, data: Sequence) -> np.ndarray:
    """Penultimate vectors for every sample, stacked; no parameter updates."""
    return np.stack([forward(model.spec, model.params, x).penultimate for x in data])


# --- checkpoint format: JSON manifest + little-endian float64 blob ----------

def save_model(model: TrainedModel, base_path: str | Path) -> tuple[Path, Path]:
    base = Path(base_path)
    manifest_path = base.with_suffix(".json")
    blob_path = base.with_suffix(".bin")
    names = sorted(model.params)
    entries = []
    offset = 0
    with blob_path.open("wb") as fh:
        for name in names:
            arr = np.ascontiguousarray(model.params[name], dtype="<f8")
            fh.write(arr.tobytes())
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.size
    spec_kind = "fusion" if isinstance(model.spec, FusionModelSpec) else "single"
    manifest = {
        "spec_kind": spec_kind,
        "spec": model.spec.to_dict(),
        "seed": model.seed,
        "train_history": list(model.train_history),
        "dev_history": list(model.dev_history),
        "params": entries,
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest_path, blob_path


def load_model(base_path: str | Path) -> TrainedModel:
    base = Path(base_path)
    manifest = json.loads(base.with_suffix(".json").read_text(encoding="utf-8"))
    blob = np.frombuffer(base.with_suffix(".bin").read_bytes(), dtype="<f8")
    if manifest["spec_kind"] == "fusion":
        spec = FusionModelSpec.from_dict(manifest["spec"])
    else:
        spec = ModelSpec.from_dict(manifest["spec"])
    params = {}
    for entry in manifest["params"]:
        size = int(np.prod(entry["shape"])) if entry["shape"] else 1
        params[entry["name"]] = blob[entry["offset"]:entry["offset"] + size].reshape(entry["shape"]).copy()
    return TrainedModel(
        spec=spec,
        params=params,
        train_history=tuple(manifest["train_history"]),
        dev_history=tuple(manifest.get("dev_history", ())),
        seed=manifest.get("seed", 0),
    )


def model_checksum(model: TrainedModel) -> str:
    """SHA-256 over the canonical little-endian parameter blob."""
    h = hashlib.sha256()
    for name in sorted(model.params):
        h.update(name.encode("utf-8"))
        h.update(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())
    return h.hexdigest()
