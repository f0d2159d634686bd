"""Model specs and their forward/backward passes.

Four single-input architectures share one head convention: a dense map from
the penultimate feature vector to the output (two logits for binary, k for
multiclass, one value for regression). The penultimate vector is exactly
what :func:`extract_features` exports for the SVM swap. A fusion spec runs
several architecture branches on separate inputs and concatenates their
penultimate vectors before the head.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import ShapeError, ValidationError
from . import layers

ARCHITECTURES = ("mlp", "cnn", "bilstm", "cnn_bilstm")
HEADS = ("binary", "multiclass", "regression")
ACTIVATIONS = ("relu", "tanh")


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description for one modality branch."""

    architecture: str
    input_dim: int
    head: str = "binary"
    n_classes: int = 2
    hidden_widths: tuple[int, ...] = (32,)
    n_filters: int = 16
    kernel_size: int = 2
    lstm_hidden: int = 16
    activation: str = "relu"

    def __post_init__(self):
        if self.architecture not in ARCHITECTURES:
            raise ValidationError(f"unknown architecture {self.architecture!r}")
        if self.head not in HEADS:
            raise ValidationError(f"unknown head {self.head!r}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        sizes = (self.input_dim, self.n_classes, self.n_filters, self.kernel_size, self.lstm_hidden)
        if min(sizes) < 1 or any(w < 1 for w in self.hidden_widths):
            raise ValidationError("all model sizes must be >= 1")
        object.__setattr__(self, "hidden_widths", tuple(self.hidden_widths))

    @property
    def out_dim(self) -> int:
        if self.head == "binary":
            return 2
        if self.head == "multiclass":
            return self.n_classes
        return 1

    @property
    def penultimate_dim(self) -> int:
        if self.architecture == "mlp":
            return self.hidden_widths[-1] if self.hidden_widths else self.input_dim
        if self.architecture == "cnn":
            return self.n_filters
        return 2 * self.lstm_hidden

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "input_dim": self.input_dim,
            "head": self.head,
            "n_classes": self.n_classes,
            "hidden_widths": list(self.hidden_widths),
            "n_filters": self.n_filters,
            "kernel_size": self.kernel_size,
            "lstm_hidden": self.lstm_hidden,
            "activation": self.activation,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelSpec":
        d = dict(d)
        d["hidden_widths"] = tuple(d.get("hidden_widths", ()))
        return ModelSpec(**d)


@dataclass(frozen=True)
class FusionModelSpec:
    """Several branches trained jointly; penultimate vectors concatenate before the head."""

    branches: tuple[ModelSpec, ...]
    head: str = "binary"
    n_classes: int = 2

    def __post_init__(self):
        if not self.branches:
            raise ValidationError("fusion spec needs at least one branch")
        if self.head not in HEADS:
            raise ValidationError(f"unknown head {self.head!r}")
        object.__setattr__(self, "branches", tuple(self.branches))

    @property
    def out_dim(self) -> int:
        if self.head == "binary":
            return 2
        if self.head == "multiclass":
            return self.n_classes
        return 1

    @property
    def penultimate_dim(self) -> int:
        return sum(b.penultimate_dim for b in self.branches)

    def to_dict(self) -> dict:
        return {
            "branches": [b.to_dict() for b in self.branches],
            "head": self.head,
            "n_classes": self.n_classes,
        }

    @staticmethod
    def from_dict(d: dict) -> "FusionModelSpec":
        return FusionModelSpec(
            branches=tuple(ModelSpec.from_dict(b) for b in d["branches"]),
            head=d.get("head", "binary"),
            n_classes=d.get("n_classes", 2),
        )


def _glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    fan_in, fan_out = shape[-1], shape[0]
    if len(shape) == 3:  # conv filters (f, k, d): fan over receptive field
        fan_in = shape[1] * shape[2]
        fan_out = shape[0] * shape[1]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _branch_param_shapes(spec: ModelSpec) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    if spec.architecture == "mlp":
        d = spec.input_dim
        for i, width in enumerate(spec.hidden_widths):
            shapes[f"dense{i}.W"] = (d, width)
            shapes[f"dense{i}.b"] = (width,)
            d = width
    elif spec.architecture == "cnn":
        shapes["conv.W"] = (spec.n_filters, spec.kernel_size, spec.input_dim)
        shapes["conv.b"] = (spec.n_filters,)
    elif spec.architecture == "bilstm":
        for direction in ("fwd", "bwd"):
            shapes[f"lstm.{direction}.Wx"] = (4 * spec.lstm_hidden, spec.input_dim)
            shapes[f"lstm.{direction}.Wh"] = (4 * spec.lstm_hidden, spec.lstm_hidden)
            shapes[f"lstm.{direction}.b"] = (4 * spec.lstm_hidden,)
    else:  # cnn_bilstm
        shapes["conv.W"] = (spec.n_filters, spec.kernel_size, spec.input_dim)
        shapes["conv.b"] = (spec.n_filters,)
        for direction in ("fwd", "bwd"):
            shapes[f"lstm.{direction}.Wx"] = (4 * spec.lstm_hidden, spec.n_filters)
            shapes[f"lstm.{direction}.Wh"] = (4 * spec.lstm_hidden, spec.lstm_hidden)
            shapes[f"lstm.{direction}.b"] = (4 * spec.lstm_hidden,)
    return shapes


def param_shapes(spec: ModelSpec | FusionModelSpec) -> dict[str, tuple[int, ...]]:
    if isinstance(spec, FusionModelSpec):
        shapes = {}
        for bi, branch in enumerate(spec.branches):
            for name, shape in _branch_param_shapes(branch).items():
                shapes[f"branch{bi}.{name}"] = shape
    else:
        shapes = _branch_param_shapes(spec)
    shapes["head.W"] = (spec.penultimate_dim, spec.out_dim)
    shapes["head.b"] = (spec.out_dim,)
    return shapes


def init_params(spec: ModelSpec | FusionModelSpec, seed: int) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, in a fixed name order."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(spec).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            params[name] = _glorot(rng, shape)
    return params


def _branch_forward(spec: ModelSpec, params: Mapping[str, np.ndarray], x: np.ndarray, prefix: str = ""):
    """Feature extractor only: input -> penultimate vector plus caches."""
    x = np.asarray(x, dtype=np.float64)
    caches: dict[str, object] = {}
    if spec.architecture == "mlp":
        if x.ndim != 1:
            raise ShapeError(f"mlp expects a flat ({spec.input_dim},) input, got shape {x.shape}")
        out = x
        for i in range(len(spec.hidden_widths)):
            out, caches[f"dense{i}"] = layers.dense_forward(
                params[f"{prefix}dense{i}.W"], params[f"{prefix}dense{i}.b"], out
            )
            out, caches[f"act{i}"] = layers.activation_forward(spec.activation, out)
        return out, caches

    if x.ndim != 2:
        raise ShapeError(f"{spec.architecture} expects a (T, {spec.input_dim}) sequence, got shape {x.shape}")
    feats = x
    if spec.architecture in ("cnn", "cnn_bilstm"):
        feats, caches["conv"] = layers.conv1d_forward(params[f"{prefix}conv.W"], params[f"{prefix}conv.b"], feats)
        feats, caches["conv_act"] = layers.activation_forward(spec.activation, feats)
    if spec.architecture == "cnn":
        pooled, caches["pool"] = layers.global_max_pool_forward(feats)
        caches["pool_t"] = feats.shape[0]
        return pooled, caches
    hs_f, caches["lstm_fwd"] = layers.lstm_forward(
        params[f"{prefix}lstm.fwd.Wx"], params[f"{prefix}lstm.fwd.Wh"], params[f"{prefix}lstm.fwd.b"], feats
    )
    hs_b, caches["lstm_bwd"] = layers.lstm_forward(
        params[f"{prefix}lstm.bwd.Wx"], params[f"{prefix}lstm.bwd.Wh"], params[f"{prefix}lstm.bwd.b"],
        feats, reverse=True,
    )
    # Final state of each direction: last row forward, first row backward.
    penultimate = np.concatenate([hs_f[-1], hs_b[0]])
    caches["t_len"] = feats.shape[0]
    return penultimate, caches


def _branch_backward(
    spec: ModelSpec,
    params: Mapping[str, np.ndarray],
    caches: dict,
    dpen: np.ndarray,
    grads: dict[str, np.ndarray],
    prefix: str = "",
) -> None:
    hidden = spec.lstm_hidden
    if spec.architecture == "mlp":
        dout = dpen
        for i in reversed(range(len(spec.hidden_widths))):
            dout = layers.activation_backward(spec.activation, caches[f"act{i}"], dout)
            dout, dW, db = layers.dense_backward(params[f"{prefix}dense{i}.W"], caches[f"dense{i}"], dout)
            grads[f"{prefix}dense{i}.W"] += dW
            grads[f"{prefix}dense{i}.b"] += db
        return

    if spec.architecture == "cnn":
        dfeats = layers.global_max_pool_backward(caches["pool"], caches["pool_t"], dpen)
    else:
        t_len = caches["t_len"]
        dh_f = np.zeros((t_len, hidden))
        dh_f[-1] = dpen[:hidden]
        dh_b = np.zeros((t_len, hidden))
        dh_b[0] = dpen[hidden:]
        dx_f, dWx, dWh, db = layers.lstm_backward(
            params[f"{prefix}lstm.fwd.Wx"], params[f"{prefix}lstm.fwd.Wh"], caches["lstm_fwd"], dh_f
        )
        grads[f"{prefix}lstm.fwd.Wx"] += dWx
        grads[f"{prefix}lstm.fwd.Wh"] += dWh
        grads[f"{prefix}lstm.fwd.b"] += db
        dx_b, dWx, dWh, db = layers.lstm_backward(
            params[f"{prefix}lstm.bwd.Wx"], params[f"{prefix}lstm.bwd.Wh"], caches["lstm_bwd"], dh_b
        )
        grads[f"{prefix}lstm.bwd.Wx"] += dWx
        grads[f"{prefix}lstm.bwd.Wh"] += dWh
        grads[f"{prefix}lstm.bwd.b"] += db
        dfeats = dx_f + dx_b
        if spec.architecture == "bilstm":
            return

    dfeats = layers.activation_backward(spec.activation, caches["conv_act"], dfeats)
    _, dW, db = layers.conv1d_backward(params[f"{prefix}conv.W"], caches["conv"], dfeats)
    grads[f"{prefix}conv.W"] += dW
    grads[f"{prefix}conv.b"] += db


@dataclass
class ForwardResult:
    output: np.ndarray
    penultimate: np.ndarray
    caches: dict = field(repr=False, default_factory=dict)


def forward(spec: ModelSpec | FusionModelSpec, params: Mapping[str, np.ndarray], x) -> ForwardResult:
    """Run the network on one sample.

    ``x`` is a vector for MLP, a (T, dim) sequence for the sequence models,
    and a tuple of per-branch inputs for a fusion spec.
    """
    caches: dict[str, object] = {}
    if isinstance(spec, FusionModelSpec):
        if len(x) != len(spec.branches):
            raise ShapeError(f"fusion model expects {len(spec.branches)} inputs, got {len(x)}")
        pens = []
        for bi, branch in enumerate(spec.branches):
            pen, bcaches = _branch_forward(branch, params, x[bi], prefix=f"branch{bi}.")
            pens.append(pen)
            caches[f"branch{bi}"] = bcaches
        penultimate = np.concatenate(pens)
        caches["widths"] = [p.shape[0] for p in pens]
    else:
        penultimate, caches = _branch_forward(spec, params, x)
    output, caches["head"] = layers.dense_forward(params["head.W"], params["head.b"], penultimate)
    return ForwardResult(output=output, penultimate=penultimate, caches=caches)


def backward(
    spec: ModelSpec | FusionModelSpec,
    params: Mapping[str, np.ndarray],
    result: ForwardResult,
    doutput: np.ndarray,
    grads: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Accumulate gradients of every parameter into ``grads``."""
    if grads is None:
        grads = {name: np.zeros_like(p) for name, p in params.items()}
    dpen, dW, db = layers.dense_backward(params["head.W"], result.caches["head"], doutput)
    grads["head.W"] += dW
    grads["head.b"] += db
    if isinstance(spec, FusionModelSpec):
        offset = 0
        for bi, branch in enumerate(spec.branches):
            width = result.caches["widths"][bi]
            _branch_backward(
                branch, params, result.caches[f"branch{bi}"], dpen[offset:offset + width], grads,
                prefix=f"branch{bi}.",
            )
            offset += width
    else:
        _branch_backward(spec, params, result.caches, dpen, grads)
    return grads
