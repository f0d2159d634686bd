"""Experiment configuration: schema, validation, and digests.

Configs are plain JSON. Validation happens up front with field-path error
messages so a bad config fails before any data is touched; in particular a
decision-fusion run that asks for the LLM channel without a predictions
file is rejected here.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from ..corpus import SyntheticSpec
from ..errors import ConfigurationError
from ..nn import ModelSpec, TrainConfig

TASKS = ("dep_binary", "ptsd_binary", "dep_severity", "ptsd_severity", "multiclass")
FUSION_KINDS = ("none", "data", "feature", "decision_binary", "decision_logits", "decision_severity")
MODALITIES = ("text", "audio", "video")

TEXT_FORMAT_KINDS = ("whole", "chunks")
AUDIO_FORMAT_KINDS = ("whole", "chunks", "answers_summed", "answers_concat", "answer_chunks")
VIDEO_FORMAT_KINDS = ("chunks", "per_utterance")

SINGLE_VECTOR_FORMATS = ("whole", "answers_summed", "answers_concat")


def task_head(task: str) -> str:
    if task in ("dep_binary", "ptsd_binary"):
        return "binary"
    if task == "multiclass":
        return "multiclass"
    return "regression"


def task_n_classes(task: str) -> int:
    if task in ("dep_binary", "ptsd_binary"):
        return 2
    if task == "multiclass":
        return 4
    return 5 if task == "dep_severity" else 3


def _require(condition: bool, path: str, message: str) -> None:
    if not condition:
        raise ConfigurationError(f"{path}: {message}")


_MISSING = object()


def _get(d: Mapping, key: str, path: str, default=_MISSING):
    if key in d:
        return d[key]
    if default is _MISSING:
        raise ConfigurationError(f"{path}: missing required field {key!r}")
    return default


@dataclass(frozen=True)
class FormatConfig:
    kind: str
    unit: str = "utterance"          # chunks only: utterance | qa
    window: int = 10
    overlap: int = 4
    qa_mode: bool = False            # whole text format only
    scope: str = "all"               # video per_utterance: all | answers

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "unit": self.unit, "window": self.window,
            "overlap": self.overlap, "qa_mode": self.qa_mode, "scope": self.scope,
        }

    @property
    def name(self) -> str:
        if self.kind == "chunks":
            return f"{self.unit}_w{self.window}_o{self.overlap}"
        if self.kind == "whole":
            return "qa_interview" if self.qa_mode else "whole_interview"
        if self.kind == "per_utterance":
            return f"per_utterance_{self.scope}"
        return self.kind

    @property
    def single_vector(self) -> bool:
        return self.kind in SINGLE_VECTOR_FORMATS


@dataclass(frozen=True)
class ProviderSpec:
    kind: str                        # deterministic | store | remote | oracle
    dim: int
    seed: int = 0
    store_path: str | None = None
    endpoint: str | None = None
    auth_token_env: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "dim": self.dim, "seed": self.seed,
            "store_path": self.store_path, "endpoint": self.endpoint,
            "auth_token_env": self.auth_token_env,
        }


@dataclass(frozen=True)
class ModelConfig:
    architecture: str = "cnn_bilstm"
    hidden_widths: tuple[int, ...] = (32,)
    n_filters: int = 16
    kernel_size: int = 2
    lstm_hidden: int = 16
    activation: str = "relu"

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "hidden_widths": list(self.hidden_widths),
            "n_filters": self.n_filters,
            "kernel_size": self.kernel_size,
            "lstm_hidden": self.lstm_hidden,
            "activation": self.activation,
        }

    def to_spec(self, input_dim: int, task: str) -> ModelSpec:
        return ModelSpec(
            architecture=self.architecture,
            input_dim=input_dim,
            head=task_head(task),
            n_classes=task_n_classes(task) if task == "multiclass" else 2,
            hidden_widths=self.hidden_widths,
            n_filters=self.n_filters,
            kernel_size=self.kernel_size,
            lstm_hidden=self.lstm_hidden,
            activation=self.activation,
        )


@dataclass(frozen=True)
class ModalityConfig:
    format: FormatConfig
    provider: ProviderSpec | None = None       # video runs on native frame features
    model: ModelConfig = field(default_factory=ModelConfig)
    classifier: str = "mlp"                    # mlp | svm (head swap) | direct_svm
    normalize: bool = False

    def to_dict(self) -> dict:
        return {
            "format": self.format.to_dict(),
            "provider": self.provider.to_dict() if self.provider else None,
            "model": self.model.to_dict(),
            "classifier": self.classifier,
            "normalize": self.normalize,
        }


@dataclass(frozen=True)
class FusionConfig:
    kind: str = "none"
    mode: str = "frozen_backbone"              # feature fusion: frozen_backbone | full_training
    head: str = "mlp"                          # fused head for data/feature fusion: mlp | svm
    model: ModelConfig = field(default_factory=ModelConfig)  # data fusion feature extractor
    include_llm: bool = False
    llm_predictions: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind, "mode": self.mode, "head": self.head,
            "model": self.model.to_dict(), "include_llm": self.include_llm,
            "llm_predictions": self.llm_predictions,
        }


@dataclass(frozen=True)
class SvmConfig:
    kernel: str = "linear"
    C: float = 10.0
    gamma: float | None = None
    tol: float = 1e-3

    def to_dict(self) -> dict:
        return {"kernel": self.kernel, "C": self.C, "gamma": self.gamma, "tol": self.tol}


@dataclass(frozen=True)
class ExperimentConfig:
    task: str
    corpus_path: str | None
    synthetic: SyntheticSpec | None
    modalities: dict[str, ModalityConfig]
    fusion: FusionConfig
    train: TrainConfig
    svm: SvmConfig
    seeds: dict[str, int]
    output_dir: str
    label: str = ""

    def to_dict(self) -> dict:
        return {
            "task": self.task,
            "corpus": {"path": self.corpus_path} if self.corpus_path else {"synthetic": self.synthetic.to_dict()},
            "modalities": {k: v.to_dict() for k, v in self.modalities.items()},
            "fusion": self.fusion.to_dict(),
            "train": self.train.to_dict(),
            "svm": self.svm.to_dict(),
            "seeds": dict(self.seeds),
            "output_dir": self.output_dir,
            "label": self.label,
        }

    def digest(self) -> str:
        """Stable hash of every semantically meaningful field."""
        payload = self.to_dict()
        payload.pop("output_dir")
        canonical = json.dumps(payload, sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _parse_format(d: Mapping, modality: str, path: str) -> FormatConfig:
    kinds = {"text": TEXT_FORMAT_KINDS, "audio": AUDIO_FORMAT_KINDS, "video": VIDEO_FORMAT_KINDS}[modality]
    kind = _get(d, "kind", path)
    _require(kind in kinds, path, f"format kind {kind!r} not valid for {modality} (choose from {kinds})")
    fmt = FormatConfig(
        kind=kind,
        unit=d.get("unit", "utterance"),
        window=int(d.get("window", 10)),
        overlap=int(d.get("overlap", 4)),
        qa_mode=bool(d.get("qa_mode", False)),
        scope=d.get("scope", "all"),
    )
    _require(fmt.unit in ("utterance", "qa"), path, f"unknown chunk unit {fmt.unit!r}")
    _require(fmt.scope in ("all", "answers"), path, f"unknown scope {fmt.scope!r}")
    if fmt.kind == "chunks":
        _require(fmt.window >= 1 and 0 <= fmt.overlap < fmt.window, path,
                 f"window/overlap {fmt.window}/{fmt.overlap} invalid")
    return fmt


def _parse_provider(d: Mapping | None, path: str, synthetic: bool) -> ProviderSpec | None:
    if d is None:
        return None
    kind = _get(d, "kind", path)
    _require(kind in ("deterministic", "store", "remote", "oracle"), path, f"unknown provider kind {kind!r}")
    _require(kind != "oracle" or synthetic, path, "oracle provider requires a synthetic corpus")
    spec = ProviderSpec(
        kind=kind,
        dim=int(_get(d, "dim", path)),
        seed=int(d.get("seed", 0)),
        store_path=d.get("store_path"),
        endpoint=d.get("endpoint"),
        auth_token_env=d.get("auth_token_env"),
    )
    _require(spec.dim >= 1, path, "provider dim must be >= 1")
    _require(spec.kind != "store" or bool(spec.store_path), path, "store provider requires store_path")
    _require(spec.kind != "remote" or bool(spec.endpoint), path, "remote provider requires endpoint")
    return spec


def _parse_model(d: Mapping | None, path: str) -> ModelConfig:
    if d is None:
        return ModelConfig()
    model = ModelConfig(
        architecture=d.get("architecture", "cnn_bilstm"),
        hidden_widths=tuple(d.get("hidden_widths", (32,))),
        n_filters=int(d.get("n_filters", 16)),
        kernel_size=int(d.get("kernel_size", 2)),
        lstm_hidden=int(d.get("lstm_hidden", 16)),
        activation=d.get("activation", "relu"),
    )
    _require(model.architecture in ("mlp", "cnn", "bilstm", "cnn_bilstm"), path,
             f"unknown architecture {model.architecture!r}")
    return model


def parse_config(raw: Mapping[str, Any]) -> ExperimentConfig:
    """Validate a raw config mapping into an ExperimentConfig."""
    task = _get(raw, "task", "config")
    _require(task in TASKS, "config.task", f"unknown task {task!r} (choose from {TASKS})")

    corpus = _get(raw, "corpus", "config")
    corpus_path = corpus.get("path")
    synthetic = None
    if "synthetic" in corpus:
        _require(corpus_path is None, "config.corpus", "give either path or synthetic, not both")
        sdict = dict(corpus["synthetic"])
        sdict.setdefault("seed", int(raw.get("seeds", {}).get("data", 0)))
        synthetic = SyntheticSpec.from_dict(sdict)
    _require(corpus_path is not None or synthetic is not None, "config.corpus", "path or synthetic required")

    raw_modalities = _get(raw, "modalities", "config")
    _require(len(raw_modalities) > 0, "config.modalities", "at least one modality required")
    modalities = {}
    for name, md in raw_modalities.items():
        path = f"config.modalities.{name}"
        _require(name in MODALITIES, path, f"unknown modality {name!r}")
        fmt = _parse_format(_get(md, "format", path), name, f"{path}.format")
        provider = _parse_provider(md.get("provider"), f"{path}.provider", synthetic is not None)
        if name != "video":
            _require(provider is not None, f"{path}.provider", "text/audio modalities need a provider")
        classifier = md.get("classifier", "mlp")
        _require(classifier in ("mlp", "svm", "direct_svm"), path, f"unknown classifier {classifier!r}")
        model = _parse_model(md.get("model"), f"{path}.model")
        if classifier == "direct_svm" or model.architecture == "mlp":
            what = "direct_svm" if classifier == "direct_svm" else "mlp"
            _require(fmt.single_vector, path,
                     f"{what} requires a single-vector format, got {fmt.name!r}")
        if classifier in ("svm", "direct_svm"):
            _require(task_head(task) != "regression", path, "svm classifiers do not support severity regression")
        modalities[name] = ModalityConfig(
            format=fmt, provider=provider, model=model, classifier=classifier,
            normalize=bool(md.get("normalize", False)),
        )

    fd = raw.get("fusion", {})
    fusion = FusionConfig(
        kind=fd.get("kind", "none"),
        mode=fd.get("mode", "frozen_backbone"),
        head=fd.get("head", "mlp"),
        model=_parse_model(fd.get("model"), "config.fusion.model"),
        include_llm=bool(fd.get("include_llm", False)),
        llm_predictions=fd.get("llm_predictions"),
    )
    _require(fusion.kind in FUSION_KINDS, "config.fusion.kind", f"unknown fusion kind {fusion.kind!r}")
    _require(fusion.mode in ("frozen_backbone", "full_training"), "config.fusion.mode",
             f"unknown mode {fusion.mode!r}")
    _require(fusion.head in ("mlp", "svm"), "config.fusion.head", f"unknown fused head {fusion.head!r}")
    if fusion.kind == "none":
        _require(len(modalities) == 1, "config.modalities", "fusion 'none' needs exactly one modality")
    else:
        _require(set(modalities) == set(MODALITIES), "config.modalities",
                 f"fusion {fusion.kind!r} needs all of {MODALITIES}")
    if fusion.kind == "decision_severity":
        _require(task in ("dep_severity", "ptsd_severity"), "config.fusion",
                 "decision_severity fusion requires a severity task")
    if fusion.kind in ("decision_binary", "decision_logits"):
        _require(task in ("dep_binary", "ptsd_binary", "multiclass"), "config.fusion",
                 f"{fusion.kind} fusion requires a classification task")
    if fusion.include_llm:
        _require(fusion.kind in ("decision_binary", "decision_severity"), "config.fusion",
                 "the LLM channel applies to decision-level fusion only")
        _require(bool(fusion.llm_predictions), "config.fusion.llm_predictions",
                 "include_llm requires an llm_predictions file")
    if fusion.kind in ("feature", "data") and fusion.head == "svm":
        _require(task_head(task) != "regression", "config.fusion.head",
                 "svm fused head does not support severity regression")

    train = TrainConfig.from_dict({**raw.get("train", {})})
    sd = raw.get("svm", {})
    svm_config = SvmConfig(
        kernel=sd.get("kernel", "linear"),
        C=float(sd.get("C", 10.0)),
        gamma=sd.get("gamma"),
        tol=float(sd.get("tol", 1e-3)),
    )
    _require(svm_config.kernel in ("linear", "rbf"), "config.svm.kernel",
             f"unknown kernel {svm_config.kernel!r}")

    seeds = {"data": 0, "init": 0, "search": 0}
    seeds.update({k: int(v) for k, v in raw.get("seeds", {}).items()})
    unknown = set(seeds) - {"data", "init", "search"}
    _require(not unknown, "config.seeds", f"unknown seed names {sorted(unknown)}")

    return ExperimentConfig(
        task=task,
        corpus_path=corpus_path,
        synthetic=synthetic,
        modalities=modalities,
        fusion=fusion,
        train=train,
        svm=svm_config,
        seeds=seeds,
        output_dir=raw.get("output_dir", "runs/latest"),
        label=raw.get("label", ""),
    )


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON ({e.msg} at line {e.lineno})") from e
    return parse_config(raw)
