"""Three fusion levels plus an external-LLM decision channel.

Data-level fusion concatenates aligned per-chunk embeddings; feature-level
fusion concatenates penultimate network features (with the upstream models
either frozen or trained jointly); decision-level fusion feeds per-modality
predictions — binary labels, logits, class labels, or severity values —
into a meta-model. Modality order is fixed so adding the LLM channel never
reorders existing features.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embeddings import EmbeddingMatrix
from .errors import (
    AlignmentError,
    ConfigurationError,
    DataError,
    ValidationError,
)
from .svm import OneVsRestSvmClassifier, SmoSvmClassifier

__all__ = [
    "ClassRecord",
    "DecisionRecord",
    "FusedSample",
    "FusionFormat",
    "ModalityFormat",
    "SeverityBlend",
    "SeverityRecord",
    "decision_feature_matrix",
    "fuse_data_level",
    "fuse_decision_binary",
    "fuse_decision_logits",
    "fuse_decision_multiclass",
    "fuse_feature_level",
    "fuse_severity_decision",
    "load_llm_predictions",
    "logit_feature_matrix",
    "save_decision_records",
]

logger = logging.getLogger(__name__)

MODALITY_ORDER = ("text", "audio", "video")

LLM_TASKS = ("dep_binary", "ptsd_binary", "multiclass", "dep_severity", "ptsd_severity")
_SEVERITY_LEVELS = {"dep_severity": 5, "ptsd_severity": 3}


@dataclass(frozen=True)
class ModalityFormat:
    """One modality's place in a fusion run: data format, normalization, model."""

    format_name: str
    normalize: bool = False
    model_ref: str | None = None


@dataclass(frozen=True)
class FusionFormat:
    text: ModalityFormat
    audio: ModalityFormat
    video: ModalityFormat

    def modality(self, name: str) -> ModalityFormat:
        return getattr(self, name)


@dataclass(frozen=True)
class DecisionRecord:
    """Per-session binary predictions and logits from each modality model."""

    session_id: int
    predictions: Mapping[str, int]          # modality -> {0, 1}
    logits: Mapping[str, tuple[float, float]]
    llm_prediction: int | None = None

    def __post_init__(self):
        for modality, value in self.predictions.items():
            if modality not in MODALITY_ORDER:
                raise ValidationError(f"unknown modality {modality!r}")
            if value not in (0, 1):
                raise ValidationError(f"session {self.session_id}: binary prediction must be 0/1")
        for modality, pair in self.logits.items():
            if not all(np.isfinite(v) for v in pair):
                raise ValidationError(f"session {self.session_id}: non-finite logits for {modality}")


@dataclass(frozen=True)
class SeverityRecord:
    session_id: int
    predictions: Mapping[str, float]        # modality -> predicted severity index
    llm_prediction: float | None = None


@dataclass(frozen=True)
class ClassRecord:
    session_id: int
    predictions: Mapping[str, int]          # modality -> class index
    llm_prediction: int | None = None


@dataclass(frozen=True)
class FusedSample:
    session_id: int
    features: np.ndarray
    target: float | int


def fuse_data_level(
    text_m: EmbeddingMatrix, audio_m: EmbeddingMatrix, video_m: EmbeddingMatrix
) -> EmbeddingMatrix:
    """Row-wise concatenation of aligned per-chunk embeddings."""
    mats = (text_m, audio_m, video_m)
    counts = {m.n_chunks for m in mats}
    if len(counts) != 1:
        raise AlignmentError(
            f"session {text_m.session_id}: chunk counts differ across modalities "
            f"(text={text_m.n_chunks}, audio={audio_m.n_chunks}, video={video_m.n_chunks})"
        )
    ids = {m.session_id for m in mats}
    if len(ids) != 1:
        raise AlignmentError(f"cannot fuse different sessions {sorted(ids)}")
    return EmbeddingMatrix(
        session_id=text_m.session_id,
        format_name=f"data_fused({text_m.format_name}|{audio_m.format_name}|{video_m.format_name})",
        rows=np.hstack([m.rows for m in mats]),
    )


def fuse_feature_level(
    session_id: int,
    features: Mapping[str, np.ndarray],
    target,
    mode: str = "frozen_backbone",
    order: Sequence[str] = MODALITY_ORDER,
) -> FusedSample:
    """Concatenate per-modality feature vectors in canonical modality order.

    ``frozen_backbone`` takes penultimate vectors from already-trained
    upstream models, which are never updated by downstream head training;
    ``full_training`` is realized by a jointly trained multi-branch network
    (see the nn fusion spec) and this function then fuses its branch outputs.
    """
    if mode not in ("frozen_backbone", "full_training"):
        raise ConfigurationError(f"unknown feature-fusion mode {mode!r}")
    missing = [m for m in order if m not in features]
    if missing:
        raise ConfigurationError(f"session {session_id}: missing modality features {missing}")
    vec = np.concatenate([np.asarray(features[m], dtype=np.float64).ravel() for m in order])
    return FusedSample(session_id=session_id, features=vec, target=target)


def _require_llm(records: Sequence, include_llm: bool) -> None:
    if not include_llm:
        return
    missing = [r.session_id for r in records if r.llm_prediction is None]
    if missing:
        raise DataError(f"llm predictions missing for sessions {missing}")


def decision_feature_matrix(
    records: Sequence[DecisionRecord],
    include_llm: bool = False,
    modalities: Sequence[str] = MODALITY_ORDER,
) -> np.ndarray:
    """Binary predictions as +/-1 feature rows, LLM channel appended last."""
    _require_llm(records, include_llm)
    rows = []
    for r in records:
        missing = [m for m in modalities if m not in r.predictions]
        if missing:
            raise DataError(f"session {r.session_id}: missing modality predictions {missing}")
        row = [2.0 * r.predictions[m] - 1.0 for m in modalities]
        if include_llm:
            row.append(2.0 * int(r.llm_prediction) - 1.0)
        rows.append(row)
    return np.asarray(rows, dtype=np.float64)


def logit_feature_matrix(
    records: Sequence[DecisionRecord],
    modalities: Sequence[str] = MODALITY_ORDER,
) -> np.ndarray:
    rows = []
    for r in records:
        missing = [m for m in modalities if m not in r.logits]
        if missing:
            raise DataError(f"session {r.session_id}: missing modality logits {missing}")
        row = []
        for m in modalities:
            row.extend(r.logits[m])
        rows.append(row)
    return np.asarray(rows, dtype=np.float64)


def fuse_decision_binary(
    records: Sequence[DecisionRecord],
    labels: Sequence[int],
    include_llm: bool = False,
    modalities: Sequence[str] = MODALITY_ORDER,
    C: float = 10.0,
    kernel: str = "linear",
) -> SmoSvmClassifier:
    """SVM over concatenated +/-1 per-modality predictions (train records only)."""
    X = decision_feature_matrix(records, include_llm, modalities)
    if len(labels) != len(records):
        raise ValidationError(f"{len(records)} records vs {len(labels)} labels")
    return SmoSvmClassifier(kernel=kernel, C=C).fit(X, np.asarray(labels, dtype=np.int64))


def fuse_decision_logits(
    records: Sequence[DecisionRecord],
    labels: Sequence[int],
    modalities: Sequence[str] = MODALITY_ORDER,
    C: float = 10.0,
    kernel: str = "linear",
) -> SmoSvmClassifier:
    """SVM over concatenated per-modality logit pairs."""
    X = logit_feature_matrix(records, modalities)
    if len(labels) != len(records):
        raise ValidationError(f"{len(records)} records vs {len(labels)} labels")
    return SmoSvmClassifier(kernel=kernel, C=C).fit(X, np.asarray(labels, dtype=np.int64))


def fuse_decision_multiclass(
    records: Sequence[ClassRecord],
    labels: Sequence[int],
    n_classes: int,
    include_llm: bool = False,
    modalities: Sequence[str] = MODALITY_ORDER,
    C: float = 10.0,
    kernel: str = "linear",
) -> OneVsRestSvmClassifier:
    """One-vs-rest SVM over one-hot encoded per-modality class predictions."""
    _require_llm(records, include_llm)
    rows = []
    for r in records:
        row = []
        for m in modalities:
            if m not in r.predictions:
                raise DataError(f"session {r.session_id}: missing modality predictions [{m!r}]")
            onehot = np.zeros(n_classes)
            onehot[int(r.predictions[m])] = 1.0
            row.append(onehot)
        if include_llm:
            onehot = np.zeros(n_classes)
            onehot[int(r.llm_prediction)] = 1.0
            row.append(onehot)
        rows.append(np.concatenate(row))
    X = np.asarray(rows)
    return OneVsRestSvmClassifier(kernel=kernel, C=C).fit(X, np.asarray(labels, dtype=np.int64))


@dataclass(frozen=True)
class SeverityBlend:
    """Least-squares linear blend of per-modality severity predictions."""

    weights: np.ndarray            # one weight per channel, then intercept
    channels: tuple[str, ...]      # modality names, optionally ending with "llm"
    fallback_equal_weights: bool = False

    def predict(self, records: Sequence[SeverityRecord]) -> np.ndarray:
        X = _severity_design(records, self.channels)
        return X @ self.weights


def _severity_design(records: Sequence[SeverityRecord], channels: Sequence[str]) -> np.ndarray:
    rows = []
    for r in records:
        row = []
        for ch in channels:
            if ch == "llm":
                if r.llm_prediction is None:
                    raise DataError(f"llm predictions missing for sessions [{r.session_id}]")
                row.append(float(r.llm_prediction))
            else:
                if ch not in r.predictions:
                    raise DataError(f"session {r.session_id}: missing severity prediction for {ch!r}")
                row.append(float(r.predictions[ch]))
        row.append(1.0)
        rows.append(row)
    return np.asarray(rows, dtype=np.float64)


def fuse_severity_decision(
    records: Sequence[SeverityRecord],
    targets: Sequence[float],
    include_llm: bool = False,
    modalities: Sequence[str] = MODALITY_ORDER,
) -> SeverityBlend:
    """Fit the blend on train records; rank-deficient designs fall back to averaging."""
    channels = tuple(modalities) + (("llm",) if include_llm else ())
    X = _severity_design(records, channels)
    t = np.asarray(targets, dtype=np.float64)
    if t.shape[0] != X.shape[0]:
        raise ValidationError(f"{X.shape[0]} records vs {t.shape[0]} targets")
    weights, _, rank, _ = np.linalg.lstsq(X, t, rcond=None)
    if rank < X.shape[1]:
        logger.warning("severity design is rank-deficient (rank %d < %d); using equal weights", rank, X.shape[1])
        weights = np.zeros(X.shape[1])
        weights[:-1] = 1.0 / len(channels)
        return SeverityBlend(weights=weights, channels=channels, fallback_equal_weights=True)
    return SeverityBlend(weights=weights, channels=channels)


def load_llm_predictions(path: str | Path, task: str) -> dict[int, float | int]:
    """Per-session external LLM predictions for one task from a JSONL file."""
    if task not in LLM_TASKS:
        raise ValidationError(f"unknown task {task!r}")
    path = Path(path)
    out: dict[int, float | int] = {}
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            entry = json.loads(line)
            if entry.get("task") != task:
                continue
            sid = int(entry["session_id"])
            if sid in out:
                raise DataError(f"{path}:{lineno}: duplicate prediction for session {sid}")
            value = entry["prediction"]
            if task in ("dep_binary", "ptsd_binary"):
                if value not in (0, 1):
                    raise ValidationError(f"{path}:{lineno}: binary prediction must be 0/1, got {value}")
                out[sid] = int(value)
            elif task == "multiclass":
                if value not in (0, 1, 2, 3):
                    raise ValidationError(f"{path}:{lineno}: multiclass prediction must be 0..3, got {value}")
                out[sid] = int(value)
            else:
                levels = _SEVERITY_LEVELS[task]
                if not (0 <= float(value) <= levels - 1):
                    raise ValidationError(
                        f"{path}:{lineno}: severity prediction {value} outside 0..{levels - 1}"
                    )
                out[sid] = float(value)
    return out


def save_decision_records(records: Sequence[DecisionRecord], path: str | Path) -> None:
    """Dump records to JSONL for audit."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            fh.write(json.dumps({
                "session_id": r.session_id,
                "predictions": dict(r.predictions),
                "logits": {k: list(v) for k, v in r.logits.items()},
                "llm_prediction": r.llm_prediction,
            }))
            fh.write("\n")
