"""Config-driven pipeline runs: corpus -> chunk -> embed -> train -> fuse -> eval.

Learned components (normalizers, models, fusion combiners) fit on the train
split; dev drives early stopping and tuning; test targets are read only in
the final evaluation phase, enforced by an access-audit counter that the
run aborts on if violated.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..chunking import (
    answer_chunks,
    audio_spans_for_chunks,
    chunk_text,
    concatenated_answers,
    format_whole_interview,
    pool_video_per_utterance,
    window_indices,
)
from ..corpus import Session, generate_synthetic, load_corpus, oracle_embedding
from ..embeddings import (
    DeterministicProvider,
    EmbeddingMatrix,
    EmbeddingStore,
    RemoteProvider,
    StoreProvider,
    apply_normalizer,
    embed,
    fit_normalizer,
    load_store,
    save_store,
)
from ..errors import ConfigurationError, PipelineError, StageError
from ..fusion import (
    ClassRecord,
    DecisionRecord,
    SeverityRecord,
    decision_feature_matrix,
    fuse_data_level,
    fuse_decision_binary,
    fuse_decision_logits,
    fuse_decision_multiclass,
    fuse_severity_decision,
    load_llm_predictions,
    logit_feature_matrix,
    save_decision_records,
)
from ..metrics import MetricReport, report_for_classification, report_for_regression
from ..nn import (
    FusionModelSpec,
    ModelSpec,
    TrainConfig,
    TrainedModel,
    extract_features,
    model_checksum,
    predict_logits,
    save_model,
    train,
)
from ..svm import OneVsRestSvmClassifier, SmoSvmClassifier, save_svm
from .config import ExperimentConfig, ModalityConfig, task_head, task_n_classes

__all__ = ["RunResult", "SwapReport", "TargetAudit", "run", "swap_head_to_svm", "save_result", "load_result"]

SPLITS = ("train", "dev", "test")


class TargetAudit:
    """Counts target reads per split; test reads before evaluation are a bug."""

    def __init__(self, task: str):
        self.task = task
        self.reads = {s: 0 for s in SPLITS}
        self.evaluation_phase = False
        self.test_reads_before_eval = 0

    def targets(self, split: str, sessions: Sequence[Session]) -> np.ndarray:
        self.reads[split] += len(sessions)
        if split == "test" and not self.evaluation_phase:
            self.test_reads_before_eval += len(sessions)
        values = [s.labels.for_task(self.task) for s in sessions]
        if task_head(self.task) == "regression":
            return np.asarray(values, dtype=np.float64)
        return np.asarray(values, dtype=np.int64)


@dataclass
class SwapReport:
    """MLP-head vs SVM-head comparison on the same extracted features."""

    metric: str
    nn_score: float
    svm_score: float

    @property
    def delta(self) -> float:
        return self.svm_score - self.nn_score

    @property
    def improved(self) -> bool:
        # Positive BA delta is an improvement; negative MAE delta is.
        return self.delta > 0 if self.metric != "mae" else self.delta < 0

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "nn_score": self.nn_score,
            "svm_score": self.svm_score,
            "delta": self.delta,
            "improved": self.improved,
        }


@dataclass
class RunResult:
    config_digest: str
    task: str
    label: str
    reports: dict[str, MetricReport]
    seeds: dict[str, int]
    model_checksums: dict[str, str] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)
    audit: dict[str, int] = field(default_factory=dict)
    row_meta: dict = field(default_factory=dict)
    swap_reports: dict[str, dict] = field(default_factory=dict)
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "config_digest": self.config_digest,
            "task": self.task,
            "label": self.label,
            "reports": {k: v.to_dict() for k, v in self.reports.items()},
            "seeds": self.seeds,
            "model_checksums": self.model_checksums,
            "artifacts": self.artifacts,
            "audit": self.audit,
            "row_meta": self.row_meta,
            "swap_reports": self.swap_reports,
            "wall_time_s": self.wall_time_s,
        }


def save_result(result: RunResult, path: str | Path) -> None:
    Path(path).write_text(json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_result(path: str | Path) -> RunResult:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    return RunResult(
        config_digest=d["config_digest"],
        task=d["task"],
        label=d.get("label", ""),
        reports={k: MetricReport.from_dict(v) for k, v in d["reports"].items()},
        seeds=d["seeds"],
        model_checksums=d.get("model_checksums", {}),
        artifacts=d.get("artifacts", {}),
        audit=d.get("audit", {}),
        row_meta=d.get("row_meta", {}),
        swap_reports=d.get("swap_reports", {}),
        wall_time_s=d.get("wall_time_s", 0.0),
    )


# --- content materialization --------------------------------------------------

def _audio_span_key(sid: int, span: tuple[float, float]) -> str:
    return f"audio:{sid}:{span[0]:.3f}-{span[1]:.3f}"


def _modality_contents(session: Session, modality: str, mc: ModalityConfig) -> list[str] | list[list[str]]:
    """Embeddable content strings per chunk (audio 'answers_summed' nests per-answer keys)."""
    fmt = mc.format
    if modality == "text":
        if fmt.kind == "whole":
            return [format_whole_interview(session, qa_mode=fmt.qa_mode)]
        chunked = chunk_text(session, fmt.unit, fmt.window, fmt.overlap)
        return [c.text for c in chunked.chunks]
    # audio: canonical span keys stand in for waveform segments
    if fmt.kind == "whole":
        return [f"audio:{session.id}:full"]
    if fmt.kind == "answers_concat":
        return [f"audio:{session.id}:answers"]
    if fmt.kind == "answers_summed":
        spans = audio_spans_for_chunks(answer_chunks(session))
        return [[_audio_span_key(session.id, s) for s in spans]]
    if fmt.kind == "answer_chunks":
        spans = audio_spans_for_chunks(answer_chunks(session))
        return [_audio_span_key(session.id, s) for s in spans]
    chunked = chunk_text(session, "utterance", fmt.window, fmt.overlap)
    spans = audio_spans_for_chunks(chunked)
    return [_audio_span_key(session.id, s) for s in spans]


def _video_matrix(session: Session, mc: ModalityConfig) -> np.ndarray:
    if session.frame_times is None:
        raise StageError(f"stage=format session={session.id}: no frame features for the video modality")
    fmt = mc.format
    utterances = session.utterances
    if fmt.kind == "per_utterance" and fmt.scope == "answers":
        utterances = tuple(u for u in utterances if u.speaker == "Participant")
    pooled, _ = pool_video_per_utterance(session.frame_times, session.frame_features, utterances)
    if fmt.kind == "per_utterance":
        return pooled
    windows = window_indices(len(utterances), fmt.window, fmt.overlap)
    # One vector per chunk keeps video timestep-aligned with text/audio chunks.
    return np.stack([pooled[w.start_idx:w.end_idx].max(axis=0) for w in windows])


def _flatten_contents(contents) -> list[str]:
    out = []
    for c in contents:
        if isinstance(c, list):
            out.extend(c)
        else:
            out.append(c)
    return out


def _build_provider(config: ExperimentConfig, modality: str, mc: ModalityConfig,
                    sessions: Sequence[Session], contents_by_sid: dict, out_dir: Path):
    spec = mc.provider
    if spec.kind == "deterministic":
        return DeterministicProvider(spec.dim, spec.seed)
    if spec.kind == "store":
        store = load_store(spec.store_path)
        return StoreProvider(store)
    if spec.kind == "remote":
        import os

        token = os.environ.get(spec.auth_token_env) if spec.auth_token_env else None
        return RemoteProvider(spec.endpoint, spec.dim, auth_token=token)
    # oracle: materialize a store from the synthetic generator's planted vectors,
    # cached on disk so warm reruns load the identical file.
    cache = out_dir / "stores" / f"{modality}-{config.digest()[:12]}.jsonl"
    if cache.exists():
        return StoreProvider(load_store(cache))
    store = EmbeddingStore(dim=config.synthetic.dim(modality), provider="oracle")
    for session in sessions:
        label = session.labels.multiclass  # generation-side: content carries the signal
        for key in _flatten_contents(contents_by_sid[session.id]):
            if key not in store:
                store.put(key, oracle_embedding(config.synthetic, modality, label, key, session_id=session.id))
    cache.parent.mkdir(parents=True, exist_ok=True)
    save_store(store, cache)
    return StoreProvider(store)


def _materialize_modality(
    config: ExperimentConfig, modality: str, sessions: Sequence[Session], out_dir: Path
) -> dict[int, EmbeddingMatrix]:
    """EmbeddingMatrix per session id for one modality."""
    mc = config.modalities[modality]
    if modality == "video":
        return {
            s.id: EmbeddingMatrix(s.id, mc.format.name, _video_matrix(s, mc)) for s in sessions
        }
    contents_by_sid = {s.id: _modality_contents(s, modality, mc) for s in sessions}
    provider = _build_provider(config, modality, mc, sessions, contents_by_sid, out_dir)
    matrices = {}
    for s in sessions:
        rows = []
        for content in contents_by_sid[s.id]:
            if isinstance(content, list):  # answers_summed: sum of per-answer vectors
                rows.append(np.sum([embed(provider, key) for key in content], axis=0))
            else:
                rows.append(embed(provider, content))
        matrices[s.id] = EmbeddingMatrix(s.id, mc.format.name, np.stack(rows))
    return matrices


def _model_input(m: EmbeddingMatrix, mc: ModalityConfig) -> np.ndarray:
    if mc.format.single_vector or mc.model.architecture == "mlp" or mc.classifier == "direct_svm":
        if m.n_chunks != 1:
            raise StageError(
                f"stage=format session={m.session_id}: format {m.format_name!r} yielded "
                f"{m.n_chunks} chunks where a single vector is required"
            )
        return m.rows[0]
    return m.rows


# --- classifier fitting -------------------------------------------------------

def _svm_for_task(config: ExperimentConfig, task: str):
    cls = OneVsRestSvmClassifier if task == "multiclass" else SmoSvmClassifier
    return cls(kernel=config.svm.kernel, C=config.svm.C, gamma=config.svm.gamma, tol=config.svm.tol)


@dataclass
class _FittedModality:
    """One modality's trained path: nn, nn with svm head, or direct svm."""

    classifier: str
    nn_model: TrainedModel | None = None
    svm_model: object | None = None
    swap: SwapReport | None = None

    def predict(self, inputs: Sequence[np.ndarray]) -> np.ndarray:
        if self.classifier == "direct_svm":
            return self.svm_model.predict(np.stack(inputs))
        if self.classifier == "svm":
            return self.svm_model.predict(extract_features(self.nn_model, inputs))
        logits = np.stack([predict_logits(self.nn_model, x) for x in inputs])
        if self.nn_model.head == "regression":
            return logits[:, 0]
        return np.argmax(logits, axis=1)

    def logit_pairs(self, inputs: Sequence[np.ndarray]) -> np.ndarray:
        """(n, 2) decision scores; SVM paths report (-f, +f)."""
        if self.classifier == "direct_svm":
            d = self.svm_model.decision_function(np.stack(inputs))
            return np.stack([-d, d], axis=1)
        if self.classifier == "svm":
            d = self.svm_model.decision_function(extract_features(self.nn_model, inputs))
            return np.stack([-d, d], axis=1)
        return np.stack([predict_logits(self.nn_model, x) for x in inputs])


def swap_head_to_svm(
    trained: TrainedModel,
    train_inputs: Sequence[np.ndarray],
    train_targets: np.ndarray,
    eval_inputs: Sequence[np.ndarray],
    eval_targets: np.ndarray,
    kernel: str = "linear",
    C: float = 10.0,
    gamma: float | None = None,
    tol: float = 1e-3,
):
    """Replace the trained MLP head with an SVM over penultimate features.

    Returns (svm model, svm eval predictions, SwapReport). The report's delta
    is svm minus nn: positive balanced accuracy means the swap helped.
    """
    if trained.head == "regression":
        raise ConfigurationError("svm head swap supports classification heads only")
    multiclass = trained.head == "multiclass"
    cls = OneVsRestSvmClassifier if multiclass else SmoSvmClassifier
    svm_model = cls(kernel=kernel, C=C, gamma=gamma, tol=tol)
    svm_model.fit(extract_features(trained, train_inputs), train_targets)
    svm_preds = svm_model.predict(extract_features(trained, eval_inputs))
    nn_preds = np.array([int(np.argmax(predict_logits(trained, x))) for x in eval_inputs])
    n_classes = trained.spec.out_dim
    nn_report = report_for_classification(nn_preds, eval_targets, n_classes)
    svm_report = report_for_classification(svm_preds, eval_targets, n_classes)
    report = SwapReport(
        metric="balanced_accuracy",
        nn_score=nn_report.balanced_accuracy,
        svm_score=svm_report.balanced_accuracy,
    )
    return svm_model, svm_preds, report


def _fit_modality(
    config: ExperimentConfig,
    mc: ModalityConfig,
    inputs: dict[str, list[np.ndarray]],
    targets: dict[str, np.ndarray],
    train_config: TrainConfig,
) -> _FittedModality:
    task = config.task
    if mc.classifier == "direct_svm":
        model = _svm_for_task(config, task)
        model.fit(np.stack(inputs["train"]), targets["train"])
        return _FittedModality(classifier="direct_svm", svm_model=model)
    spec = mc.model.to_spec(inputs["train"][0].shape[-1], task)
    dev = list(zip(inputs["dev"], targets["dev"])) if train_config.early_stop_patience else None
    nn_model = train(spec, list(zip(inputs["train"], targets["train"])), train_config, dev_data=dev)
    if mc.classifier == "mlp":
        return _FittedModality(classifier="mlp", nn_model=nn_model)
    svm_model, _, swap = swap_head_to_svm(
        nn_model, inputs["train"], targets["train"], inputs["dev"], targets["dev"],
        kernel=config.svm.kernel, C=config.svm.C, gamma=config.svm.gamma, tol=config.svm.tol,
    )
    return _FittedModality(classifier="svm", nn_model=nn_model, svm_model=svm_model, swap=swap)


def _evaluate(task: str, preds: np.ndarray, targets: np.ndarray) -> MetricReport:
    if task_head(task) == "regression":
        return report_for_regression(preds, targets)
    return report_for_classification(preds.astype(np.int64), targets, task_n_classes(task))


# --- the run ------------------------------------------------------------------

def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError as e:
        raise StageError(f"stage={name}: {e}") from e


def run(config: ExperimentConfig, evaluate_test: bool = True) -> RunResult:
    """Execute the configured pipeline and return metrics plus artifacts."""
    started = time.perf_counter()
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    audit = TargetAudit(config.task)

    # fail fast on fusion inputs before any training
    llm_map = None
    if config.fusion.include_llm:
        llm_path = Path(config.fusion.llm_predictions)
        if not llm_path.exists():
            raise ConfigurationError(f"llm predictions file not found: {llm_path}")
        llm_map = _stage("fuse", load_llm_predictions, llm_path, config.task)

    if config.synthetic is not None:
        sessions = _stage("corpus", generate_synthetic, config.synthetic)
    else:
        sessions = _stage("corpus", load_corpus, config.corpus_path)
    by_split = {s: [] for s in SPLITS}
    for session in sorted(sessions, key=lambda s: s.id):
        by_split[session.split].append(session)
    for split, members in by_split.items():
        if not members:
            raise StageError(f"stage=corpus: split {split!r} is empty")

    matrices: dict[str, dict[int, EmbeddingMatrix]] = {}
    for modality in config.modalities:
        matrices[modality] = _stage("embed", _materialize_modality, config, modality, sessions, out_dir)
        if config.modalities[modality].normalize:
            normalizer = fit_normalizer([matrices[modality][s.id] for s in by_split["train"]])
            matrices[modality] = {
                sid: apply_normalizer(normalizer, m) for sid, m in matrices[modality].items()
            }

    targets = {split: audit.targets(split, by_split[split]) for split in ("train", "dev")}

    train_config = TrainConfig.from_dict({**config.train.to_dict(), "seed": config.seeds["init"]})
    checksums: dict[str, str] = {}
    artifacts: dict[str, str] = {}
    swap_reports: dict[str, dict] = {}

    def modality_inputs(modality: str) -> dict[str, list[np.ndarray]]:
        mc = config.modalities[modality]
        return {
            split: [_model_input(matrices[modality][s.id], mc) for s in by_split[split]]
            for split in SPLITS
        }

    def save_nn(name: str, model: TrainedModel) -> None:
        base = out_dir / name
        save_model(model, base)
        checksums[name] = model_checksum(model)
        artifacts[name] = str(base.with_suffix(".json"))

    predictions: dict[str, np.ndarray] = {}

    if config.fusion.kind == "none":
        (modality, mc), = config.modalities.items()
        inputs = modality_inputs(modality)
        fitted = _stage("train", _fit_modality, config, mc, inputs, targets, train_config)
        if fitted.nn_model is not None:
            save_nn(f"model-{modality}", fitted.nn_model)
        if fitted.svm_model is not None:
            base = out_dir / f"svm-{modality}"
            save_svm(fitted.svm_model, base)
            artifacts[f"svm-{modality}"] = str(base.with_suffix(".json"))
        if fitted.swap is not None:
            swap_reports[modality] = fitted.swap.to_dict()
        predictions = {split: fitted.predict(inputs[split]) for split in SPLITS}

    elif config.fusion.kind == "data":
        fused = {
            s.id: _stage(
                "fuse", fuse_data_level,
                matrices["text"][s.id], matrices["audio"][s.id], matrices["video"][s.id],
            )
            for s in sessions
        }
        inputs = {split: [fused[s.id].rows for s in by_split[split]] for split in SPLITS}
        spec = config.fusion.model.to_spec(inputs["train"][0].shape[-1], config.task)
        dev = list(zip(inputs["dev"], targets["dev"])) if train_config.early_stop_patience else None
        nn_model = _stage(
            "train", train, spec, list(zip(inputs["train"], targets["train"])), train_config, None, dev
        )
        save_nn("model-data-fused", nn_model)
        if config.fusion.head == "svm":
            svm_model, _, swap = _stage(
                "train", swap_head_to_svm, nn_model,
                inputs["train"], targets["train"], inputs["dev"], targets["dev"],
                config.svm.kernel, config.svm.C, config.svm.gamma, config.svm.tol,
            )
            swap_reports["data_fused"] = swap.to_dict()
            predictions = {
                split: svm_model.predict(extract_features(nn_model, inputs[split])) for split in SPLITS
            }
        else:
            predictions = {
                split: np.array([int(np.argmax(predict_logits(nn_model, x))) for x in inputs[split]])
                if nn_model.head != "regression"
                else np.array([predict_logits(nn_model, x)[0] for x in inputs[split]])
                for split in SPLITS
            }

    elif config.fusion.kind == "feature":
        inputs = {m: modality_inputs(m) for m in config.modalities}
        if config.fusion.mode == "full_training":
            branches = tuple(
                config.modalities[m].model.to_spec(inputs[m]["train"][0].shape[-1], config.task)
                for m in config.modalities
            )
            fspec = FusionModelSpec(branches=branches, head=task_head(config.task),
                                    n_classes=task_n_classes(config.task) if config.task == "multiclass" else 2)
            joint = {
                split: [tuple(inputs[m][split][i] for m in config.modalities)
                        for i in range(len(by_split[split]))]
                for split in SPLITS
            }
            dev = list(zip(joint["dev"], targets["dev"])) if train_config.early_stop_patience else None
            nn_model = _stage(
                "train", train, fspec, list(zip(joint["train"], targets["train"])), train_config, None, dev
            )
            save_nn("model-feature-fused", nn_model)
            predictions = {
                split: np.array([int(np.argmax(predict_logits(nn_model, x))) for x in joint[split]])
                if nn_model.head != "regression"
                else np.array([predict_logits(nn_model, x)[0] for x in joint[split]])
                for split in SPLITS
            }
        else:  # frozen_backbone: upstream models never updated by head training
            features = {}
            for m, mc in config.modalities.items():
                spec = mc.model.to_spec(inputs[m]["train"][0].shape[-1], config.task)
                dev = list(zip(inputs[m]["dev"], targets["dev"])) if train_config.early_stop_patience else None
                upstream = _stage(
                    "train", train, spec, list(zip(inputs[m]["train"], targets["train"])),
                    train_config, None, dev,
                )
                save_nn(f"backbone-{m}", upstream)
                features[m] = {split: extract_features(upstream, inputs[m][split]) for split in SPLITS}
            fused = {
                split: np.hstack([features[m][split] for m in config.modalities]) for split in SPLITS
            }
            if config.fusion.head == "svm":
                head_model = _svm_for_task(config, config.task)
                _stage("fuse", head_model.fit, fused["train"], targets["train"])
                predictions = {split: head_model.predict(fused[split]) for split in SPLITS}
            else:
                head_spec = ModelSpec(
                    "mlp", input_dim=fused["train"].shape[1], head=task_head(config.task),
                    n_classes=task_n_classes(config.task) if config.task == "multiclass" else 2,
                    hidden_widths=tuple(config.fusion.model.hidden_widths),
                    activation=config.fusion.model.activation,
                )
                dev = list(zip(fused["dev"], targets["dev"])) if train_config.early_stop_patience else None
                head_model = _stage(
                    "fuse", train, head_spec,
                    list(zip(fused["train"], targets["train"])), train_config, None, dev,
                )
                save_nn("fusion-head", head_model)
                predictions = {
                    split: np.array([int(np.argmax(predict_logits(head_model, x))) for x in fused[split]])
                    if head_model.head != "regression"
                    else np.array([predict_logits(head_model, x)[0] for x in fused[split]])
                    for split in SPLITS
                }

    elif config.fusion.kind in ("decision_binary", "decision_logits"):
        per_modality = {}
        for m, mc in config.modalities.items():
            inputs = modality_inputs(m)
            fitted = _stage("train", _fit_modality, config, mc, inputs, targets, train_config)
            if fitted.nn_model is not None:
                save_nn(f"model-{m}", fitted.nn_model)
            if fitted.swap is not None:
                swap_reports[m] = fitted.swap.to_dict()
            per_modality[m] = {
                split: {
                    "pred": fitted.predict(inputs[split]),
                    "logits": fitted.logit_pairs(inputs[split]),
                }
                for split in SPLITS
            }
        if config.task == "multiclass":
            records = {
                split: [
                    ClassRecord(
                        session_id=s.id,
                        predictions={m: int(per_modality[m][split]["pred"][i]) for m in config.modalities},
                        llm_prediction=None if llm_map is None else llm_map.get(s.id),
                    )
                    for i, s in enumerate(by_split[split])
                ]
                for split in SPLITS
            }
            combiner = _stage(
                "fuse", fuse_decision_multiclass, records["train"], targets["train"],
                task_n_classes(config.task), config.fusion.include_llm,
            )
            def _predict_records(recs):
                rows = []
                for r in recs:
                    row = []
                    for m in config.modalities:
                        onehot = np.zeros(task_n_classes(config.task))
                        onehot[r.predictions[m]] = 1.0
                        row.append(onehot)
                    if config.fusion.include_llm:
                        onehot = np.zeros(task_n_classes(config.task))
                        onehot[int(r.llm_prediction)] = 1.0
                        row.append(onehot)
                    rows.append(np.concatenate(row))
                return combiner.predict(np.asarray(rows))
        else:
            records = {
                split: [
                    DecisionRecord(
                        session_id=s.id,
                        predictions={m: int(per_modality[m][split]["pred"][i]) for m in config.modalities},
                        logits={m: tuple(per_modality[m][split]["logits"][i]) for m in config.modalities},
                        llm_prediction=None if llm_map is None else llm_map.get(s.id),
                    )
                    for i, s in enumerate(by_split[split])
                ]
                for split in SPLITS
            }
            records_path = out_dir / "decision-records-train.jsonl"
            save_decision_records(records["train"], records_path)
            artifacts["decision_records"] = str(records_path)
            if config.fusion.kind == "decision_binary":
                combiner = _stage(
                    "fuse", fuse_decision_binary, records["train"], targets["train"],
                    config.fusion.include_llm, tuple(config.modalities), config.svm.C, config.svm.kernel,
                )
                def _predict_records(recs):
                    return combiner.predict(
                        decision_feature_matrix(recs, config.fusion.include_llm, tuple(config.modalities))
                    )
            else:
                combiner = _stage(
                    "fuse", fuse_decision_logits, records["train"], targets["train"],
                    tuple(config.modalities), config.svm.C, config.svm.kernel,
                )
                def _predict_records(recs):
                    return combiner.predict(logit_feature_matrix(recs, tuple(config.modalities)))
        base = out_dir / "decision-combiner"
        save_svm(combiner, base)
        artifacts["decision_combiner"] = str(base.with_suffix(".json"))
        predictions = {split: _predict_records(records[split]) for split in SPLITS}

    elif config.fusion.kind == "decision_severity":
        per_modality = {}
        for m, mc in config.modalities.items():
            inputs = modality_inputs(m)
            fitted = _stage("train", _fit_modality, config, mc, inputs, targets, train_config)
            if fitted.nn_model is not None:
                save_nn(f"model-{m}", fitted.nn_model)
            per_modality[m] = {split: fitted.predict(inputs[split]) for split in SPLITS}
        records = {
            split: [
                SeverityRecord(
                    session_id=s.id,
                    predictions={m: float(per_modality[m][split][i]) for m in config.modalities},
                    llm_prediction=None if llm_map is None else llm_map.get(s.id),
                )
                for i, s in enumerate(by_split[split])
            ]
            for split in SPLITS
        }
        blend = _stage(
            "fuse", fuse_severity_decision, records["train"], targets["train"],
            config.fusion.include_llm, tuple(config.modalities),
        )
        predictions = {split: blend.predict(records[split]) for split in SPLITS}

    else:
        raise ConfigurationError(f"unhandled fusion kind {config.fusion.kind!r}")

    # final evaluation: the only phase allowed to read test targets
    if audit.test_reads_before_eval:
        raise StageError(
            f"stage=evaluate: {audit.test_reads_before_eval} test targets were read before evaluation"
        )
    audit.evaluation_phase = True
    reports = {split: _evaluate(config.task, predictions[split], targets[split]) for split in ("train", "dev")}
    if evaluate_test:
        test_targets = audit.targets("test", by_split["test"])
        reports["test"] = _evaluate(config.task, predictions["test"], test_targets)

    result = RunResult(
        config_digest=config.digest(),
        task=config.task,
        label=config.label,
        reports=reports,
        seeds=dict(config.seeds),
        model_checksums=checksums,
        artifacts=artifacts,
        audit={
            "test_target_reads_before_eval": audit.test_reads_before_eval,
            **{f"{k}_target_reads": v for k, v in audit.reads.items()},
        },
        row_meta=_row_meta(config),
        swap_reports=swap_reports,
        wall_time_s=time.perf_counter() - started,
    )
    save_result(result, out_dir / "result.json")
    return result


def _row_meta(config: ExperimentConfig) -> dict:
    meta = {"task": config.task, "fusion": config.fusion.kind, "label": config.label}
    if len(config.modalities) == 1:
        (modality, mc), = config.modalities.items()
        meta.update(
            modality=modality,
            format=mc.format.name,
            normalize=mc.normalize,
            model=mc.model.architecture if mc.classifier != "direct_svm" else "svm",
            classifier=mc.classifier,
        )
    else:
        meta["formats"] = {m: mc.format.name for m, mc in config.modalities.items()}
        meta["normalize"] = {m: mc.normalize for m, mc in config.modalities.items()}
    return meta
