"""Interview corpus model: sessions, derived labels, and synthetic generation.

Labels are always derived from the raw PHQ-8 / PCL-C scores and never stored
as authoritative values; a batch of sessions once shipped with a stale label
column, so scores are the single source of truth and
:func:`apply_label_repairs` is an audit rather than a mutation.

The synthetic generator plants a recoverable, label-dependent linear signal
per modality. Video signal is materialized directly in frame features;
text and audio signal is exposed through :func:`oracle_embedding`, a pure
function of (spec, label, content key) used to build embedding stores for
desk-scale experiments.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParseError, ValidationError
from .rng import rng_for, stable_hash

__all__ = [
    "KNOWN_MISLABELED_IDS",
    "LabelSet",
    "RepairReport",
    "Session",
    "SyntheticSpec",
    "Utterance",
    "apply_label_repairs",
    "derive_labels",
    "derive_multiclass",
    "generate_synthetic",
    "load_corpus",
    "oracle_embedding",
    "save_corpus",
    "split_for_id",
]

SPEAKERS = ("Interviewer", "Participant")
SPLITS = ("train", "dev", "test")
MODALITIES = ("text", "audio", "video")

PHQ8_RANGE = (0, 24)
PCLC_RANGE = (17, 85)
DEP_BINARY_THRESHOLD = 10  # positive when phq8 >= 10
PTSD_BINARY_THRESHOLD = 44  # positive when pclc > 44

DEP_SEVERITY_BINS = ((0, 4), (5, 9), (10, 14), (15, 19), (20, 24))
PTSD_SEVERITY_BINS = ((17, 29), (30, 44), (45, 85))

# Session ids whose shipped depression label contradicted the PHQ-8 score.
KNOWN_MISLABELED_IDS = (
    320, 325, 335, 344, 352, 356, 380, 386, 409, 413,
    418, 422, 433, 459, 483, 633, 682, 691, 696, 709,
)


@dataclass(frozen=True)
class Utterance:
    """One timestamped speech turn."""

    speaker: str
    text: str
    start_s: float
    end_s: float

    def __post_init__(self):
        if self.speaker not in SPEAKERS:
            raise ValidationError(f"unknown speaker {self.speaker!r}")
        if not self.text.strip():
            raise ValidationError("utterance text is empty")
        if not (self.start_s >= 0):
            raise ValidationError(f"start_s must be >= 0, got {self.start_s}")
        if not (self.end_s > self.start_s):
            raise ValidationError(f"end_s {self.end_s} must exceed start_s {self.start_s}")


@dataclass(frozen=True)
class Session:
    """One interview: ordered utterances, optional frame features, raw scores."""

    id: int
    utterances: tuple[Utterance, ...]
    phq8: int
    pclc: int
    split: str
    frame_times: np.ndarray | None = None
    frame_features: np.ndarray | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValidationError(f"session {self.id}: unknown split {self.split!r}")
        if not (PHQ8_RANGE[0] <= self.phq8 <= PHQ8_RANGE[1]):
            raise ValidationError(f"session {self.id}: phq8 {self.phq8} outside {PHQ8_RANGE}")
        if not (PCLC_RANGE[0] <= self.pclc <= PCLC_RANGE[1]):
            raise ValidationError(f"session {self.id}: pclc {self.pclc} outside {PCLC_RANGE}")
        starts = [u.start_s for u in self.utterances]
        if any(a > b for a, b in zip(starts, starts[1:])):
            raise ValidationError(f"session {self.id}: utterances not sorted by start_s")
        if (self.frame_times is None) != (self.frame_features is None):
            raise ValidationError(f"session {self.id}: frame times and features must come together")
        if self.frame_times is not None:
            times = np.asarray(self.frame_times, dtype=np.float64)
            feats = np.asarray(self.frame_features, dtype=np.float64)
            if feats.ndim != 2 or times.ndim != 1 or times.shape[0] != feats.shape[0]:
                raise ValidationError(f"session {self.id}: frame matrix/timestamps shape mismatch")
            if np.any(np.diff(times) < 0):
                raise ValidationError(f"session {self.id}: frame timestamps not sorted")
            object.__setattr__(self, "frame_times", times)
            object.__setattr__(self, "frame_features", feats)

    @property
    def labels(self) -> "LabelSet":
        return derive_labels(self.phq8, self.pclc)


@dataclass(frozen=True)
class LabelSet:
    dep_binary: bool
    ptsd_binary: bool
    dep_severity: int
    ptsd_severity: int
    multiclass: int

    def for_task(self, task: str) -> float | int:
        if task == "dep_binary":
            return int(self.dep_binary)
        if task == "ptsd_binary":
            return int(self.ptsd_binary)
        if task == "dep_severity":
            return self.dep_severity
        if task == "ptsd_severity":
            return self.ptsd_severity
        if task == "multiclass":
            return self.multiclass
        raise ValidationError(f"unknown task {task!r}")


def _severity_bin(score: int, bins: Sequence[tuple[int, int]], what: str) -> int:
    for level, (lo, hi) in enumerate(bins):
        if lo <= score <= hi:
            return level
    raise ValidationError(f"{what} score {score} outside {bins[0][0]}..{bins[-1][1]}")


def derive_multiclass(dep: bool, ptsd: bool) -> int:
    """0 neither, 1 depression only, 2 PTSD only, 3 both."""
    return int(dep) + 2 * int(ptsd)


def derive_labels(phq8: int, pclc: int) -> LabelSet:
    """All task labels from the raw questionnaire scores.

    Depression is positive at PHQ-8 >= 10 (the start of the 10-14 severity
    bin); PTSD is positive strictly above PCL-C 44, i.e. exactly the 45-85
    high-severity bin.
    """
    phq8 = int(phq8)
    pclc = int(pclc)
    if not (PHQ8_RANGE[0] <= phq8 <= PHQ8_RANGE[1]):
        raise ValidationError(f"phq8 {phq8} outside {PHQ8_RANGE}")
    if not (PCLC_RANGE[0] <= pclc <= PCLC_RANGE[1]):
        raise ValidationError(f"pclc {pclc} outside {PCLC_RANGE}")
    dep = phq8 >= DEP_BINARY_THRESHOLD
    ptsd = pclc > PTSD_BINARY_THRESHOLD
    return LabelSet(
        dep_binary=dep,
        ptsd_binary=ptsd,
        dep_severity=_severity_bin(phq8, DEP_SEVERITY_BINS, "phq8"),
        ptsd_severity=_severity_bin(pclc, PTSD_SEVERITY_BINS, "pclc"),
        multiclass=derive_multiclass(dep, ptsd),
    )


@dataclass(frozen=True)
class RepairReport:
    """Outcome of auditing externally supplied labels against derived ones."""

    repaired_ids: tuple[int, ...]
    verified_ids: tuple[int, ...]
    skipped_ids: tuple[int, ...]

    @property
    def repaired(self) -> int:
        return len(self.repaired_ids)

    @property
    def skipped(self) -> int:
        return len(self.skipped_ids)


def apply_label_repairs(
    sessions: Sequence[Session],
    repair_ids: Iterable[int] = KNOWN_MISLABELED_IDS,
    external_dep_labels: Mapping[int, bool] | None = None,
) -> RepairReport:
    """Audit the listed session ids against score-derived depression labels.

    A session counts as repaired when an externally supplied label disagrees
    with the label derived from its PHQ-8 score; ids absent from the corpus
    are skipped. Labels in this package are always derived, so nothing is
    mutated.
    """
    by_id = {s.id: s for s in sessions}
    repaired, verified, skipped = [], [], []
    for rid in repair_ids:
        session = by_id.get(rid)
        if session is None:
            skipped.append(rid)
            continue
        derived = session.labels.dep_binary
        external = None if external_dep_labels is None else external_dep_labels.get(rid)
        if external is not None and bool(external) != derived:
            repaired.append(rid)
        else:
            verified.append(rid)
    return RepairReport(tuple(repaired), tuple(verified), tuple(skipped))


# --- corpus file format -----------------------------------------------------

def _session_to_dict(s: Session) -> dict:
    d = {
        "id": s.id,
        "split": s.split,
        "phq8": s.phq8,
        "pclc": s.pclc,
        "utterances": [
            {"speaker": u.speaker, "text": u.text, "start_s": u.start_s, "end_s": u.end_s}
            for u in s.utterances
        ],
    }
    if s.frame_times is not None:
        d["frames"] = {
            "timestamps": s.frame_times.tolist(),
            "features": s.frame_features.tolist(),
        }
    return d


def _session_from_dict(d: dict) -> Session:
    utterances = tuple(
        Utterance(u["speaker"], u["text"], float(u["start_s"]), float(u["end_s"]))
        for u in d["utterances"]
    )
    frames = d.get("frames")
    return Session(
        id=int(d["id"]),
        utterances=utterances,
        phq8=int(d["phq8"]),
        pclc=int(d["pclc"]),
        split=d["split"],
        frame_times=np.asarray(frames["timestamps"], dtype=np.float64) if frames else None,
        frame_features=np.asarray(frames["features"], dtype=np.float64) if frames else None,
    )


def save_corpus(sessions: Iterable[Session], path: str | Path) -> None:
    """Write one JSON object per line, UTF-8, LF endings."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for s in sessions:
            fh.write(json.dumps(_session_to_dict(s), ensure_ascii=False))
            fh.write("\n")


def load_corpus(path: str | Path) -> list[Session]:
    path = Path(path)
    if not path.exists():
        raise ParseError(f"corpus file not found: {path}")
    sessions = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{lineno}: invalid JSON ({e.msg})") from e
            try:
                sessions.append(_session_from_dict(record))
            except (KeyError, TypeError) as e:
                raise ParseError(f"{path}:{lineno}: missing or malformed field ({e})") from e
    return sessions


# --- synthetic corpus with planted signal ------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a synthetic corpus carrying a recoverable planted signal."""

    n_sessions: int
    seed: int
    utterances_per_session: tuple[int, int] = (16, 32)
    text_dim: int = 24
    audio_dim: int = 16
    video_dim: int = 12
    text_signal: float = 2.0
    audio_signal: float = 2.0
    video_signal: float = 2.0
    noise_sigma: float = 0.25
    session_noise_sigma: float = 0.0
    class_priors: tuple[float, float, float, float] = (0.25, 0.25, 0.25, 0.25)

    def __post_init__(self):
        lo, hi = self.utterances_per_session
        if self.n_sessions < 1 or lo < 1 or hi < lo:
            raise ValidationError("n_sessions and utterance range must be positive and ordered")
        if min(self.text_dim, self.audio_dim, self.video_dim) < 1:
            raise ValidationError("embedding dims must be >= 1")
        if min(self.text_signal, self.audio_signal, self.video_signal) < 0:
            raise ValidationError("signal strengths must be >= 0")
        if not (self.noise_sigma > 0):
            raise ValidationError("noise_sigma must be > 0")
        if self.session_noise_sigma < 0:
            raise ValidationError("session_noise_sigma must be >= 0")
        if len(self.class_priors) != 4 or any(p < 0 for p in self.class_priors):
            raise ValidationError("class_priors must be 4 non-negative probabilities")
        if abs(sum(self.class_priors) - 1.0) > 1e-12:
            raise ValidationError("class_priors must sum to 1")

    def dim(self, modality: str) -> int:
        return {"text": self.text_dim, "audio": self.audio_dim, "video": self.video_dim}[modality]

    def signal(self, modality: str) -> float:
        return {"text": self.text_signal, "audio": self.audio_signal, "video": self.video_signal}[modality]

    def to_dict(self) -> dict:
        return {
            "n_sessions": self.n_sessions,
            "seed": self.seed,
            "utterances_per_session": list(self.utterances_per_session),
            "text_dim": self.text_dim,
            "audio_dim": self.audio_dim,
            "video_dim": self.video_dim,
            "text_signal": self.text_signal,
            "audio_signal": self.audio_signal,
            "video_signal": self.video_signal,
            "noise_sigma": self.noise_sigma,
            "session_noise_sigma": self.session_noise_sigma,
            "class_priors": list(self.class_priors),
        }

    @staticmethod
    def from_dict(d: dict) -> "SyntheticSpec":
        d = dict(d)
        if "utterances_per_session" in d:
            d["utterances_per_session"] = tuple(d["utterances_per_session"])
        if "class_priors" in d:
            d["class_priors"] = tuple(d["class_priors"])
        return SyntheticSpec(**d)


def split_for_id(session_id: int) -> str:
    """60/20/20 train/dev/test assignment by stable hash of the id."""
    bucket = stable_hash("split", session_id) % 100
    if bucket < 60:
        return "train"
    if bucket < 80:
        return "dev"
    return "test"


def class_directions(spec: SyntheticSpec, modality: str) -> np.ndarray:
    """Unit signal directions per latent class, orthogonal when dim allows."""
    dim = spec.dim(modality)
    rng = rng_for("directions", modality, seed=spec.seed)
    raw = rng.standard_normal((dim, 4))
    if dim >= 4:
        q, _ = np.linalg.qr(raw)
        return q.T[:4]
    return raw.T / np.linalg.norm(raw.T, axis=1, keepdims=True)


def oracle_embedding(
    spec: SyntheticSpec, modality: str, label: int, key: str, session_id: int | None = None
) -> np.ndarray:
    """Planted vector for one content key: class direction times signal, plus noise.

    Pure in its arguments; synthetic content keys are unique per session, so
    a store built from these vectors is a function of content. When
    ``session_noise_sigma`` is set, an extra per-session offset (independent
    across modalities) is shared by all of a session's chunks: a single
    modality cannot average it away, fusing modalities can.
    """
    dim = spec.dim(modality)
    direction = class_directions(spec, modality)[label]
    noise = rng_for("noise", modality, key, seed=spec.seed).normal(0.0, spec.noise_sigma, dim)
    vec = spec.signal(modality) * direction + noise
    if spec.session_noise_sigma > 0 and session_id is not None:
        vec = vec + rng_for("session-noise", modality, session_id, seed=spec.seed).normal(
            0.0, spec.session_noise_sigma, dim
        )
    return vec


_SYLLABLES = (
    "ba", "de", "ki", "lo", "mu", "na", "po", "ra", "su", "te",
    "vi", "wo", "ze", "cha", "dri", "fen", "gor", "hil", "jas", "kel",
)


def _word(rng: np.random.Generator) -> str:
    return "".join(rng.choice(_SYLLABLES) for _ in range(rng.integers(2, 4)))


def _utterance_text(rng: np.random.Generator, question: bool) -> str:
    words = " ".join(_word(rng) for _ in range(rng.integers(3, 9)))
    return words + ("?" if question else ".")


_DEP_MIDPOINTS = (2, 7, 12, 17, 22)
_PTSD_MIDPOINTS = (23, 37, 65)


def _backfill_scores(rng: np.random.Generator, label: int) -> tuple[int, int]:
    # Midpoint of a severity bin consistent with the latent binary labels.
    dep = label in (1, 3)
    ptsd = label in (2, 3)
    dep_bin = int(rng.choice([2, 3, 4] if dep else [0, 1]))
    ptsd_bin = 2 if ptsd else int(rng.choice([0, 1]))
    return _DEP_MIDPOINTS[dep_bin], _PTSD_MIDPOINTS[ptsd_bin]


def generate_synthetic(spec: SyntheticSpec) -> list[Session]:
    """Deterministic synthetic corpus whose latent class is recoverable.

    Each session draws a latent 4-way label from ``class_priors``; scores are
    back-filled so :func:`derive_labels` reproduces it exactly. Frame
    features carry the video-modality planted vectors; text/audio signal is
    reachable through :func:`oracle_embedding` keyed by chunk content.
    """
    rng = np.random.default_rng(spec.seed)
    lo, hi = spec.utterances_per_session
    sessions = []
    for sid in range(spec.n_sessions):
        label = int(rng.choice(4, p=spec.class_priors))
        n_utt = int(rng.integers(lo, hi + 1))
        utterances = []
        t = 0.0
        for idx in range(n_utt):
            speaker = SPEAKERS[idx % 2]
            duration = float(rng.uniform(1.5, 6.0))
            utterances.append(
                Utterance(
                    speaker=speaker,
                    text=_utterance_text(rng, question=speaker == "Interviewer"),
                    start_s=round(t, 3),
                    end_s=round(t + duration, 3),
                )
            )
            t += duration + float(rng.uniform(0.1, 0.8))

        frame_times, frame_rows = [], []
        for idx, u in enumerate(utterances):
            vec = oracle_embedding(spec, "video", label, f"video:{sid}:{idx}", session_id=sid)
            n_frames = int(rng.integers(1, 4))
            for f in range(n_frames):
                frac = (f + 1) / (n_frames + 1)
                frame_times.append(round(u.start_s + frac * (u.end_s - u.start_s), 4))
                frame_rows.append(vec)

        phq8, pclc = _backfill_scores(rng, label)
        sessions.append(
            Session(
                id=sid,
                utterances=tuple(utterances),
                phq8=phq8,
                pclc=pclc,
                split=split_for_id(sid),
                frame_times=np.asarray(frame_times),
                frame_features=np.asarray(frame_rows),
            )
        )
    return sessions
