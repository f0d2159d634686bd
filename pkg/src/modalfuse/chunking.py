"""Data-formatting strategies over timestamped interview sessions.

An interview is reshaped into model inputs four ways: the whole transcript
as one block, a question/answer restructuring, overlapping windows over
utterances or QA pairs, and per-answer timesteps. Audio spans and pooled
video features are aligned to the same windows so that every modality of a
session yields the same chunk count.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import Session, Utterance
from .errors import ParameterError, ValidationError

__all__ = [
    "Chunk",
    "ChunkedSession",
    "QAPair",
    "Window",
    "align_video_chunks",
    "answer_chunks",
    "audio_spans_for_chunks",
    "chunk_text",
    "concatenated_answers",
    "extract_qa_pairs",
    "format_whole_interview",
    "load_chunked",
    "pool_video_per_utterance",
    "save_chunked",
    "sum_answer_vectors",
    "window_indices",
]


@dataclass(frozen=True)
class Window:
    """Half-open index range [start_idx, end_idx) over a session's items."""

    start_idx: int
    end_idx: int

    def __post_init__(self):
        if not (0 <= self.start_idx < self.end_idx):
            raise ValidationError(f"invalid window [{self.start_idx}, {self.end_idx})")

    def __len__(self) -> int:
        return self.end_idx - self.start_idx


@dataclass(frozen=True)
class QAPair:
    question: str
    answer: str
    span: tuple[float, float]


@dataclass(frozen=True)
class Chunk:
    text: str
    time_span: tuple[float, float]
    item_indices: tuple[int, ...]


@dataclass(frozen=True)
class ChunkedSession:
    session_id: int
    format_name: str
    chunks: tuple[Chunk, ...]

    @property
    def n_chunks(self) -> int:
        return len(self.chunks)


def window_indices(n_items: int, window: int, overlap: int) -> list[Window]:
    """Overlapping sliding windows covering every index exactly.

    Starts advance by ``window - overlap``; window ends are clamped to
    ``n_items`` and a final partial window is kept only if it contributes an
    index not covered by any earlier window.
    """
    if n_items < 1:
        raise ParameterError("n_items must be >= 1")
    if window < 1:
        raise ParameterError("window must be >= 1")
    if not (0 <= overlap < window):
        raise ParameterError(f"overlap must satisfy 0 <= overlap < window, got {overlap}/{window}")
    step = window - overlap
    windows = []
    covered_end = 0
    for start in range(0, n_items, step):
        end = min(start + window, n_items)
        if windows and end <= covered_end:
            break
        windows.append(Window(start, end))
        covered_end = end
        if end == n_items:
            break
    return windows


def _merge_speaker_blocks(utterances: Sequence[Utterance]) -> list[tuple[str, str, float, float]]:
    # Consecutive same-speaker utterances collapse to one (speaker, text, start, end) block.
    blocks = []
    for u in utterances:
        if blocks and blocks[-1][0] == u.speaker:
            speaker, text, start, _ = blocks[-1]
            blocks[-1] = (speaker, f"{text} {u.text}", start, u.end_s)
        else:
            blocks.append((u.speaker, u.text, u.start_s, u.end_s))
    return blocks


def extract_qa_pairs(session: Session) -> list[QAPair]:
    """Question/answer pairs: each interviewer block with the participant block after it.

    Consecutive same-speaker utterances are merged first; a trailing question
    with no answer is dropped. A session with no interviewer turns yields an
    empty list with a warning.
    """
    blocks = _merge_speaker_blocks(session.utterances)
    if not any(speaker == "Interviewer" for speaker, *_ in blocks):
        warnings.warn(f"session {session.id}: no interviewer utterances, no QA pairs", stacklevel=2)
        return []
    pairs = []
    question = None
    for speaker, text, start, end in blocks:
        if speaker == "Interviewer":
            question = (text, start)
        elif question is not None:
            pairs.append(QAPair(question=question[0], answer=text, span=(question[1], end)))
            question = None
    return pairs


def format_whole_interview(session: Session, qa_mode: bool = False) -> str:
    """The full interview as one text block, speaker-tagged or QA-numbered."""
    if qa_mode:
        parts = [
            f"Question {k}: {p.question}\nAnswer {k}: {p.answer}"
            for k, p in enumerate(extract_qa_pairs(session), start=1)
        ]
        return "\n\n".join(parts)
    return "\n".join(f"{u.speaker}: {u.text}" for u in session.utterances)


def _item_views(session: Session, unit: str) -> list[tuple[str, float, float]]:
    if unit == "utterance":
        return [(f"{u.speaker}: {u.text}", u.start_s, u.end_s) for u in session.utterances]
    if unit == "qa":
        return [
            (f"Question: {p.question} Answer: {p.answer}", p.span[0], p.span[1])
            for p in extract_qa_pairs(session)
        ]
    raise ParameterError(f"unknown chunking unit {unit!r}")


def _render_chunks(items: list[tuple[str, float, float]], windows: Iterable[Window]) -> tuple[Chunk, ...]:
    chunks = []
    for w in windows:
        selected = items[w.start_idx:w.end_idx]
        chunks.append(
            Chunk(
                text="\n".join(text for text, *_ in selected),
                time_span=(selected[0][1], selected[-1][2]),
                item_indices=tuple(range(w.start_idx, w.end_idx)),
            )
        )
    return tuple(chunks)


def chunk_text(session: Session, unit: str, window: int, overlap: int) -> ChunkedSession:
    """Windowed chunks over utterances (both speakers) or QA pairs."""
    items = _item_views(session, unit)
    name = f"{unit}_w{window}_o{overlap}"
    if not items:
        return ChunkedSession(session.id, name, ())
    windows = window_indices(len(items), window, overlap)
    return ChunkedSession(session.id, name, _render_chunks(items, windows))


def answer_chunks(session: Session) -> ChunkedSession:
    """Each merged participant answer as its own timestep."""
    items = [
        (text, start, end)
        for speaker, text, start, end in _merge_speaker_blocks(session.utterances)
        if speaker == "Participant"
    ]
    if not items:
        return ChunkedSession(session.id, "answer_chunks", ())
    windows = window_indices(len(items), 1, 0)
    return ChunkedSession(session.id, "answer_chunks", _render_chunks(items, windows))


def concatenated_answers(session: Session) -> Chunk:
    """All participant speech joined into a single block."""
    items = [
        (text, start, end)
        for speaker, text, start, end in _merge_speaker_blocks(session.utterances)
        if speaker == "Participant"
    ]
    if not items:
        raise ParameterError(f"session {session.id} has no participant utterances")
    return Chunk(
        text="\n".join(text for text, *_ in items),
        time_span=(items[0][1], items[-1][2]),
        item_indices=tuple(range(len(items))),
    )


def audio_spans_for_chunks(chunked: ChunkedSession) -> list[tuple[float, float]]:
    """One time span per chunk; overlapping windows give overlapping spans."""
    if not chunked.chunks:
        raise ParameterError(f"session {chunked.session_id}: no chunks to span")
    return [c.time_span for c in chunked.chunks]


def pool_video_per_utterance(
    frame_times: np.ndarray,
    frames: np.ndarray,
    utterances: Sequence[Utterance],
) -> tuple[np.ndarray, np.ndarray]:
    """Elementwise max of frame features within each utterance's time span.

    Returns the pooled (n_utterances, n_features) matrix and a presence mask;
    utterances containing no frames get a zero row and a False mask entry.
    """
    times = np.asarray(frame_times, dtype=np.float64)
    feats = np.asarray(frames, dtype=np.float64)
    if feats.ndim != 2 or times.ndim != 1 or times.shape[0] != feats.shape[0]:
        raise ValidationError("frames must be a 2-D matrix with one timestamp per row")
    if np.any(np.diff(times) < 0):
        raise ValidationError("frame timestamps must be sorted")
    n_features = feats.shape[1]
    pooled = np.zeros((len(utterances), n_features))
    mask = np.zeros(len(utterances), dtype=bool)
    for i, u in enumerate(utterances):
        lo = np.searchsorted(times, u.start_s, side="left")
        hi = np.searchsorted(times, u.end_s, side="right")
        if hi > lo:
            pooled[i] = feats[lo:hi].max(axis=0)
            mask[i] = True
    return pooled, mask


def align_video_chunks(per_utterance: np.ndarray, windows: Sequence[Window]) -> list[np.ndarray]:
    """Slice pooled per-utterance rows into the given windows."""
    per_utterance = np.asarray(per_utterance, dtype=np.float64)
    n = per_utterance.shape[0]
    out = []
    for w in windows:
        if w.end_idx > n:
            raise ParameterError(f"window [{w.start_idx}, {w.end_idx}) out of range for {n} rows")
        out.append(per_utterance[w.start_idx:w.end_idx])
    return out


def sum_answer_vectors(vectors: Sequence[np.ndarray]) -> np.ndarray:
    """Elementwise sum of same-dimension vectors."""
    if len(vectors) == 0:
        raise ParameterError("cannot sum an empty list of vectors")
    arrays = [np.asarray(v, dtype=np.float64) for v in vectors]
    dim = arrays[0].shape
    if any(a.shape != dim for a in arrays):
        raise ParameterError("vector dimension mismatch")
    return np.sum(arrays, axis=0)


def save_chunked(sessions: Iterable[ChunkedSession], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for cs in sessions:
            record = {
                "session_id": cs.session_id,
                "format_name": cs.format_name,
                "chunks": [
                    {"text": c.text, "time_span": list(c.time_span), "item_indices": list(c.item_indices)}
                    for c in cs.chunks
                ],
            }
            fh.write(json.dumps(record, ensure_ascii=False))
            fh.write("\n")


def load_chunked(path: str | Path) -> list[ChunkedSession]:
    path = Path(path)
    out = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            d = json.loads(line)
            out.append(
                ChunkedSession(
                    session_id=d["session_id"],
                    format_name=d["format_name"],
                    chunks=tuple(
                        Chunk(c["text"], tuple(c["time_span"]), tuple(c["item_indices"]))
                        for c in d["chunks"]
                    ),
                )
            )
    return out
