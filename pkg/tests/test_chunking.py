"""Windowing, QA pairing, chunk rendering, and modality alignment."""

import numpy as np
import pytest

from modalfuse.chunking import (
    Window,
    align_video_chunks,
    answer_chunks,
    audio_spans_for_chunks,
    chunk_text,
    concatenated_answers,
    extract_qa_pairs,
    format_whole_interview,
    load_chunked,
    pool_video_per_utterance,
    save_chunked,
    sum_answer_vectors,
    window_indices,
)
from modalfuse.errors import ParameterError, ValidationError

from conftest import make_session


# --- windows ---------------------------------------------------------------------

def ref_windows(n, w, o):
    """Brute-force enumerator: emit raw windows, keep those adding new indices."""
    step = w - o
    kept, covered = [], set()
    for start in range(0, n, step):
        end = min(start + w, n)
        indices = set(range(start, end))
        if indices - covered:
            kept.append((start, end))
            covered |= indices
    return kept


def test_hand_derived_23_10_4():
    ws = window_indices(23, 10, 4)
    assert [(w.start_idx, w.end_idx) for w in ws] == [(0, 10), (6, 16), (12, 22), (18, 23)]


def test_single_full_window():
    assert [(w.start_idx, w.end_idx) for w in window_indices(10, 10, 4)] == [(0, 10)]


def test_partial_window_adds_coverage():
    assert [(w.start_idx, w.end_idx) for w in window_indices(12, 10, 4)] == [(0, 10), (6, 12)]


def test_exhaustive_against_enumerator():
    for n in range(1, 51):
        for w in range(1, n + 1):
            for o in range(0, w):
                got = [(x.start_idx, x.end_idx) for x in window_indices(n, w, o)]
                assert got == ref_windows(n, w, o), (n, w, o)
                covered = set()
                for s, e in got:
                    assert e > s
                    covered |= set(range(s, e))
                assert covered == set(range(n)), (n, w, o)
                # consecutive windows share exactly o indices except possibly the last
                for (s1, e1), (s2, e2) in zip(got, got[1:]):
                    shared = len(set(range(s1, e1)) & set(range(s2, e2)))
                    if (s2, e2) != got[-1]:
                        assert shared == o, (n, w, o)


def test_window_parameter_errors():
    with pytest.raises(ParameterError):
        window_indices(0, 5, 2)
    with pytest.raises(ParameterError):
        window_indices(10, 5, 5)
    with pytest.raises(ParameterError):
        window_indices(10, 0, 0)


# --- QA pairing --------------------------------------------------------------------

def test_fig1_dialogue_pairs(fig1_session):
    pairs = extract_qa_pairs(fig1_session)
    assert len(pairs) == 5
    assert pairs[0].question == "How are you doing today?"
    assert pairs[0].answer == "Good."
    assert pairs[1].question == "What's good? Where are you from originally?"
    assert pairs[1].answer == "Atlanta, Georgia."
    assert pairs[4].answer == "I like the weather. I like the opportunities."


def test_participant_only_session_warns():
    session = make_session([("Participant", "alone."), ("Participant", "still alone.")])
    with pytest.warns(UserWarning):
        assert extract_qa_pairs(session) == []


def test_merge_rule_and_trailing_question():
    session = make_session([
        ("Interviewer", "Q1?"),
        ("Participant", "A1."),
        ("Participant", "A2."),
        ("Interviewer", "Q2?"),
        ("Participant", "A3."),
        ("Interviewer", "unanswered?"),
    ])
    pairs = extract_qa_pairs(session)
    assert [(p.question, p.answer) for p in pairs] == [("Q1?", "A1. A2."), ("Q2?", "A3.")]
    # span covers question start through answer end
    assert pairs[0].span == (0.0, 7.0)


def test_whole_interview_formats(fig1_session):
    qa = format_whole_interview(fig1_session, qa_mode=True)
    assert qa.startswith("Question 1: How are you doing today?\nAnswer 1: Good.")
    assert "Question 5:" in qa and "Question 6:" not in qa
    plain = format_whole_interview(fig1_session, qa_mode=False)
    assert plain.splitlines()[0] == "Interviewer: How are you doing today?"


def test_single_utterance_plain_format():
    session = make_session([("Participant", "just me.")])
    assert format_whole_interview(session) == "Participant: just me."


def test_unanswered_questions_excluded_from_numbering():
    session = make_session([
        ("Interviewer", "Q1?"), ("Participant", "A1."), ("Interviewer", "dangling?"),
    ])
    text = format_whole_interview(session, qa_mode=True)
    assert "Question 1:" in text and "Question 2:" not in text


# --- chunk rendering ----------------------------------------------------------------

def _n_utterance_session(n):
    return make_session([("Interviewer" if i % 2 == 0 else "Participant", f"utt {i}.") for i in range(n)])


def test_chunk_text_composes_with_windows():
    chunked = chunk_text(_n_utterance_session(23), "utterance", 10, 4)
    assert chunked.n_chunks == 4
    assert chunked.format_name == "utterance_w10_o4"
    assert chunked.chunks[0].item_indices == tuple(range(0, 10))
    assert chunked.chunks[-1].item_indices == tuple(range(18, 23))
    assert "utt 0." in chunked.chunks[0].text and "utt 9." in chunked.chunks[0].text
    starts = [c.time_span[0] for c in chunked.chunks]
    assert starts == sorted(starts)


def test_qa_chunks():
    turns = []
    for i in range(7):
        turns.append(("Interviewer", f"Q{i}?"))
        turns.append(("Participant", f"A{i}."))
    session = make_session(turns)
    single = chunk_text(session, "qa", 5, 2)  # 7 pairs -> windows [0,5),[3,7)
    assert single.n_chunks == 2
    five = chunk_text(make_session(turns[:10]), "qa", 5, 2)
    assert five.n_chunks == 1


def test_audio_spans_match_chunks():
    session = _n_utterance_session(23)
    chunked = chunk_text(session, "utterance", 10, 4)
    spans = audio_spans_for_chunks(chunked)
    assert len(spans) == 4
    assert spans == [c.time_span for c in chunked.chunks]
    # consecutive spans overlap in time because windows overlap
    assert spans[1][0] < spans[0][1]
    single = chunk_text(session, "utterance", 23, 0)
    assert audio_spans_for_chunks(single) == [single.chunks[0].time_span]


def test_answer_chunks_and_concatenated():
    session = make_session([
        ("Interviewer", "Q1?"), ("Participant", "A1."), ("Participant", "A1b."),
        ("Interviewer", "Q2?"), ("Participant", "A2."),
    ])
    chunks = answer_chunks(session)
    assert chunks.n_chunks == 2
    assert chunks.chunks[0].text == "A1. A1b."
    joined = concatenated_answers(session)
    assert joined.text == "A1. A1b.\nA2."


# --- video pooling ------------------------------------------------------------------

def test_pool_elementwise_max():
    session = make_session([("Participant", "one.")])
    times = np.array([0.5, 1.5])
    frames = np.array([[1.0, 5.0], [3.0, 2.0]])
    pooled, mask = pool_video_per_utterance(times, frames, session.utterances)
    assert np.array_equal(pooled, [[3.0, 5.0]])
    assert mask.tolist() == [True]


def test_pool_single_frame_and_empty():
    session = make_session([("Participant", "one."), ("Participant", "two.")])
    # second utterance spans [2.5, 4.5]; frame at 10 is outside both
    times = np.array([0.7, 10.0])
    frames = np.array([[2.0, 1.0], [9.0, 9.0]])
    pooled, mask = pool_video_per_utterance(times, frames, session.utterances)
    assert np.array_equal(pooled[0], [2.0, 1.0])
    assert np.array_equal(pooled[1], [0.0, 0.0])
    assert mask.tolist() == [True, False]


def test_pool_permutation_invariant_and_monotone():
    session = make_session([("Participant", "one.")])
    rng = np.random.default_rng(3)
    frames = rng.normal(size=(5, 4))
    times = np.linspace(0.1, 1.9, 5)
    base, _ = pool_video_per_utterance(times, frames, session.utterances)
    order = rng.permutation(5)
    permuted, _ = pool_video_per_utterance(times[np.argsort(times[order])], frames[order][np.argsort(times[order])], session.utterances)
    assert np.allclose(base, permuted)
    more, _ = pool_video_per_utterance(
        np.append(times, 1.95), np.vstack([frames, rng.normal(size=4)]), session.utterances
    )
    assert np.all(more >= base - 1e-15)


def test_pool_validation():
    session = make_session([("Participant", "one.")])
    with pytest.raises(ValidationError):
        pool_video_per_utterance(np.array([0.5]), np.array([1.0, 2.0]), session.utterances)
    with pytest.raises(ValidationError):
        pool_video_per_utterance(np.array([1.0, 0.5]), np.eye(2), session.utterances)


def test_align_video_chunks():
    rows = np.arange(46).reshape(23, 2).astype(float)
    windows = window_indices(23, 10, 4)
    mats = align_video_chunks(rows, windows)
    assert [m.shape[0] for m in mats] == [10, 10, 10, 5]
    assert np.array_equal(mats[0], rows[0:10])
    single = align_video_chunks(rows, window_indices(23, 23, 0))
    assert np.array_equal(single[0], rows)
    with pytest.raises(ParameterError):
        align_video_chunks(rows[:5], windows)


def test_timestep_alignment_across_modalities():
    """Text chunks, audio spans, and video chunks from one window set agree in count."""
    session = _n_utterance_session(23)
    chunked = chunk_text(session, "utterance", 10, 4)
    spans = audio_spans_for_chunks(chunked)
    video = align_video_chunks(np.zeros((23, 3)), window_indices(23, 10, 4))
    assert chunked.n_chunks == len(spans) == len(video)


# --- vector helpers ------------------------------------------------------------------

def test_sum_answer_vectors():
    assert np.array_equal(sum_answer_vectors([np.array([1.0, 2.0]), np.array([3.0, 4.0])]), [4.0, 6.0])
    v = np.array([2.5, -1.0])
    assert np.array_equal(sum_answer_vectors([v]), v)
    assert np.array_equal(sum_answer_vectors([v, -v]), [0.0, 0.0])
    with pytest.raises(ParameterError):
        sum_answer_vectors([])
    with pytest.raises(ParameterError):
        sum_answer_vectors([np.zeros(2), np.zeros(3)])


def test_chunked_serialization_round_trip(tmp_path):
    session = _n_utterance_session(12)
    chunked = [chunk_text(session, "utterance", 10, 4)]
    path = tmp_path / "chunks.jsonl"
    save_chunked(chunked, path)
    loaded = load_chunked(path)
    assert loaded == chunked
