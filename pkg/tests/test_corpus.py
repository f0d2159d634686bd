"""Label derivation, corpus IO, and synthetic generation."""

import json

import numpy as np
import pytest

from modalfuse.corpus import (
    KNOWN_MISLABELED_IDS,
    Session,
    SyntheticSpec,
    Utterance,
    apply_label_repairs,
    class_directions,
    derive_labels,
    derive_multiclass,
    generate_synthetic,
    load_corpus,
    oracle_embedding,
    save_corpus,
    split_for_id,
)
from modalfuse.errors import ParseError, ValidationError
from modalfuse.svm import SmoSvmClassifier

from conftest import make_session


# --- label derivation ----------------------------------------------------------

def test_threshold_boundaries():
    assert derive_labels(9, 20).dep_binary is False
    assert derive_labels(9, 20).dep_severity == 1      # Mild
    assert derive_labels(10, 20).dep_binary is True
    assert derive_labels(10, 20).dep_severity == 2     # Moderate
    assert derive_labels(0, 44).ptsd_binary is False
    assert derive_labels(0, 44).ptsd_severity == 1     # Moderate severity 30-44
    assert derive_labels(0, 45).ptsd_binary is True
    assert derive_labels(0, 45).ptsd_severity == 2     # High severity 45-85


def test_minimum_scores():
    labels = derive_labels(0, 17)
    assert labels == derive_labels(0, 17)
    assert not labels.dep_binary and not labels.ptsd_binary
    assert labels.dep_severity == 0 and labels.ptsd_severity == 0
    assert labels.multiclass == 0


def test_multiclass_mapping():
    assert derive_multiclass(False, False) == 0
    assert derive_multiclass(True, False) == 1
    assert derive_multiclass(False, True) == 2
    assert derive_multiclass(True, True) == 3


def test_exhaustive_consistency_and_monotonicity():
    for phq8 in range(0, 25):
        for pclc in range(17, 86):
            labels = derive_labels(phq8, pclc)
            assert labels.dep_binary == (labels.dep_severity >= 2)
            assert labels.ptsd_binary == (labels.ptsd_severity == 2)
            assert labels.multiclass == derive_multiclass(labels.dep_binary, labels.ptsd_binary)
            if pclc > 17:
                assert labels.ptsd_severity >= derive_labels(phq8, pclc - 1).ptsd_severity
            if phq8 > 0:
                assert labels.dep_severity >= derive_labels(phq8 - 1, pclc).dep_severity


def test_out_of_range_scores():
    with pytest.raises(ValidationError):
        derive_labels(25, 20)
    with pytest.raises(ValidationError):
        derive_labels(5, 16)
    with pytest.raises(ValidationError):
        derive_labels(-1, 20)


# --- repairs --------------------------------------------------------------------

def test_repair_list_has_20_ids():
    assert len(KNOWN_MISLABELED_IDS) == 20
    assert 320 in KNOWN_MISLABELED_IDS and 709 in KNOWN_MISLABELED_IDS


def test_repair_reports_discrepancy():
    session = make_session([("Interviewer", "hello?"), ("Participant", "hi.")], sid=320, phq8=14)
    report = apply_label_repairs([session], external_dep_labels={320: False})
    assert report.repaired == 1 and report.repaired_ids == (320,)
    assert report.skipped == 19


def test_repair_empty_and_disjoint():
    session = make_session([("Interviewer", "hello?"), ("Participant", "hi.")], sid=5, phq8=14)
    assert apply_label_repairs([session], repair_ids=[]).repaired == 0
    report = apply_label_repairs([session])
    assert report.repaired == 0 and report.skipped == 20


def test_repair_consistent_label_is_verified():
    session = make_session([("Interviewer", "hello?"), ("Participant", "hi.")], sid=320, phq8=14)
    report = apply_label_repairs([session], external_dep_labels={320: True})
    assert report.repaired == 0 and 320 in report.verified_ids


# --- invariants on types ----------------------------------------------------------

def test_utterance_invariants():
    with pytest.raises(ValidationError):
        Utterance("Participant", "hi", 2.0, 1.0)
    with pytest.raises(ValidationError):
        Utterance("Participant", "   ", 0.0, 1.0)
    with pytest.raises(ValidationError):
        Utterance("Narrator", "hi", 0.0, 1.0)


def test_session_requires_sorted_utterances():
    items = (Utterance("Participant", "b", 5.0, 6.0), Utterance("Participant", "a", 0.0, 1.0))
    with pytest.raises(ValidationError):
        Session(id=1, utterances=items, phq8=0, pclc=17, split="train")


# --- corpus file round trip -------------------------------------------------------

def test_single_session_round_trip(tmp_path):
    session = make_session([("Interviewer", "hello?"), ("Participant", "hi.")],
                           frames=(np.array([0.5, 1.0]), np.array([[1.0, 2.0], [3.0, 0.5]])))
    path = tmp_path / "corpus.jsonl"
    save_corpus([session], path)
    loaded = load_corpus(path)
    assert len(loaded) == 1
    assert loaded[0].utterances == session.utterances
    assert np.array_equal(loaded[0].frame_features, session.frame_features)


def test_malformed_line_names_line_number(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": 1, "split": "train", "phq8": 0, "pclc": 17, "utterances": []}\n{oops\n')
    with pytest.raises(ParseError, match="bad.jsonl:2"):
        load_corpus(path)


def test_invariant_violation_on_load(tmp_path):
    record = {"id": 9, "split": "train", "phq8": 0, "pclc": 17,
              "utterances": [{"speaker": "Participant", "text": "hi", "start_s": 3.0, "end_s": 1.0}]}
    path = tmp_path / "bad.jsonl"
    path.write_text(json.dumps(record) + "\n")
    with pytest.raises(ValidationError):
        load_corpus(path)


def test_50_session_write_read_identity(tmp_path, small_synthetic):
    _, sessions = small_synthetic
    path = tmp_path / "c.jsonl"
    save_corpus(sessions, path)
    loaded = load_corpus(path)
    assert len(loaded) == len(sessions)
    for a, b in zip(loaded, sessions):
        assert a.id == b.id and a.utterances == b.utterances
        assert (a.phq8, a.pclc, a.split) == (b.phq8, b.pclc, b.split)
        assert np.array_equal(a.frame_times, b.frame_times)
        assert np.array_equal(a.frame_features, b.frame_features)


# --- synthetic generation ----------------------------------------------------------

def test_generation_is_byte_identical(tmp_path, small_synthetic):
    spec, sessions = small_synthetic
    again = generate_synthetic(spec)
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_corpus(sessions, p1)
    save_corpus(again, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_seed_changes_corpus(small_synthetic):
    spec, sessions = small_synthetic
    other = generate_synthetic(SyntheticSpec(**{**spec.to_dict(), "seed": spec.seed + 1}))
    assert any(a.utterances != b.utterances for a, b in zip(sessions, other))


def test_backfilled_scores_reproduce_latent_label(small_synthetic):
    spec, sessions = small_synthetic
    # labels derived from backfilled scores must match the planted video signal class
    directions = class_directions(spec, "video")
    for s in sessions[:10]:
        labels = s.labels
        pooled = s.frame_features.mean(axis=0)
        sims = directions @ pooled
        assert int(np.argmax(sims)) == labels.multiclass


def test_split_assignment_is_stable_and_covering(small_synthetic):
    _, sessions = small_synthetic
    assert all(split_for_id(s.id) == s.split for s in sessions)
    splits = {s.split for s in sessions}
    assert splits == {"train", "dev", "test"}


def test_spec_validation():
    with pytest.raises(ValidationError):
        SyntheticSpec(n_sessions=0, seed=1)
    with pytest.raises(ValidationError):
        SyntheticSpec(n_sessions=5, seed=1, class_priors=(0.5, 0.5, 0.25, 0.25))
    with pytest.raises(ValidationError):
        SyntheticSpec(n_sessions=5, seed=1, noise_sigma=0.0)


def test_oracle_embedding_pure_and_label_dependent():
    spec = SyntheticSpec(n_sessions=4, seed=9, text_dim=16)
    a = oracle_embedding(spec, "text", 1, "key-1")
    b = oracle_embedding(spec, "text", 1, "key-1")
    assert np.array_equal(a, b)
    assert not np.array_equal(a, oracle_embedding(spec, "text", 2, "key-1"))
    assert not np.array_equal(a, oracle_embedding(spec, "text", 1, "key-2"))


def test_strong_signal_linear_probe(small_synthetic):
    """Mean oracle embeddings of a strong-signal corpus separate linearly."""
    spec = SyntheticSpec(
        n_sessions=200, seed=42, utterances_per_session=(8, 14),
        text_dim=12, text_signal=1.5, noise_sigma=0.3,
    )
    sessions = generate_synthetic(spec)
    X, y, split = [], [], []
    for s in sessions:
        vecs = [oracle_embedding(spec, "text", s.labels.multiclass, f"u:{s.id}:{i}")
                for i in range(len(s.utterances))]
        X.append(np.mean(vecs, axis=0))
        y.append(int(s.labels.dep_binary))
        split.append(s.split)
    X, y, split = np.asarray(X), np.asarray(y), np.asarray(split)
    model = SmoSvmClassifier(kernel="linear", C=10.0).fit(X[split == "train"], y[split == "train"])
    test_mask = split == "test"
    pred = model.predict(X[test_mask])
    recalls = [np.mean(pred[y[test_mask] == c] == c) for c in (0, 1)]
    assert np.mean(recalls) >= 0.95
