import numpy as np
import pytest

from modalfuse.corpus import Session, SyntheticSpec, Utterance, generate_synthetic


def make_session(turns, sid=1, phq8=5, pclc=20, split="train", frames=None):
    """Build a session from (speaker, text) pairs with 2-second turns."""
    utterances = []
    t = 0.0
    for speaker, text in turns:
        utterances.append(Utterance(speaker, text, t, t + 2.0))
        t += 2.5
    frame_times = frame_features = None
    if frames is not None:
        frame_times, frame_features = frames
    return Session(
        id=sid, utterances=tuple(utterances), phq8=phq8, pclc=pclc, split=split,
        frame_times=frame_times, frame_features=frame_features,
    )


@pytest.fixture
def fig1_session():
    """The interviewer/participant dialogue behind the QA-format example."""
    turns = [
        ("Interviewer", "How are you doing today?"),
        ("Participant", "Good."),
        ("Interviewer", "What's good?"),
        ("Interviewer", "Where are you from originally?"),
        ("Participant", "Atlanta, Georgia."),
        ("Interviewer", "Really? Why'd you move to LA?"),
        ("Participant", "My parents are from here."),
        ("Interviewer", "How do you like LA?"),
        ("Participant", "I love it."),
        ("Interviewer", "What are some things you really like about LA?"),
        ("Participant", "I like the weather."),
        ("Participant", "I like the opportunities."),
    ]
    return make_session(turns)


@pytest.fixture(scope="session")
def small_synthetic():
    spec = SyntheticSpec(
        n_sessions=50, seed=123, utterances_per_session=(12, 20),
        text_dim=8, audio_dim=6, video_dim=5,
        text_signal=2.0, audio_signal=2.0, video_signal=2.0,
        noise_sigma=0.3,
    )
    return spec, generate_synthetic(spec)
