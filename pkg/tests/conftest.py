import json

import numpy as np
import pytest

from signenc.landmarks import LandmarkSequence


def make_person(base: float = 0.5, confidence: float = 0.9) -> dict:
    """One OpenPose person entry with distinguishable coordinate values."""
    def flat(count, offset):
        vals = []
        for i in range(count):
            vals += [base * 100 + offset + i, base * 50 + offset + i, confidence]
        return vals

    return {
        "pose_keypoints_2d": flat(25, 0),
        "face_keypoints_2d": flat(70, 1000),
        "hand_left_keypoints_2d": flat(21, 2000),
        "hand_right_keypoints_2d": flat(21, 3000),
    }


def make_document(people: list[dict]) -> bytes:
    return json.dumps({"version": 1.3, "people": people}).encode()


def random_sequence(rng: np.random.Generator, t: int, l: int, **kwargs) -> LandmarkSequence:
    return LandmarkSequence(coords=rng.uniform(size=(t, l, 2)), **kwargs)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240615)
