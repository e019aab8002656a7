"""Keypoint ingestion: per-frame pose JSON -> landmark files -> manifest.

Fabricates a tiny keypoint tree in the pose-estimator demo format (one JSON
per frame with flat [x, y, confidence] arrays), then walks the same path the
`signenc ingest` command uses.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from signenc import (
    build_manifest,
    carry_forward,
    parse_keypoint_file,
    save_manifest,
    select_landmarks,
    write_landmark_file,
)
from signenc.landmarks import LandmarkSequence, SegmentAnnotation, segment_takes


def fake_frame_json(step: int) -> bytes:
    def part(count, drift):
        vals = []
        for i in range(count):
            vals += [300 + drift + 2 * i + 3 * step, 200 + drift + i, 0.9]
        return vals

    person = {
        "pose_keypoints_2d": part(25, 0),
        "face_keypoints_2d": part(70, 50),
        "hand_left_keypoints_2d": part(21, 100),
        "hand_right_keypoints_2d": part(21, 150),
    }
    return json.dumps({"version": 1.3, "people": [person]}).encode()


root = Path(tempfile.mkdtemp())

# one recording of 40 frames
frames = []
for step in range(40):
    raw = parse_keypoint_file(fake_frame_json(step), frame_index=step)
    frames.append(select_landmarks(raw, frame_width=640, frame_height=480))
seq = carry_forward(LandmarkSequence.from_frames(frames, fps=30.0, source_id="vid1"))
print(f"parsed sequence: {seq.num_frames} frames x {seq.num_landmarks} landmarks, "
      f"coords in [{seq.coords.min():.2f}, {seq.coords.max():.2f}]")

# multi-take recordings are cut around annotated ranges, padded by 15 frames
annotations = [
    SegmentAnnotation("vid1", "wave", 5, 10),
    SegmentAnnotation("vid1", "wave", 25, 30),
]
samples, errors = segment_takes(seq, annotations, pad=15, signer="signer00")
print(f"segmented {len(samples)} takes ({len(errors)} errors); "
      f"frame counts {[s.sequence.num_frames for s in samples]}")

# write the landmark files and index them
for sample in samples:
    target = root / sample.signer / sample.label / f"{sample.take:03d}.slm"
    target.parent.mkdir(parents=True, exist_ok=True)
    write_landmark_file(sample.sequence, target)
manifest = build_manifest(root)
save_manifest(manifest, root / "manifest.json")
print(f"manifest: {len(manifest.samples)} samples, classes {manifest.classes}, "
      f"signers {manifest.signers}")
print(f"dataset written to {root}")
