"""Synthetic landmark datasets for desk-scale pipeline runs.

Each class is a distinct hand-trajectory motif (circle, waves, diagonal
sweep, hold-then-move) layered on a fixed neutral pose; signers vary
amplitude, phase and framing, takes vary length and add coordinate noise.
The generated tree uses the same landmark-file and manifest formats as
ingested data, so the full pipeline runs on it unchanged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .landmarks import (
    DatasetManifest,
    LandmarkSequence,
    build_manifest,
    save_manifest,
    write_landmark_file,
)
from .transforms import derive_seed

MOTIFS = ("circle", "vertical_wave", "horizontal_wave", "diagonal_sweep", "hold_then_move")

BASE_AMPLITUDE = 0.12

# Canonical-layout row blocks (14 body, 70 face, 21 + 21 hands).
_RIGHT_WRIST_ROW = 4     # body keep-list position of BODY_25 index 4
_RIGHT_ELBOW_ROW = 3
_LEFT_WRIST_ROW = 7
_LEFT_ELBOW_ROW = 6
_FACE_START = 14
_LEFT_HAND_START = 84
_RIGHT_HAND_START = 105


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape and randomness of a generated dataset."""

    n_classes: int = 5
    n_signers: int = 6
    takes_per_sign: int = 5
    frames_range: tuple[int, int] = (40, 80)
    noise_std: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if min(self.n_classes, self.n_signers, self.takes_per_sign) < 1:
            raise ValueError("class, signer and take counts must be >= 1")
        lo, hi = self.frames_range
        if not (1 <= lo <= hi):
            raise ValueError(f"invalid frames_range {self.frames_range}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


def base_pose() -> np.ndarray:
    """Neutral 126-landmark pose: head and torso centered, hands at rest."""
    body = np.array(
        [
            (0.50, 0.18),  # nose
            (0.50, 0.30),  # neck
            (0.40, 0.30), (0.36, 0.44), (0.38, 0.56),  # right arm
            (0.60, 0.30), (0.64, 0.44), (0.62, 0.56),  # left arm
            (0.50, 0.66), (0.45, 0.66), (0.55, 0.66),  # hip line
            (0.47, 0.16), (0.53, 0.16),  # eyes
            (0.44, 0.18),  # ear
        ]
    )
    angles = 2.0 * math.pi * np.arange(70) / 70.0
    face = np.stack(
        [0.50 + 0.055 * np.cos(angles), 0.18 + 0.07 * np.sin(angles)], axis=1
    )
    grid = np.stack(
        [(np.arange(21) % 5) * 0.008 - 0.016, (np.arange(21) // 5) * 0.008], axis=1
    )
    left_hand = np.array([0.62, 0.58]) + grid
    right_hand = np.array([0.38, 0.58]) + grid
    return np.concatenate([body, face, left_hand, right_hand], axis=0)


def _motif_offsets(motif: str, phase: np.ndarray) -> np.ndarray:
    """Unit-amplitude (dx, dy) trajectory for phases in cycles."""
    if motif == "circle":
        dx = np.cos(2.0 * math.pi * phase)
        dy = np.sin(2.0 * math.pi * phase)
    elif motif == "vertical_wave":
        dx = np.zeros_like(phase)
        dy = np.sin(2.0 * math.pi * phase)
    elif motif == "horizontal_wave":
        dx = np.sin(2.0 * math.pi * phase)
        dy = np.zeros_like(phase)
    elif motif == "diagonal_sweep":
        tri = 2.0 * np.abs(2.0 * np.mod(phase, 1.0) - 1.0) - 1.0
        dx = tri
        dy = tri
    elif motif == "hold_then_move":
        u = np.clip((phase - 0.5) * 2.0, 0.0, 1.0)
        dx = np.zeros_like(phase)
        dy = -(u * u * (3.0 - 2.0 * u))
    else:
        raise ValueError(f"unknown motif {motif!r}")
    return np.stack([dx, dy], axis=1)


def class_motif(class_index: int) -> tuple[str, int]:
    """Motif name and frequency multiplier of a class."""
    return MOTIFS[class_index % len(MOTIFS)], 1 + class_index // len(MOTIFS)


def _signer_profile(spec: SyntheticSpec, signer_index: int) -> dict:
    rng = np.random.default_rng(derive_seed(spec.seed, "signer", signer_index))
    return {
        "amp_scale": rng.uniform(0.85, 1.15),
        "phase": rng.uniform(0.0, 0.2),
        "shift": rng.uniform(-0.02, 0.02, size=2),
    }


def make_sequence(
    spec: SyntheticSpec, class_index: int, signer_index: int, take: int
) -> LandmarkSequence:
    """One synthetic take; with zero noise, takes of a (class, signer) pair
    sample the identical trajectory template at take-specific lengths."""
    motif, freq = class_motif(class_index)
    profile = _signer_profile(spec, signer_index)
    rng = np.random.default_rng(derive_seed(spec.seed, "take", signer_index, class_index, take))
    lo, hi = spec.frames_range
    t = int(rng.integers(lo, hi + 1))

    tau = np.linspace(0.0, 1.0, t) if t > 1 else np.zeros(1)
    offsets = _motif_offsets(motif, freq * tau + profile["phase"])
    offsets *= BASE_AMPLITUDE * profile["amp_scale"]

    coords = np.tile(base_pose(), (t, 1, 1))
    mirrored = offsets * np.array([-0.5, 0.5])
    coords[:, _RIGHT_HAND_START:, :] += offsets[:, None, :]
    coords[:, _RIGHT_WRIST_ROW, :] += offsets
    coords[:, _RIGHT_ELBOW_ROW, :] += 0.5 * offsets
    coords[:, _LEFT_HAND_START:_RIGHT_HAND_START, :] += mirrored[:, None, :]
    coords[:, _LEFT_WRIST_ROW, :] += mirrored
    coords[:, _LEFT_ELBOW_ROW, :] += 0.5 * mirrored
    coords += profile["shift"]
    if spec.noise_std > 0:
        coords += rng.normal(0.0, spec.noise_std, size=coords.shape)
    coords = np.clip(coords, 0.0, 1.0)
    return LandmarkSequence(
        coords=coords,
        fps=30.0,
        source_id=f"synthetic/{signer_name(signer_index)}/{class_name(class_index)}/{take}",
    )


def class_name(index: int) -> str:
    return f"sign{index:02d}"


def signer_name(index: int) -> str:
    return f"signer{index:02d}"


def generate_dataset(spec: SyntheticSpec, root: str | Path) -> DatasetManifest:
    """Write the full tree of landmark files plus manifest.json under root."""
    root = Path(root)
    for s in range(spec.n_signers):
        for c in range(spec.n_classes):
            out_dir = root / signer_name(s) / class_name(c)
            out_dir.mkdir(parents=True, exist_ok=True)
            for take in range(spec.takes_per_sign):
                seq = make_sequence(spec, c, s, take)
                write_landmark_file(seq, out_dir / f"{take:03d}.slm")
    manifest = build_manifest(root)
    save_manifest(manifest, root / "manifest.json")
    return manifest
