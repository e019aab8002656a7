"""Landmark-space augmentation and frame-count uniformization.

Augmentation draws one rigid transform per sample (flip, rotation about the
frame center, zoom, translation) and applies it to every frame, so a sign's
internal motion is preserved. Uniformization stretches or shrinks sequences
to a dataset-wide target length.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .landmarks import (
    DEFAULT_BODY_KEEP,
    LANDMARK_COUNT,
    DatasetManifest,
    LandmarkSequence,
    SampleRef,
    flip_permutation,
)


@dataclass(frozen=True)
class AugmentParams:
    """Sampling ranges for one augmentation draw plus the seed that fixes it.

    rotation_deg, zoom and translate are half-ranges: the draw is uniform in
    [-rotation_deg, rotation_deg], [1 - zoom, 1 + zoom] and
    [-translate, translate] per axis. flip_prob is the horizontal mirror
    probability; swap_lr additionally exchanges left/right landmark
    identities when the mirror fires.
    """

    rotation_deg: float = 10.0
    zoom: float = 0.1
    translate: float = 0.05
    flip_prob: float = 0.5
    seed: int = 0
    swap_lr: bool = False

    def __post_init__(self):
        if self.rotation_deg < 0:
            raise ValueError("rotation_deg must be >= 0")
        if not 0.0 <= self.zoom < 1.0:
            raise ValueError("zoom must be in [0, 1)")
        if self.translate < 0:
            raise ValueError("translate must be >= 0")
        if not 0.0 <= self.flip_prob <= 1.0:
            raise ValueError("flip_prob must be in [0, 1]")


@dataclass(frozen=True)
class UniformizationPlan:
    """Dataset-wide target frame count."""

    target_frames: int

    def __post_init__(self):
        if self.target_frames < 1:
            raise ValueError("target_frames must be >= 1")


def derive_seed(*parts) -> int:
    """Stable 63-bit seed from ordered parts (run seed, epoch, sample id, ...).

    Hash-based so augmentation draws do not depend on iteration order and
    reproduce across processes.
    """
    token = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def apply_rigid(
    seq: LandmarkSequence,
    *,
    flip: bool = False,
    rotation_deg: float = 0.0,
    scale: float = 1.0,
    translate: tuple[float, float] = (0.0, 0.0),
    swap_lr: bool = False,
    body_keep: Sequence[int] = DEFAULT_BODY_KEEP,
) -> LandmarkSequence:
    """Apply one fixed rigid transform to every frame of a sequence.

    The mirror (x -> 1 - x, optionally with left/right identity swap) runs
    first, then counter-clockwise rotation and zoom about the frame center
    (0.5, 0.5), then translation; results are clamped to [0, 1]. Identity
    sub-steps are skipped entirely, not applied as no-ops: the -0.5/+0.5
    centering round trip is not bit-exact in floating point.
    """
    theta = math.radians(rotation_deg)
    dx, dy = translate
    rotate_zoom = theta != 0.0 or scale != 1.0
    shift = dx != 0.0 or dy != 0.0
    if not flip and not rotate_zoom and not shift:
        return seq.with_coords(seq.coords.copy())

    coords = seq.coords.copy()
    if flip:
        coords[:, :, 0] = 1.0 - coords[:, :, 0]
        if swap_lr:
            if seq.num_landmarks != LANDMARK_COUNT:
                raise ValueError(
                    "swap_lr needs the canonical 126-landmark layout, "
                    f"got {seq.num_landmarks} landmarks"
                )
            coords = coords[:, flip_permutation(body_keep), :]
    if rotate_zoom:
        centered = coords - 0.5
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        x = centered[:, :, 0]
        y = centered[:, :, 1]
        rotated = np.stack([cos_t * x - sin_t * y, sin_t * x + cos_t * y], axis=2)
        coords = scale * rotated + 0.5
    if shift:
        coords = coords + np.array([dx, dy])
    return seq.with_coords(np.clip(coords, 0.0, 1.0))


def augment(
    seq: LandmarkSequence,
    params: AugmentParams,
    body_keep: Sequence[int] = DEFAULT_BODY_KEEP,
) -> LandmarkSequence:
    """Apply one random rigid transform to every frame of a sequence.

    Draw order is fixed (flip, rotation, zoom, dx, dy) so the seed pins the
    transform; see :func:`apply_rigid` for the geometry. Identity draws
    return the input coordinates bit-exactly.
    """
    rng = np.random.default_rng(params.seed)
    flip = bool(rng.random() < params.flip_prob)
    rotation = rng.uniform(-params.rotation_deg, params.rotation_deg)
    scale = rng.uniform(1.0 - params.zoom, 1.0 + params.zoom)
    dx = rng.uniform(-params.translate, params.translate)
    dy = rng.uniform(-params.translate, params.translate)
    return apply_rigid(
        seq,
        flip=flip,
        rotation_deg=rotation,
        scale=scale,
        translate=(dx, dy),
        swap_lr=params.swap_lr,
        body_keep=body_keep,
    )


def compute_target(
    samples: DatasetManifest | Iterable[SampleRef],
) -> UniformizationPlan:
    """Target frame count: the mean sequence length, rounded half-up, min 1."""
    refs = samples.samples if isinstance(samples, DatasetManifest) else tuple(samples)
    if not refs:
        raise ValueError("cannot compute a frame target from zero samples")
    total = sum(r.frame_count for r in refs)
    n = len(refs)
    # floor(total/n + 1/2) in exact integer arithmetic
    target = (2 * total + n) // (2 * n)
    return UniformizationPlan(target_frames=max(1, target))


def uniformize(seq: LandmarkSequence, plan: UniformizationPlan) -> LandmarkSequence:
    """Force a sequence to the target length.

    Short sequences repeat their final frame; long ones keep frames at evenly
    spaced indices (first and last always survive). Already-conforming
    sequences pass through unchanged, which makes the operation idempotent.
    """
    t = seq.num_frames
    target = plan.target_frames
    if t == target:
        return seq
    if t < target:
        idx = list(range(t)) + [t - 1] * (target - t)
    elif target == 1:
        idx = [0]
    else:
        # round(k * (t-1) / (target-1)) half-up, in exact integer arithmetic
        step_num, step_den = t - 1, target - 1
        idx = [(2 * k * step_num + step_den) // (2 * step_den) for k in range(target)]
    return replace(
        seq,
        coords=seq.coords[idx].copy(),
        validity=seq.validity[idx].copy(),
    )
