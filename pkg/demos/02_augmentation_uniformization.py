"""Augmentation and frame-count uniformization on landmark sequences.

Augmentation draws one rigid transform per sample and applies it to every
frame; uniformization forces sequences to a dataset-wide average length.
"""

import numpy as np

from signenc import (
    AugmentParams,
    LandmarkSequence,
    UniformizationPlan,
    augment,
    derive_seed,
    uniformize,
)
from signenc.transforms import apply_rigid

rng = np.random.default_rng(0)
seq = LandmarkSequence(coords=rng.uniform(0.2, 0.8, size=(12, 126, 2)))

# one draw, applied to the whole sequence; the seed makes it reproducible
params = AugmentParams(rotation_deg=10, zoom=0.1, translate=0.05, flip_prob=0.5, seed=derive_seed(7, 1, "demo"))
out = augment(seq, params)
print("augmented:", out.coords.shape, "bounds", out.coords.min().round(3), out.coords.max().round(3))
print("same seed reproduces:", np.array_equal(out.coords, augment(seq, params).coords))

# identity parameters are a bit-exact no-op
identity = AugmentParams(rotation_deg=0, zoom=0, translate=0, flip_prob=0, seed=0)
print("identity is exact:", np.array_equal(augment(seq, identity).coords, seq.coords))

# the deterministic core is available directly; e.g. a quarter turn
point = LandmarkSequence(coords=np.array([[[1.0, 0.5]]]))
print("rotate (1.0, 0.5) by 90°:", apply_rigid(point, rotation_deg=90).coords[0, 0])

# horizontal flip mirrors x and is its own inverse on interior points
flipped = apply_rigid(point, flip=True)
print("flip x=1.0 ->", flipped.coords[0, 0, 0], "; flip again ->",
      apply_rigid(flipped, flip=True).coords[0, 0, 0])

# uniformization: short sequences repeat their last frame ...
short = LandmarkSequence(coords=rng.uniform(size=(5, 4, 2)))
grown = uniformize(short, UniformizationPlan(8))
print("grow 5 -> 8 frames; last three all equal final frame:",
      np.array_equal(grown.coords[5], grown.coords[7]))

# ... long ones keep evenly spaced frames (first and last always survive)
marker = LandmarkSequence(coords=np.tile(np.arange(10.0)[:, None, None] / 10, (1, 2, 2)))
shrunk = uniformize(marker, UniformizationPlan(6))
print("shrink 10 -> 6 keeps frames:", (shrunk.coords[:, 0, 0] * 10).astype(int).tolist())
