"""Encoding walkthrough: from a landmark sequence to an image and back.

Builds a toy sequence whose structure is easy to see in the encoded image:
one landmark sweeps left to right, one bobs up and down, one never moves.
"""

import numpy as np

from signenc import LandmarkSequence, decode, encode, quantize, resize_to_input
from signenc.encoding import save_png

T = 60
t = np.linspace(0.0, 1.0, T)

coords = np.zeros((T, 3, 2))
coords[:, 0] = np.stack([t, np.full(T, 0.5)], axis=1)                 # sweeps right
coords[:, 1] = np.stack([np.full(T, 0.5), 0.5 + 0.4 * np.sin(6 * np.pi * t)], axis=1)
coords[:, 2] = [0.25, 0.75]                                           # stationary

seq = LandmarkSequence(coords=coords, source_id="demo/three-landmarks")
img = encode(seq)

print(f"sequence: T={seq.num_frames} frames, L={seq.num_landmarks} landmarks")
print(f"encoded image: {img.rows} rows x {img.cols} cols x 3 channels")
print(f"  (padded {img.t_original} -> {img.t_padded} frames; left half = x, right half = y)")

# row 2 belongs to the stationary landmark: constant in each half
half = img.cols // 2
print("stationary landmark row, x half:", np.unique(img.pixels[2, :half]))
print("stationary landmark row, y half:", np.unique(img.pixels[2, half:]))

# the sweep landmark's x half runs dark -> bright
print("sweep landmark x half, first/last column:", img.pixels[0, 0].tolist(), img.pixels[0, half - 1].tolist())

# quantization maps [0, 1] to 8-bit values with ties away from zero
print("quantize(0.0, 0.5, 1.0) =", [quantize(v) for v in (0.0, 0.5, 1.0)])

# decoding inverts the encoding up to quantization (half a step of 1/255)
back = decode(img)
print("round-trip max error:", float(np.abs(back.coords - seq.coords).max()), "<=", 1 / 510)

# the network consumes a fixed-size square input in [0, 1]
net_input = resize_to_input(img)
print("network input:", net_input.pixels.shape, net_input.pixels.dtype)

save_png(img, "demo_encoding.png")
print("wrote demo_encoding.png (rows = landmarks, columns = time, halves = x|y)")
