"""Sequence-to-image encoding.

A T-frame, L-landmark sequence becomes one 3-channel image: rows are
landmarks, columns advance three frames at a time, and the three consecutive
frames of a column live in its color channels. The x coordinates fill the
left half of the image and the y coordinates the right half, each quantized
to [0, 255].
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .landmarks import LandmarkSequence

NETWORK_INPUT_SIZE = 224


class ImageFormatError(ValueError):
    """An encoded image does not satisfy the format's structural rules."""


@dataclass(eq=False)
class EncodedImage:
    """Quantized landmark image plus the frame counts needed to invert it."""

    pixels: np.ndarray   # (rows, cols, 3) uint8
    t_original: int      # frame count before padding
    t_padded: int        # frame count after padding to a multiple of 3
    source_id: str = ""

    @property
    def rows(self) -> int:
        return self.pixels.shape[0]

    @property
    def cols(self) -> int:
        return self.pixels.shape[1]


@dataclass(eq=False)
class NetworkInput:
    """Image resized to the network's square input, scaled to [0, 1]."""

    pixels: np.ndarray   # (size, size, 3) float32
    provenance: str = ""


def quantize(values):
    """Map [0, 1] reals to [0, 255] integers, rounding ties away from zero.

    Accepts scalars or arrays; scalars come back as ``int``.
    """
    arr = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > 1.0):
        raise ValueError("quantize expects values in [0, 1]")
    q = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    return int(q) if np.isscalar(values) or arr.ndim == 0 else q


def pad_frame_count(t: int) -> int:
    """Smallest multiple of 3 that is >= t."""
    return 3 * ((t + 2) // 3)


def encode(seq: LandmarkSequence) -> EncodedImage:
    """Encode a landmark sequence as a rows=L, cols=2*T'/3 image.

    Sequences whose length is not a multiple of 3 are padded by repeating
    the final frame; the original length is kept so decoding can drop the
    padding again.
    """
    coords = seq.coords
    if coords.ndim != 3 or coords.shape[2] != 2:
        raise ValueError(f"expected coordinates of shape (T, L, 2), got {coords.shape}")
    if not np.all(np.isfinite(coords)) or coords.min() < 0.0 or coords.max() > 1.0:
        raise ValueError("coordinates must lie in [0, 1]; clamp before encoding")
    t, l = coords.shape[:2]
    t_padded = pad_frame_count(t)
    if t_padded != t:
        tail = np.repeat(coords[-1:], t_padded - t, axis=0)
        coords = np.concatenate([coords, tail], axis=0)
    # (T', L, 2) -> per-axis (L, T') -> (L, T'/3, 3): channel k holds frame 3j+k
    x = coords[:, :, 0].T.reshape(l, t_padded // 3, 3)
    y = coords[:, :, 1].T.reshape(l, t_padded // 3, 3)
    pixels = quantize(np.concatenate([x, y], axis=1))
    return EncodedImage(pixels=pixels, t_original=t, t_padded=t_padded, source_id=seq.source_id)


def decode(img: EncodedImage) -> LandmarkSequence:
    """Invert :func:`encode` up to quantization (test oracle, not a data path)."""
    pixels = np.asarray(img.pixels)
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise ImageFormatError(f"expected an (L, cols, 3) image, got shape {pixels.shape}")
    l, cols = pixels.shape[:2]
    if cols % 2 != 0:
        raise ImageFormatError(f"image has odd column count {cols}; halves must match")
    if 3 * (cols // 2) != img.t_padded:
        raise ImageFormatError(
            f"column count {cols} is inconsistent with padded frame count {img.t_padded}"
        )
    if not (img.t_padded - 2 <= img.t_original <= img.t_padded):
        raise ImageFormatError(
            f"original frame count {img.t_original} inconsistent with padding {img.t_padded}"
        )
    half = cols // 2
    x = pixels[:, :half, :].reshape(l, img.t_padded).T
    y = pixels[:, half:, :].reshape(l, img.t_padded).T
    coords = np.stack([x, y], axis=2).astype(np.float64) / 255.0
    return LandmarkSequence(coords=coords[: img.t_original], source_id=img.source_id)


def _axis_positions(n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
    """Source indices and interpolation weights, corner centers aligned.

    Exact-integer positions get weight 0 so they copy their pixel bit-exactly
    (the neighbor index is clamped by the caller)."""
    if n_in == 1:
        return np.zeros(n_out, dtype=np.intp), np.zeros(n_out)
    src = np.minimum(np.arange(n_out) * ((n_in - 1) / (n_out - 1)), n_in - 1)
    lo = np.floor(src).astype(np.intp)
    return lo, src - lo


def resize_bilinear(pixels: np.ndarray, out_rows: int, out_cols: int) -> np.ndarray:
    """Bilinear resize with the align-corners convention, rows then columns."""
    arr = np.asarray(pixels, dtype=np.float64)
    r0, wr = _axis_positions(arr.shape[0], out_rows)
    wr = wr[:, None, None]
    arr = arr[r0] + wr * (arr[np.minimum(r0 + 1, arr.shape[0] - 1)] - arr[r0])
    c0, wc = _axis_positions(arr.shape[1], out_cols)
    wc = wc[None, :, None]
    arr = arr[:, c0] + wc * (arr[:, np.minimum(c0 + 1, arr.shape[1] - 1)] - arr[:, c0])
    return arr


def resize_to_input(img: EncodedImage, size: int = NETWORK_INPUT_SIZE) -> NetworkInput:
    """Resize an encoded image to the square network input and scale to [0, 1].

    Inputs larger than the target are accepted (and downscaled) but flagged
    with a warning: the encoding regime assumes the image only ever grows.
    """
    if img.rows > size or img.cols > size:
        warnings.warn(
            f"encoded image {img.rows}x{img.cols} exceeds network input {size}x{size}; "
            "resizing will lose information",
            RuntimeWarning,
            stacklevel=2,
        )
    out = resize_bilinear(img.pixels, size, size) / 255.0
    return NetworkInput(pixels=out.astype(np.float32), provenance=img.source_id)


def to_png_bytes(img: EncodedImage) -> bytes:
    """PNG bytes for visual inspection; pixel array remains the contract."""
    import io

    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(img.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(img: EncodedImage, path) -> None:
    from pathlib import Path

    Path(path).write_bytes(to_png_bytes(img))
