"""Pose-keypoint ingestion and dataset manifests.

Consumes per-frame keypoint JSON in the OpenPose demo output schema, selects
the 126-landmark subset used throughout this package (14 body + 70 face +
21 + 21 hand points), normalizes coordinates to [0, 1], segments multi-take
recordings, and indexes landmark datasets for signer-independent evaluation.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

BODY_TOTAL = 25
FACE_TOTAL = 70
HAND_TOTAL = 21

# Upper-body subset of the BODY_25 keypoints: nose, neck, both arms, hip
# line, eyes and one ear pair entry. The exact 14-element set is a project
# default, not an external standard; override via the `body_keep` config key.
DEFAULT_BODY_KEEP: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 12, 15, 16, 17)

LANDMARK_COUNT = 126

SLM_FORMAT = "slm-v1"
MANIFEST_FORMAT = "slm-manifest-v1"

KEYPOINT_FIELDS: tuple[tuple[str, int], ...] = (
    ("pose_keypoints_2d", BODY_TOTAL),
    ("face_keypoints_2d", FACE_TOTAL),
    ("hand_left_keypoints_2d", HAND_TOTAL),
    ("hand_right_keypoints_2d", HAND_TOTAL),
)

# Left/right partner indices inside BODY_25 (subset applies after body_keep).
BODY_FLIP_PAIRS: tuple[tuple[int, int], ...] = (
    (2, 5), (3, 6), (4, 7), (9, 12), (10, 13), (11, 14),
    (15, 16), (17, 18), (19, 22), (20, 23), (21, 24),
)

# 70-point face model: 68 contour/feature points plus two pupils.
FACE_FLIP_PAIRS: tuple[tuple[int, int], ...] = (
    (0, 16), (1, 15), (2, 14), (3, 13), (4, 12), (5, 11), (6, 10), (7, 9),
    (17, 26), (18, 25), (19, 24), (20, 23), (21, 22),
    (31, 35), (32, 34),
    (36, 45), (37, 44), (38, 43), (39, 42), (40, 47), (41, 46),
    (48, 54), (49, 53), (50, 52), (55, 59), (56, 58),
    (60, 64), (61, 63), (65, 67),
    (68, 69),
)


class KeypointParseError(ValueError):
    """Keypoint document is not valid JSON."""

    def __init__(self, message: str, offset: int = -1):
        super().__init__(message)
        self.offset = offset


class KeypointSchemaError(ValueError):
    """Keypoint document parsed but does not match the expected schema."""


class LandmarkFileError(ValueError):
    """A landmark (.slm) file is malformed."""


class ManifestError(ValueError):
    """A dataset tree cannot be indexed into a manifest."""


@dataclass(frozen=True, eq=False)
class RawKeypointFrame:
    """Keypoints of one selected person in one frame, in pixel coordinates.

    Each part is an (N, 3) array of x, y, confidence rows. A frame with no
    detected person carries all zeros and ``missing=True``.
    """

    body: np.ndarray
    face: np.ndarray
    left_hand: np.ndarray
    right_hand: np.ndarray
    frame_index: int = 0
    missing: bool = False

    def parts(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return (self.body, self.face, self.left_hand, self.right_hand)


@dataclass(frozen=True, eq=False)
class LandmarkFrame:
    """One frame of the canonical 126-landmark layout, normalized to [0, 1]."""

    coords: np.ndarray    # (L, 2) float64
    validity: np.ndarray  # (L,) bool, source confidence > 0


@dataclass(eq=False)
class LandmarkSequence:
    """A per-sign sequence of landmark frames with a shared layout."""

    coords: np.ndarray    # (T, L, 2) float64
    validity: np.ndarray | None = None  # (T, L) bool, defaults to all-valid
    fps: float = 30.0
    source_id: str = ""

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim != 3 or coords.shape[2] != 2:
            raise ValueError(f"coords must have shape (T, L, 2), got {coords.shape}")
        if coords.shape[0] < 1:
            raise ValueError("a landmark sequence needs at least one frame")
        if self.validity is None:
            validity = np.ones(coords.shape[:2], dtype=bool)
        else:
            validity = np.asarray(self.validity, dtype=bool)
            if validity.shape != coords.shape[:2]:
                raise ValueError(
                    f"validity shape {validity.shape} does not match frames {coords.shape[:2]}"
                )
        self.coords = coords
        self.validity = validity

    @property
    def num_frames(self) -> int:
        return self.coords.shape[0]

    @property
    def num_landmarks(self) -> int:
        return self.coords.shape[1]

    def frame(self, index: int) -> LandmarkFrame:
        return LandmarkFrame(self.coords[index], self.validity[index])

    @property
    def frames(self) -> list[LandmarkFrame]:
        return [self.frame(i) for i in range(self.num_frames)]

    @classmethod
    def from_frames(
        cls,
        frames: Sequence[LandmarkFrame],
        fps: float = 30.0,
        source_id: str = "",
    ) -> "LandmarkSequence":
        if not frames:
            raise ValueError("cannot build a sequence from zero frames")
        sizes = {f.coords.shape[0] for f in frames}
        if len(sizes) != 1:
            raise ValueError(f"inconsistent landmark counts across frames: {sorted(sizes)}")
        coords = np.stack([f.coords for f in frames])
        validity = np.stack([f.validity for f in frames])
        return cls(coords=coords, validity=validity, fps=fps, source_id=source_id)

    def with_coords(self, coords: np.ndarray) -> "LandmarkSequence":
        return replace(self, coords=coords, validity=self.validity.copy())


@dataclass(frozen=True)
class SignSample:
    """A labeled landmark sequence attributed to one signer and take."""

    sequence: LandmarkSequence
    label: str
    signer: str
    take: int

    @property
    def sample_id(self) -> str:
        return f"{self.signer}/{self.label}/{self.take}"


@dataclass(frozen=True, order=True)
class SampleRef:
    """Manifest entry: where a sample lives plus its cheap metadata."""

    signer: str
    label: str
    take: int
    path: str          # POSIX path relative to the dataset root
    frame_count: int
    fps: float

    @property
    def sample_id(self) -> str:
        return f"{self.signer}/{self.label}/{self.take}"


@dataclass(frozen=True)
class DatasetManifest:
    """Index of all samples in a dataset plus closed label/signer vocabularies."""

    root: str
    samples: tuple[SampleRef, ...]
    classes: tuple[str, ...]
    signers: tuple[str, ...]


@dataclass(frozen=True)
class SegmentAnnotation:
    """Frame range of one sign repetition inside a longer recording."""

    video_id: str
    sign_label: str
    start_frame: int
    end_frame: int

    def __post_init__(self):
        if not (0 <= self.start_frame <= self.end_frame):
            raise ValueError(
                f"invalid annotation range [{self.start_frame}, {self.end_frame}] "
                f"for video {self.video_id!r}"
            )


def canonical_layout(body_keep: Sequence[int] = DEFAULT_BODY_KEEP) -> tuple[str, ...]:
    """Return the fixed landmark ordering as a tuple of names.

    Order is: the 14 kept body points, 70 face points, 21 left-hand points,
    21 right-hand points. All sequences and encoded images use this layout.
    """
    keep = _validated_body_keep(body_keep)
    names = [f"body_{i}" for i in keep]
    names += [f"face_{i}" for i in range(FACE_TOTAL)]
    names += [f"left_hand_{i}" for i in range(HAND_TOTAL)]
    names += [f"right_hand_{i}" for i in range(HAND_TOTAL)]
    return tuple(names)


def flip_permutation(body_keep: Sequence[int] = DEFAULT_BODY_KEEP) -> np.ndarray:
    """Landmark index permutation that exchanges left/right identities.

    Body pairs are swapped only when both partners are in the keep-set, face
    points follow the 70-point mirror table, and the two hand blocks swap
    wholesale. The permutation is an involution.
    """
    keep = _validated_body_keep(body_keep)
    perm = np.arange(LANDMARK_COUNT)
    pos = {idx: i for i, idx in enumerate(keep)}
    for a, b in BODY_FLIP_PAIRS:
        if a in pos and b in pos:
            perm[pos[a]], perm[pos[b]] = pos[b], pos[a]
    face0 = len(keep)
    for a, b in FACE_FLIP_PAIRS:
        perm[face0 + a], perm[face0 + b] = face0 + b, face0 + a
    left0 = face0 + FACE_TOTAL
    right0 = left0 + HAND_TOTAL
    perm[left0:left0 + HAND_TOTAL] = np.arange(right0, right0 + HAND_TOTAL)
    perm[right0:right0 + HAND_TOTAL] = np.arange(left0, left0 + HAND_TOTAL)
    return perm


def _validated_body_keep(body_keep: Sequence[int]) -> tuple[int, ...]:
    keep = tuple(int(i) for i in body_keep)
    if len(keep) != 14:
        raise ValueError(f"body keep-set must have 14 entries, got {len(keep)}")
    if len(set(keep)) != len(keep):
        raise ValueError("body keep-set contains duplicates")
    if any(i < 0 or i >= BODY_TOTAL for i in keep):
        raise ValueError(f"body keep-set indices must be in [0, {BODY_TOTAL})")
    return keep


def _person_part(person: dict, name: str, count: int) -> np.ndarray:
    values = person.get(name)
    if not isinstance(values, list):
        raise KeypointSchemaError(f'missing or non-array field "{name}"')
    if len(values) != 3 * count:
        raise KeypointSchemaError(
            f'field "{name}" has {len(values)} values, expected {3 * count}'
        )
    try:
        arr = np.asarray(values, dtype=np.float64).reshape(count, 3)
    except (TypeError, ValueError) as exc:
        raise KeypointSchemaError(f'non-numeric values in field "{name}"') from exc
    conf = arr[:, 2]
    if np.any(conf < 0.0) or np.any(conf > 1.0):
        raise KeypointSchemaError(f'confidences in field "{name}" outside [0, 1]')
    return arr


def _zero_frame(frame_index: int) -> RawKeypointFrame:
    return RawKeypointFrame(
        body=np.zeros((BODY_TOTAL, 3)),
        face=np.zeros((FACE_TOTAL, 3)),
        left_hand=np.zeros((HAND_TOTAL, 3)),
        right_hand=np.zeros((HAND_TOTAL, 3)),
        frame_index=frame_index,
        missing=True,
    )


def parse_keypoint_file(data: bytes | str, frame_index: int = 0) -> RawKeypointFrame:
    """Parse one per-frame keypoint JSON document.

    When several people are detected, the person with the highest total
    keypoint confidence is kept (the signer is assumed to dominate the
    frame). An empty "people" array yields an all-zero frame flagged as
    missing.

    Raises:
        KeypointParseError: malformed JSON (carries the byte offset).
        KeypointSchemaError: valid JSON that violates the keypoint schema.
    """
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise KeypointParseError(
            f"malformed keypoint JSON at byte {exc.pos}: {exc.msg}", offset=exc.pos
        ) from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("people"), list):
        raise KeypointSchemaError('missing or non-array field "people"')
    people = doc["people"]
    if not people:
        return _zero_frame(frame_index)

    candidates = []
    for person in people:
        if not isinstance(person, dict):
            raise KeypointSchemaError('entries of "people" must be objects')
        parts = tuple(_person_part(person, name, count) for name, count in KEYPOINT_FIELDS)
        score = sum(float(part[:, 2].sum()) for part in parts)
        candidates.append((score, parts))
    best = max(range(len(candidates)), key=lambda i: candidates[i][0])
    body, face, left, right = candidates[best][1]
    return RawKeypointFrame(
        body=body, face=face, left_hand=left, right_hand=right, frame_index=frame_index
    )


def select_landmarks(
    frame: RawKeypointFrame,
    frame_width: float,
    frame_height: float,
    body_keep: Sequence[int] = DEFAULT_BODY_KEEP,
) -> LandmarkFrame:
    """Reduce a raw keypoint frame to the canonical 126-landmark layout.

    Coordinates are divided by the frame dimensions and clamped to [0, 1];
    confidence is dropped after recording per-landmark validity.
    """
    if frame_width <= 0 or frame_height <= 0:
        raise ValueError(f"frame dimensions must be positive, got {frame_width}x{frame_height}")
    keep = list(_validated_body_keep(body_keep))
    stacked = np.concatenate(
        [frame.body[keep], frame.face, frame.left_hand, frame.right_hand], axis=0
    )
    validity = stacked[:, 2] > 0.0
    coords = stacked[:, :2] / np.array([frame_width, frame_height], dtype=np.float64)
    coords = np.clip(np.nan_to_num(coords, nan=0.0, posinf=1.0, neginf=0.0), 0.0, 1.0)
    return LandmarkFrame(coords=coords, validity=validity)


def carry_forward(seq: LandmarkSequence) -> LandmarkSequence:
    """Fill invalid landmarks with their last valid coordinates.

    A landmark with no prior valid observation is set to (0, 0). Validity
    flags are preserved so downstream code can still see what was observed.
    """
    t, l = seq.validity.shape
    frame_idx = np.where(seq.validity, np.arange(t)[:, None], -1)
    last_valid = np.maximum.accumulate(frame_idx, axis=0)
    gather = np.maximum(last_valid, 0)
    coords = seq.coords[gather, np.arange(l)[None, :], :]
    coords[last_valid < 0] = 0.0
    return replace(seq, coords=coords, validity=seq.validity.copy())


def segment_takes(
    frames: LandmarkSequence | Sequence[LandmarkFrame],
    annotations: Sequence[SegmentAnnotation],
    pad: int = 15,
    signer: str = "",
    fps: float = 30.0,
) -> tuple[list[SignSample], list[str]]:
    """Cut one recording into per-sign samples around annotated frame ranges.

    Each annotation yields the frames [max(0, start-pad), min(T-1, end+pad)],
    so samples may overlap. Takes of the same label are numbered in order of
    appearance. Annotations lying entirely outside the video are reported in
    the returned error list; the rest are still processed.
    """
    if isinstance(frames, LandmarkSequence):
        seq = frames
    else:
        seq = LandmarkSequence.from_frames(frames, fps=fps)
    if pad < 0:
        raise ValueError("pad must be >= 0")
    total = seq.num_frames
    samples: list[SignSample] = []
    errors: list[str] = []
    take_counter: dict[str, int] = {}
    for ann in annotations:
        if ann.start_frame >= total:
            errors.append(
                f"annotation {ann.video_id}:{ann.sign_label} "
                f"[{ann.start_frame}, {ann.end_frame}] lies outside a "
                f"{total}-frame video"
            )
            continue
        lo = max(0, ann.start_frame - pad)
        hi = min(total - 1, ann.end_frame + pad)
        take = take_counter.get(ann.sign_label, 0)
        take_counter[ann.sign_label] = take + 1
        sub = LandmarkSequence(
            coords=seq.coords[lo:hi + 1].copy(),
            validity=seq.validity[lo:hi + 1].copy(),
            fps=seq.fps,
            source_id=f"{ann.video_id}[{lo}:{hi}]",
        )
        samples.append(SignSample(sequence=sub, label=ann.sign_label, signer=signer, take=take))
    return samples, errors


def read_annotations_csv(path: str | Path) -> list[SegmentAnnotation]:
    """Read segment annotations from a CSV with the documented header."""
    import csv

    expected = ["video_id", "sign_label", "start_frame", "end_frame"]
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != expected:
            raise ValueError(
                f"annotation CSV must have header {','.join(expected)}, "
                f"got {reader.fieldnames}"
            )
        return [
            SegmentAnnotation(
                video_id=row["video_id"],
                sign_label=row["sign_label"],
                start_frame=int(row["start_frame"]),
                end_frame=int(row["end_frame"]),
            )
            for row in reader
        ]


# --- landmark (.slm) files -------------------------------------------------

def write_landmark_file(seq: LandmarkSequence, path: str | Path) -> None:
    """Write a sequence as a one-line JSON header plus flat binary payload."""
    t, l = seq.num_frames, seq.num_landmarks
    header = {
        "format": SLM_FORMAT,
        "frames": t,
        "landmarks": l,
        "fps": float(seq.fps),
        "source_id": seq.source_id,
    }
    payload = seq.coords.astype("<f4").tobytes() + np.packbits(seq.validity.ravel()).tobytes()
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n" + payload
    Path(path).write_bytes(blob)


def read_landmark_header(path: str | Path) -> dict:
    with open(path, "rb") as fh:
        line = fh.readline()
    return _parse_slm_header(line, path)


def _parse_slm_header(line: bytes, path: str | Path) -> dict:
    try:
        header = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise LandmarkFileError(f"{path}: unreadable landmark file header") from exc
    if not isinstance(header, dict):
        raise LandmarkFileError(f"{path}: not a {SLM_FORMAT} landmark file")
    if header.get("format") != SLM_FORMAT:
        raise LandmarkFileError(
            f"{path}: not a {SLM_FORMAT} landmark file (format={header.get('format')!r})"
        )
    for key in ("frames", "landmarks", "fps", "source_id"):
        if key not in header:
            raise LandmarkFileError(f"{path}: landmark header missing {key!r}")
    return header


def read_landmark_file(path: str | Path) -> LandmarkSequence:
    """Read a landmark file written by :func:`write_landmark_file`."""
    blob = Path(path).read_bytes()
    newline = blob.find(b"\n")
    if newline < 0:
        raise LandmarkFileError(f"{path}: missing landmark file header")
    header = _parse_slm_header(blob[:newline], path)
    t, l = int(header["frames"]), int(header["landmarks"])
    coord_bytes = t * l * 2 * 4
    validity_bytes = math.ceil(t * l / 8)
    payload = blob[newline + 1:]
    if len(payload) != coord_bytes + validity_bytes:
        raise LandmarkFileError(
            f"{path}: payload is {len(payload)} bytes, expected {coord_bytes + validity_bytes}"
        )
    coords = np.frombuffer(payload[:coord_bytes], dtype="<f4").reshape(t, l, 2)
    bits = np.unpackbits(np.frombuffer(payload[coord_bytes:], dtype=np.uint8))[: t * l]
    return LandmarkSequence(
        coords=coords.astype(np.float64),
        validity=bits.reshape(t, l).astype(bool),
        fps=float(header["fps"]),
        source_id=str(header["source_id"]),
    )


# --- manifests ---------------------------------------------------------------

_TAKE_FILE = re.compile(r"^(\d+)\.slm$")


def build_manifest(root: str | Path) -> DatasetManifest:
    """Index a dataset tree laid out as <signer>/<label>/<take>.slm.

    The result is deterministic: samples are sorted by (signer, label, take)
    and both vocabularies lexicographically.
    """
    root = Path(root)
    if not root.is_dir():
        raise ManifestError(f"dataset root {root} is not a directory")
    samples: list[SampleRef] = []
    seen: dict[tuple[str, str, int], list[str]] = {}
    for signer_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for label_dir in sorted(p for p in signer_dir.iterdir() if p.is_dir()):
            for f in sorted(label_dir.glob("*.slm")):
                m = _TAKE_FILE.match(f.name)
                if not m:
                    raise ManifestError(
                        f"{f}: landmark file name must be an integer take number"
                    )
                take = int(m.group(1))
                header = read_landmark_header(f)
                rel = f.relative_to(root).as_posix()
                ref = SampleRef(
                    signer=signer_dir.name,
                    label=label_dir.name,
                    take=take,
                    path=rel,
                    frame_count=int(header["frames"]),
                    fps=float(header["fps"]),
                )
                seen.setdefault((ref.signer, ref.label, ref.take), []).append(rel)
                samples.append(ref)
    dupes = {k: v for k, v in seen.items() if len(v) > 1}
    if dupes:
        listing = "; ".join(
            f"{signer}/{label}/take {take}: {', '.join(paths)}"
            for (signer, label, take), paths in sorted(dupes.items())
        )
        raise ManifestError(f"duplicate (signer, label, take) entries: {listing}")
    if not samples:
        raise ManifestError(f"no samples found under {root}")
    samples.sort()
    classes = tuple(sorted({s.label for s in samples}))
    signers = tuple(sorted({s.signer for s in samples}))
    return DatasetManifest(
        root=str(root), samples=tuple(samples), classes=classes, signers=signers
    )


def save_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    doc = {
        "format": MANIFEST_FORMAT,
        "classes": list(manifest.classes),
        "signers": list(manifest.signers),
        "samples": [
            {
                "signer": s.signer,
                "label": s.label,
                "take": s.take,
                "path": s.path,
                "frame_count": s.frame_count,
                "fps": s.fps,
            }
            for s in manifest.samples
        ],
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")


def load_manifest(path: str | Path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    if doc.get("format") != MANIFEST_FORMAT:
        raise ManifestError(f"{path}: not a {MANIFEST_FORMAT} document")
    samples = tuple(
        SampleRef(
            signer=s["signer"],
            label=s["label"],
            take=int(s["take"]),
            path=s["path"],
            frame_count=int(s["frame_count"]),
            fps=float(s["fps"]),
        )
        for s in doc["samples"]
    )
    return DatasetManifest(
        root=str(path.parent),
        samples=samples,
        classes=tuple(doc["classes"]),
        signers=tuple(doc["signers"]),
    )


def load_sample(manifest: DatasetManifest, ref: SampleRef) -> SignSample:
    seq = read_landmark_file(Path(manifest.root) / ref.path)
    return SignSample(sequence=seq, label=ref.label, signer=ref.signer, take=ref.take)


def load_samples(manifest: DatasetManifest, refs: Iterable[SampleRef]) -> list[SignSample]:
    return [load_sample(manifest, r) for r in refs]
