"""signenc: landmark-sequence image encoding and signer-independent sign classification.

The pipeline: parse per-frame pose keypoints, select 126 landmarks, encode
each sequence as a compact 3-channel image, train a convolutional classifier,
and evaluate it under a nested leave-one-person-out protocol.
"""

from .encoding import (
    NETWORK_INPUT_SIZE,
    EncodedImage,
    NetworkInput,
    decode,
    encode,
    quantize,
    resize_to_input,
)
from .landmarks import (
    DEFAULT_BODY_KEEP,
    LANDMARK_COUNT,
    DatasetManifest,
    LandmarkFrame,
    LandmarkSequence,
    RawKeypointFrame,
    SampleRef,
    SegmentAnnotation,
    SignSample,
    build_manifest,
    carry_forward,
    load_manifest,
    load_sample,
    parse_keypoint_file,
    read_landmark_file,
    save_manifest,
    segment_takes,
    select_landmarks,
    write_landmark_file,
)
from .metrics import (
    ConfusionMatrix,
    MacroMetrics,
    RunReport,
    SectionResult,
    aggregate,
    confusion,
    macro_metrics,
    normalize_rows,
)
from .model import (
    ModelState,
    Prediction,
    TrainConfig,
    load_model,
    predict,
    predict_batch,
    save_model,
    train,
)
from .runner import RunConfig, run_ablation, run_bench, run_experiment
from .splits import SplitPlan, generate_splits, materialize
from .synthetic import SyntheticSpec, generate_dataset
from .transforms import (
    AugmentParams,
    UniformizationPlan,
    augment,
    compute_target,
    derive_seed,
    uniformize,
)

__version__ = "0.1.0"
