"""Classifier backends, training loop, and model persistence.

Two backends satisfy one contract: `reference_cnn` is a compact network
trainable from scratch on CPU (used by tests and the synthetic benchmark),
`resnet18` is the full-scale configuration, optionally initialized from an
ImageNet state-dict file. Both end in the same head: batch norm on the base
features, a ReLU feature layer, dropout, and a linear output layer.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import nn

from .encoding import NETWORK_INPUT_SIZE, NetworkInput, encode, resize_to_input
from .landmarks import LandmarkSequence, SignSample

MODEL_FORMAT = "slc-v1"
BACKENDS = ("reference_cnn", "resnet18")

AugmentFn = Callable[[LandmarkSequence, int, str], LandmarkSequence]


class ConfigError(ValueError):
    """Training configuration inconsistent with the data."""


class TrainingError(RuntimeError):
    """Training diverged or could not proceed."""


class ModelFormatError(ValueError):
    """A model file is unreadable or has the wrong format/version."""


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run."""

    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    dropout: float = 0.5
    patience: int = 5
    seed: int = 0
    backend: str = "reference_cnn"
    head_units: int = 128
    pretrained_path: str | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.head_units < 1:
            raise ValueError("epochs, batch_size and head_units must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.weight_decay < 0:
            raise ValueError("weight_decay must be >= 0")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if not 1 <= self.patience <= self.epochs:
            raise ValueError("patience must be in [1, epochs]")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")


@dataclass(eq=False)
class ModelState:
    """Trained weights plus everything needed to rebuild the network."""

    backend: str
    classes: tuple[str, ...]
    head_units: int
    dropout: float
    parameters: dict
    epoch: int
    val_accuracy: float
    val_loss: float
    history: list[dict] = field(default_factory=list)
    _cached_module: nn.Module | None = field(default=None, init=False, repr=False)


@dataclass(eq=False)
class Prediction:
    """Class probabilities and the maximum-probability label."""

    probabilities: np.ndarray
    argmax: str


@dataclass
class EarlyStopper:
    """Stop once validation loss has not strictly improved for `patience` epochs.

    Improvement is measured against the best loss seen so far, not the
    previous epoch.
    """

    patience: int
    best_loss: float = math.inf
    stale_epochs: int = 0

    def update(self, val_loss: float) -> bool:
        """Record one epoch's validation loss; True means stop now."""
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.stale_epochs = 0
        else:
            self.stale_epochs += 1
        return self.stale_epochs >= self.patience


@dataclass
class BestEpochTracker:
    """Select the epoch with the highest validation accuracy; earliest wins ties."""

    best_accuracy: float = -1.0
    best_epoch: int = 0

    def update(self, epoch: int, val_accuracy: float) -> bool:
        """Record one epoch's accuracy; True means this epoch is the new best."""
        if val_accuracy > self.best_accuracy:
            self.best_accuracy = val_accuracy
            self.best_epoch = epoch
            return True
        return False


class ReferenceCNN(nn.Module):
    """Compact 3-block CNN for CPU-scale experiments; no pretrained weights."""

    def __init__(self, num_classes: int, head_units: int = 128, dropout: float = 0.5):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(3, 8, 3, stride=2, padding=1),
            nn.BatchNorm2d(8),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(8, 16, 3, padding=1),
            nn.BatchNorm2d(16),
            nn.ReLU(inplace=True),
            nn.MaxPool2d(2),
            nn.Conv2d(16, 32, 3, padding=1),
            nn.BatchNorm2d(32),
            nn.ReLU(inplace=True),
            nn.AdaptiveAvgPool2d(4),
        )
        self.base_norm = nn.BatchNorm1d(32 * 16)
        self.classifier = nn.Sequential(
            nn.Linear(32 * 16, head_units),
            nn.ReLU(inplace=True),
            nn.Dropout(dropout),
            nn.Linear(head_units, num_classes),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.features(x).flatten(1)
        return self.classifier(self.base_norm(h))


class ResNet18Net(nn.Module):
    """ResNet18 base with the project's classification head.

    Inputs are standardized with ImageNet statistics, matching the
    pretrained weights this backend is meant to load.
    """

    IMAGENET_MEAN = (0.485, 0.456, 0.406)
    IMAGENET_STD = (0.229, 0.224, 0.225)

    def __init__(
        self,
        num_classes: int,
        head_units: int = 128,
        dropout: float = 0.5,
        pretrained_path: str | None = None,
    ):
        super().__init__()
        from torchvision.models import resnet18

        base = resnet18(weights=None)
        if pretrained_path and Path(pretrained_path).is_file():
            state = torch.load(pretrained_path, map_location="cpu", weights_only=True)
            base.load_state_dict(state)
        else:
            detail = (
                f"weights file {pretrained_path!r} not found"
                if pretrained_path
                else "no pretrained weights configured"
            )
            warnings.warn(
                f"resnet18 backend: {detail}; falling back to RANDOM initialization. "
                "Expect far lower accuracy than the pretrained configuration.",
                RuntimeWarning,
                stacklevel=2,
            )
        base.fc = nn.Identity()
        self.base = base
        self.base_norm = nn.BatchNorm1d(512)
        self.classifier = nn.Sequential(
            nn.Linear(512, head_units),
            nn.ReLU(inplace=True),
            nn.Dropout(dropout),
            nn.Linear(head_units, num_classes),
        )
        mean = torch.tensor(self.IMAGENET_MEAN).view(1, 3, 1, 1)
        std = torch.tensor(self.IMAGENET_STD).view(1, 3, 1, 1)
        self.register_buffer("input_mean", mean)
        self.register_buffer("input_std", std)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = (x - self.input_mean) / self.input_std
        h = self.base(x)
        return self.classifier(self.base_norm(h))


def build_network(
    backend: str,
    num_classes: int,
    head_units: int = 128,
    dropout: float = 0.5,
    pretrained_path: str | None = None,
) -> nn.Module:
    if num_classes < 2:
        raise ValueError(f"need at least 2 classes, got {num_classes}")
    if backend == "reference_cnn":
        return ReferenceCNN(num_classes, head_units=head_units, dropout=dropout)
    if backend == "resnet18":
        return ResNet18Net(
            num_classes, head_units=head_units, dropout=dropout,
            pretrained_path=pretrained_path,
        )
    raise ValueError(f"unknown backend {backend!r}")


def _sequence_image(seq: LandmarkSequence) -> np.ndarray:
    return resize_to_input(encode(seq)).pixels


def _to_tensor(images: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(images.transpose(0, 3, 1, 2)))


def _batch_slices(n: int, batch_size: int) -> list[slice]:
    """Contiguous batch slices; a trailing singleton is merged backward
    (batch-norm layers cannot train on a single sample)."""
    edges = list(range(0, n, batch_size)) + [n]
    if len(edges) > 2 and edges[-1] - edges[-2] == 1:
        edges.pop(-2)
    return [slice(a, b) for a, b in zip(edges[:-1], edges[1:])]


def _refresh_bn_stats(net: nn.Module, x: torch.Tensor, batch_size: int) -> None:
    """Recompute batch-norm running statistics over the epoch's training images.

    With few optimization steps per epoch, the default exponential stats lag
    far behind the fast-moving weights and inference collapses. A cumulative
    pass (momentum None) after each epoch pins them to the current weights.
    Dropout stays disabled so the statistics match inference activations.
    """
    bn_modules = [m for m in net.modules() if isinstance(m, nn.modules.batchnorm._BatchNorm)]
    if not bn_modules:
        return
    momenta = [m.momentum for m in bn_modules]
    net.eval()
    for m in bn_modules:
        m.reset_running_stats()
        m.momentum = None
        m.train()
    with torch.no_grad():
        for sl in _batch_slices(len(x), batch_size):
            net(x[sl])
    for m, momentum in zip(bn_modules, momenta):
        m.momentum = momentum
    net.eval()


def _evaluate(net: nn.Module, x: torch.Tensor, y: torch.Tensor, batch_size: int) -> tuple[float, float]:
    net.eval()
    total_loss = 0.0
    correct = 0
    with torch.no_grad():
        for sl in _batch_slices(len(x), batch_size):
            logits = net(x[sl])
            total_loss += float(F.cross_entropy(logits, y[sl], reduction="sum"))
            correct += int((logits.argmax(dim=1) == y[sl]).sum())
    return total_loss / len(x), correct / len(x)


def train(
    train_samples: Sequence[SignSample],
    val_samples: Sequence[SignSample],
    classes: Sequence[str],
    cfg: TrainConfig,
    augment_fn: AugmentFn | None = None,
) -> ModelState:
    """Train a classifier and return the state of its best validation epoch.

    Training samples are re-augmented, re-encoded and resized every epoch;
    validation samples are encoded exactly once. Training halts early when
    validation loss stops improving, and the returned weights are those of
    the epoch with the highest validation accuracy (earliest on ties).

    Raises:
        ConfigError: a sample label is missing from the class vocabulary.
        TrainingError: the loss became non-finite.
    """
    if not train_samples or not val_samples:
        raise ValueError("train and validation sets must be nonempty")
    classes = tuple(classes)
    class_index = {c: i for i, c in enumerate(classes)}
    for group, samples in (("train", train_samples), ("val", val_samples)):
        unknown = sorted({s.label for s in samples} - class_index.keys())
        if unknown:
            raise ConfigError(f"{group} labels not in the class vocabulary: {unknown}")

    torch.manual_seed(cfg.seed)
    net = build_network(
        cfg.backend, len(classes), head_units=cfg.head_units,
        dropout=cfg.dropout, pretrained_path=cfg.pretrained_path,
    )
    optimizer = torch.optim.Adam(
        net.parameters(), lr=cfg.learning_rate, weight_decay=cfg.weight_decay
    )
    shuffle_rng = np.random.default_rng(cfg.seed)

    val_x = _to_tensor(np.stack([_sequence_image(s.sequence) for s in val_samples]))
    val_y = torch.tensor([class_index[s.label] for s in val_samples], dtype=torch.long)
    train_y_all = np.array([class_index[s.label] for s in train_samples], dtype=np.int64)

    stopper = EarlyStopper(patience=cfg.patience)
    best = BestEpochTracker()
    best_snapshot: dict | None = None
    best_val_loss = math.inf
    history: list[dict] = []

    for epoch in range(1, cfg.epochs + 1):
        images = []
        for s in train_samples:
            seq = s.sequence if augment_fn is None else augment_fn(s.sequence, epoch, s.sample_id)
            images.append(_sequence_image(seq))
        order = shuffle_rng.permutation(len(images))
        x = _to_tensor(np.stack(images)[order])
        y = torch.from_numpy(train_y_all[order])

        net.train()
        epoch_loss = 0.0
        for batch_no, sl in enumerate(_batch_slices(len(x), cfg.batch_size)):
            optimizer.zero_grad()
            loss = F.cross_entropy(net(x[sl]), y[sl])
            value = float(loss.detach())
            if not math.isfinite(value):
                raise TrainingError(
                    f"non-finite training loss {value} at epoch {epoch}, batch {batch_no}"
                )
            loss.backward()
            optimizer.step()
            epoch_loss += value * (sl.stop - sl.start)

        _refresh_bn_stats(net, x, cfg.batch_size)
        val_loss, val_acc = _evaluate(net, val_x, val_y, cfg.batch_size)
        history.append(
            {
                "epoch": epoch,
                "train_loss": epoch_loss / len(x),
                "val_loss": val_loss,
                "val_accuracy": val_acc,
            }
        )
        if best.update(epoch, val_acc):
            best_snapshot = {k: v.detach().clone() for k, v in net.state_dict().items()}
            best_val_loss = val_loss
        if stopper.update(val_loss):
            break

    assert best_snapshot is not None
    return ModelState(
        backend=cfg.backend,
        classes=classes,
        head_units=cfg.head_units,
        dropout=cfg.dropout,
        parameters=best_snapshot,
        epoch=best.best_epoch,
        val_accuracy=best.best_accuracy,
        val_loss=best_val_loss,
        history=history,
    )


def _module_for(state: ModelState) -> nn.Module:
    if state._cached_module is None:
        with warnings.catch_warnings():
            # the fresh network is immediately overwritten with trained
            # weights, so the missing-pretrained-weights warning is noise here
            warnings.simplefilter("ignore", RuntimeWarning)
            net = build_network(
                state.backend, len(state.classes),
                head_units=state.head_units, dropout=state.dropout,
            )
        net.load_state_dict(state.parameters)
        net.eval()
        state._cached_module = net
    return state._cached_module


def predict_batch(state: ModelState, inputs: Sequence[NetworkInput]) -> list[Prediction]:
    """Predict class probabilities for a batch of network inputs."""
    if not inputs:
        return []
    expected = (NETWORK_INPUT_SIZE, NETWORK_INPUT_SIZE, 3)
    for ni in inputs:
        if ni.pixels.shape != expected:
            raise ValueError(f"network input must have shape {expected}, got {ni.pixels.shape}")
    net = _module_for(state)
    x = _to_tensor(np.stack([ni.pixels for ni in inputs]))
    with torch.no_grad():
        probs = F.softmax(net(x).double(), dim=1).numpy()
    return [
        Prediction(probabilities=p, argmax=state.classes[int(np.argmax(p))]) for p in probs
    ]


def predict(state: ModelState, network_input: NetworkInput) -> Prediction:
    """Deterministic single-input inference (dropout off, fixed norm stats)."""
    return predict_batch(state, [network_input])[0]


def save_model(state: ModelState, path: str | Path, config_hash: str = "") -> None:
    """Write a model bundle: one JSON header line plus the tensor payload."""
    import io

    header = {
        "format": MODEL_FORMAT,
        "backend": state.backend,
        "classes": list(state.classes),
        "head_units": state.head_units,
        "dropout": state.dropout,
        "epoch": state.epoch,
        "val_accuracy": state.val_accuracy,
        "val_loss": state.val_loss,
        "history": state.history,
        "config_hash": config_hash,
    }
    buf = io.BytesIO()
    torch.save(state.parameters, buf)
    blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n" + buf.getvalue()
    Path(path).write_bytes(blob)


def load_model(path: str | Path) -> ModelState:
    """Read a model bundle written by :func:`save_model`.

    Raises FileNotFoundError for a missing file and ModelFormatError for a
    wrong-format or corrupt one; no partial state escapes.
    """
    blob = Path(path).read_bytes()
    newline = blob.find(b"\n")
    if newline < 0:
        raise ModelFormatError(f"{path}: missing model header")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"{path}: unreadable model header") from exc
    if not isinstance(header, dict):
        raise ModelFormatError(f"{path}: expected format {MODEL_FORMAT!r}")
    if header.get("format") != MODEL_FORMAT:
        raise ModelFormatError(
            f"{path}: expected format {MODEL_FORMAT!r}, got {header.get('format')!r}"
        )
    import io

    try:
        parameters = torch.load(io.BytesIO(blob[newline + 1:]), map_location="cpu", weights_only=True)
    except Exception as exc:
        raise ModelFormatError(f"{path}: corrupt model payload: {exc}") from exc
    try:
        return ModelState(
            backend=header["backend"],
            classes=tuple(header["classes"]),
            head_units=int(header["head_units"]),
            dropout=float(header["dropout"]),
            parameters=parameters,
            epoch=int(header["epoch"]),
            val_accuracy=float(header["val_accuracy"]),
            val_loss=float(header["val_loss"]),
            history=list(header.get("history", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"{path}: model header missing fields: {exc}") from exc
