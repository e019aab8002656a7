"""End-to-end experiment orchestration.

A run lives in one directory: config.json and splits.json at the top,
sections/<id>/ with the model, metrics, confusion matrix and an audit of
the samples each training touched, then report.json/report.csv aggregated
over all sections. Completed sections are recognized by their config hash
and skipped on rerun, so interrupted runs resume where they stopped.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import shutil
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import metrics as metrics_mod
from .encoding import encode, resize_to_input
from .landmarks import load_manifest, load_samples
from .model import TrainConfig, load_model, predict, save_model, train
from .splits import generate_splits, materialize, save_splits
from .transforms import AugmentParams, augment, compute_target, derive_seed, uniformize

log = logging.getLogger(__name__)

SECTION_FORMAT = "section-v1"
THREADS_ENV = "SIGNENC_THREADS"


class RunDirError(RuntimeError):
    """The run directory holds artifacts from an incompatible configuration."""


@dataclass(frozen=True)
class RunConfig:
    """Resolved configuration of one experiment run.

    Serialized as a flat JSON object with dotted keys (see DOTTED_KEYS);
    every training hyperparameter default mirrors the full-scale recipe.
    """

    dataset: str = ""
    out: str = ""
    seed: int | None = None
    workers: int = 1
    limit: int | None = None
    augment_enabled: bool = True
    rotation_deg: float = 10.0
    zoom: float = 0.1
    translate: float = 0.05
    flip_prob: float = 0.5
    swap_lr: bool = False
    uniformize_enabled: bool = False
    backend: str = "reference_cnn"
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 1e-4
    weight_decay: float = 1e-4
    dropout: float = 0.5
    patience: int = 5
    head_units: int = 128
    pretrained_path: str | None = None

    def validate(self) -> None:
        if not self.dataset:
            raise ValueError("config needs a dataset root ('dataset')")
        if not Path(self.dataset).is_dir():
            raise ValueError(f"dataset root {self.dataset!r} is not a directory")
        if not self.out:
            raise ValueError("config needs an output directory ('out')")
        if self.seed is None:
            raise ValueError("config needs an explicit seed ('seed')")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.limit is not None and self.limit < 1:
            raise ValueError("splits.limit must be >= 1 when set")
        self.train_config()  # validates model hyperparameters
        AugmentParams(
            rotation_deg=self.rotation_deg, zoom=self.zoom,
            translate=self.translate, flip_prob=self.flip_prob,
        )

    def train_config(self, seed: int = 0) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            dropout=self.dropout,
            patience=self.patience,
            seed=seed,
            backend=self.backend,
            head_units=self.head_units,
            pretrained_path=self.pretrained_path,
        )

    def augment_params(self, seed: int) -> AugmentParams:
        return AugmentParams(
            rotation_deg=self.rotation_deg,
            zoom=self.zoom,
            translate=self.translate,
            flip_prob=self.flip_prob,
            seed=seed,
            swap_lr=self.swap_lr,
        )


DOTTED_KEYS = {
    "dataset": "dataset",
    "out": "out",
    "seed": "seed",
    "workers": "workers",
    "splits.limit": "limit",
    "augment.enabled": "augment_enabled",
    "augment.rotation_deg": "rotation_deg",
    "augment.zoom": "zoom",
    "augment.translate": "translate",
    "augment.flip_prob": "flip_prob",
    "augment.swap_lr": "swap_lr",
    "uniformize.enabled": "uniformize_enabled",
    "model.backend": "backend",
    "model.epochs": "epochs",
    "model.batch_size": "batch_size",
    "model.learning_rate": "learning_rate",
    "model.weight_decay": "weight_decay",
    "model.dropout": "dropout",
    "model.patience": "patience",
    "model.head_units": "head_units",
    "model.pretrained_path": "pretrained_path",
}

# Keys that change where or how fast a run executes, not what it computes.
_HASH_EXCLUDED = ("out", "workers")


def config_from_dotted(mapping: dict, **overrides) -> RunConfig:
    """Build a RunConfig from a flat dotted-key mapping plus overrides."""
    unknown = sorted(set(mapping) - set(DOTTED_KEYS))
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(unknown)}")
    kwargs = {attr: mapping[key] for key, attr in DOTTED_KEYS.items() if key in mapping}
    kwargs.update(overrides)
    cfg = RunConfig(**kwargs)
    cfg.validate()
    return cfg


def config_to_dotted(cfg: RunConfig) -> dict:
    return {key: getattr(cfg, attr) for key, attr in DOTTED_KEYS.items()}


def config_hash(cfg: RunConfig) -> str:
    doc = {k: v for k, v in config_to_dotted(cfg).items() if k not in _HASH_EXCLUDED}
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def effective_workers(cfg: RunConfig) -> int:
    cap = os.environ.get(THREADS_ENV)
    workers = cfg.workers
    if cap:
        workers = min(workers, max(1, int(cap)))
    return workers


def _latency_stats(latencies_ms: list[float]) -> dict:
    arr = np.asarray(latencies_ms, dtype=np.float64)
    return {
        "count": int(arr.size),
        "mean_ms": float(arr.mean()),
        "median_ms": float(np.median(arr)),
        "p95_ms": float(np.percentile(arr, 95)),
    }


def _section_dir(run_dir: Path, section_id: int) -> Path:
    return run_dir / "sections" / f"{section_id:03d}"


def _section_complete(run_dir: Path, section_id: int, chash: str) -> bool:
    path = _section_dir(run_dir, section_id) / "metrics.json"
    if not path.is_file():
        return False
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError:
        return False
    return doc.get("format") == SECTION_FORMAT and doc.get("config_hash") == chash


def load_run_config(run_dir: str | Path) -> RunConfig:
    doc = json.loads((Path(run_dir) / "config.json").read_text())
    return config_from_dotted(doc["config"])


def execute_section(run_dir: str, section_id: int, torch_threads: int = 0) -> int:
    """Train and evaluate one section; writes all artifacts into its directory.

    Standalone (reloads config, manifest and split plans from the run
    directory) so sections can run in worker processes.
    """
    import torch

    if torch_threads > 0:
        torch.set_num_threads(torch_threads)
    run_path = Path(run_dir)
    cfg = load_run_config(run_path)
    chash = config_hash(cfg)
    manifest = load_manifest(Path(cfg.dataset) / "manifest.json")
    plan = generate_splits(manifest)[section_id]
    sec_dir = _section_dir(run_path, section_id)
    sec_dir.mkdir(parents=True, exist_ok=True)

    train_refs, val_refs, test_refs = materialize(plan, manifest)
    train_samples = load_samples(manifest, train_refs)
    val_samples = load_samples(manifest, val_refs)
    test_samples = load_samples(manifest, test_refs)

    if cfg.uniformize_enabled:
        # Target length from the training split only, to keep the held-out
        # signers from influencing training-time preprocessing.
        plan_u = compute_target(train_refs)
        train_samples = [
            replace(s, sequence=uniformize(s.sequence, plan_u)) for s in train_samples
        ]
        val_samples = [
            replace(s, sequence=uniformize(s.sequence, plan_u)) for s in val_samples
        ]
        test_samples = [
            replace(s, sequence=uniformize(s.sequence, plan_u)) for s in test_samples
        ]

    augment_fn = None
    if cfg.augment_enabled:
        def augment_fn(seq, epoch, sample_id):
            return augment(seq, cfg.augment_params(derive_seed(cfg.seed, epoch, sample_id)))

    tcfg = cfg.train_config(seed=derive_seed(cfg.seed, "section", section_id))
    state = train(train_samples, val_samples, manifest.classes, tcfg, augment_fn)

    true_labels, predicted, latencies = [], [], []
    for sample in test_samples:
        t0 = time.perf_counter()
        net_input = resize_to_input(encode(sample.sequence))
        prediction = predict(state, net_input)
        latencies.append((time.perf_counter() - t0) * 1000.0)
        true_labels.append(sample.label)
        predicted.append(prediction.argmax)
    cm = metrics_mod.confusion(true_labels, predicted, manifest.classes)
    mm = metrics_mod.macro_metrics(cm)

    save_model(state, sec_dir / "model.slc", config_hash=chash)
    metrics_mod.write_confusion_csv(cm, sec_dir / "confusion.csv")
    audit = {
        "section_id": section_id,
        "test_signer": plan.test_signer,
        "val_signer": plan.val_signer,
        "train": [s.sample_id for s in train_samples],
        "val": [s.sample_id for s in val_samples],
    }
    (sec_dir / "audit.json").write_text(json.dumps(audit, sort_keys=True, indent=1) + "\n")
    doc = {
        "format": SECTION_FORMAT,
        "config_hash": chash,
        "section_id": section_id,
        "test": plan.test_signer,
        "val": plan.val_signer,
        "metrics": dict(mm._asdict()),
        "confusion": cm.counts.tolist(),
        "classes": list(manifest.classes),
        "best_epoch": state.epoch,
        "history": state.history,
        "latencies_ms": latencies,
    }
    # metrics.json is the completion marker, so it is written last
    (sec_dir / "metrics.json").write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n")
    log.info(
        "section %03d (test=%s val=%s): accuracy %.3f, best epoch %d",
        section_id, plan.test_signer, plan.val_signer, mm.accuracy, state.epoch,
    )
    return section_id


def _read_section(run_dir: Path, section_id: int) -> tuple[metrics_mod.SectionResult, list[float]]:
    doc = json.loads((_section_dir(run_dir, section_id) / "metrics.json").read_text())
    m = doc["metrics"]
    result = metrics_mod.SectionResult(
        section_id=doc["section_id"],
        accuracy=m["accuracy"],
        macro_precision=m["macro_precision"],
        macro_recall=m["macro_recall"],
        macro_f1=m["macro_f1"],
        confusion=metrics_mod.ConfusionMatrix(
            counts=np.asarray(doc["confusion"], dtype=np.int64),
            classes=tuple(doc["classes"]),
        ),
        test_signer=doc["test"],
        val_signer=doc["val"],
    )
    return result, list(doc["latencies_ms"])


def build_report(run_dir: str | Path) -> metrics_mod.RunReport:
    """Aggregate all completed sections of a run directory into a report."""
    run_path = Path(run_dir)
    cfg_doc = json.loads((run_path / "config.json").read_text())
    section_ids = sorted(
        int(p.name) for p in (run_path / "sections").iterdir()
        if p.is_dir() and (p / "metrics.json").is_file()
    )
    if not section_ids:
        raise RunDirError(f"{run_path}: no completed sections to aggregate")
    results = []
    latencies: list[float] = []
    for sid in section_ids:
        result, lat = _read_section(run_path, sid)
        results.append(result)
        latencies.extend(lat)
    return metrics_mod.aggregate(
        results, config=cfg_doc["config"], timing=_latency_stats(latencies)
    )


def run_experiment(cfg: RunConfig, force: bool = False) -> metrics_mod.RunReport:
    """Execute a full nested leave-one-person-out run (resumable).

    Rerunning with the same configuration skips completed sections; a
    different configuration in the same directory is refused unless
    ``force`` wipes the stale artifacts.
    """
    cfg.validate()
    run_dir = Path(cfg.out)
    run_dir.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)

    config_path = run_dir / "config.json"
    if config_path.exists():
        existing = json.loads(config_path.read_text())
        if existing.get("config_hash") != chash:
            if not force:
                raise RunDirError(
                    f"{run_dir} holds a run with config hash "
                    f"{existing.get('config_hash')}, not {chash}; "
                    "rerun with force to overwrite"
                )
            for stale in ("sections", "report.json", "report.csv", "splits.json"):
                path = run_dir / stale
                if path.is_dir():
                    shutil.rmtree(path)
                elif path.exists():
                    path.unlink()
    config_path.write_text(
        json.dumps(
            {"config": config_to_dotted(cfg), "config_hash": chash},
            sort_keys=True, indent=1,
        )
        + "\n"
    )

    manifest = load_manifest(Path(cfg.dataset) / "manifest.json")
    plans = generate_splits(manifest)
    if cfg.limit is not None:
        plans = plans[: cfg.limit]
    save_splits(plans, run_dir / "splits.json")
    (run_dir / "sections").mkdir(exist_ok=True)

    pending = [p.section_id for p in plans if not _section_complete(run_dir, p.section_id, chash)]
    done = len(plans) - len(pending)
    if done:
        log.info("resuming: %d of %d sections already complete", done, len(plans))
    workers = effective_workers(cfg)
    if pending:
        if workers <= 1 or len(pending) == 1:
            for sid in pending:
                execute_section(str(run_dir), sid)
        else:
            threads = max(1, (os.cpu_count() or 1) // workers)
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [
                    pool.submit(execute_section, str(run_dir), sid, threads)
                    for sid in pending
                ]
                for future in as_completed(futures):
                    future.result()

    report = build_report(run_dir)
    metrics_mod.write_report_json(report, run_dir / "report.json")
    metrics_mod.write_report_csv(report, run_dir / "report.csv")
    return report


ABLATION_VARIANTS = (
    # (name, augmentation, uniformization); first row is the default recipe,
    # the others toggle one component at a time.
    ("default", True, False),
    ("uniformize_on", True, True),
    ("augment_off", False, False),
)


def run_ablation(cfg: RunConfig, force: bool = False) -> list[dict]:
    """One-at-a-time component toggles, each executed as a sub-run."""
    cfg.validate()
    rows = []
    for name, aug, unif in ABLATION_VARIANTS:
        sub = replace(
            cfg,
            out=str(Path(cfg.out) / name),
            augment_enabled=aug,
            uniformize_enabled=unif,
        )
        log.info("ablation variant %s (augment=%s uniformize=%s)", name, aug, unif)
        report = run_experiment(sub, force=force)
        rows.append(
            {
                "variant": name,
                "data_aug": aug,
                "uniformize": unif,
                "aggregate": report.aggregate,
            }
        )
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "ablation.json").write_text(json.dumps(rows, sort_keys=True, indent=1) + "\n")
    lines = ["variant,data_aug,uniformize," + ",".join(metrics_mod.METRIC_NAMES)]
    for row in rows:
        cells = [
            metrics_mod.format_mean_std(row["aggregate"][m]["mean"], row["aggregate"][m]["std"])
            for m in metrics_mod.METRIC_NAMES
        ]
        lines.append(
            f"{row['variant']},{'yes' if row['data_aug'] else 'no'},"
            f"{'yes' if row['uniformize'] else 'no'}," + ",".join(cells)
        )
    (out / "ablation.csv").write_text("\n".join(lines) + "\n")
    return rows


def run_bench(
    model_path: str | Path,
    dataset_root: str | Path,
    count: int = 200,
    warmup: int = 10,
) -> dict:
    """Measure per-sequence encode/resize/predict latency over >= count runs."""
    if count < 1:
        raise ValueError("bench needs a positive sequence count")
    state = load_model(model_path)
    manifest = load_manifest(Path(dataset_root) / "manifest.json")
    samples = load_samples(manifest, manifest.samples)
    if not samples:
        raise ValueError("empty sample set")

    def once(sample):
        t0 = time.perf_counter()
        img = encode(sample.sequence)
        t1 = time.perf_counter()
        net_input = resize_to_input(img)
        t2 = time.perf_counter()
        predict(state, net_input)
        t3 = time.perf_counter()
        return (t1 - t0) * 1e3, (t2 - t1) * 1e3, (t3 - t2) * 1e3, (t3 - t0) * 1e3

    for i in range(warmup):
        once(samples[i % len(samples)])
    stages: dict[str, list[float]] = {"encode": [], "resize": [], "predict": [], "total": []}
    for i in range(count):
        e, r, p, t = once(samples[i % len(samples)])
        stages["encode"].append(e)
        stages["resize"].append(r)
        stages["predict"].append(p)
        stages["total"].append(t)
    return {name: _latency_stats(values) for name, values in stages.items()}
