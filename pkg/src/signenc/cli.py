"""Command-line pipeline driver.

Verbs: ingest (keypoint JSON -> landmark files + manifest), synth (generate
a synthetic dataset), encode (landmark files -> PNG images), run (full
nested leave-one-person-out experiment), ablate (one-at-a-time component
toggles), bench (latency measurement), report (re-aggregate a run
directory).

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 training
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import runner
from .encoding import ImageFormatError, encode, save_png
from .landmarks import (
    DEFAULT_BODY_KEEP,
    KeypointParseError,
    KeypointSchemaError,
    LandmarkFileError,
    LandmarkSequence,
    ManifestError,
    build_manifest,
    carry_forward,
    load_manifest,
    load_sample,
    parse_keypoint_file,
    read_annotations_csv,
    read_landmark_file,
    save_manifest,
    segment_takes,
    select_landmarks,
    write_landmark_file,
)
from .metrics import METRIC_NAMES, format_mean_std
from .model import ModelFormatError, TrainingError
from .synthetic import SyntheticSpec, generate_dataset

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TRAINING = 3

_DATA_ERRORS = (
    KeypointParseError,
    KeypointSchemaError,
    LandmarkFileError,
    ManifestError,
    ImageFormatError,
    ModelFormatError,
    FileNotFoundError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_set(pairs: list[str]) -> dict:
    values = {}
    for pair in pairs:
        key, sep, raw = pair.partition("=")
        if not sep or not key:
            raise UsageError(f"--set expects key=value, got {pair!r}")
        try:
            values[key] = json.loads(raw)
        except json.JSONDecodeError:
            values[key] = raw
    return values


def _load_config(args) -> runner.RunConfig:
    mapping: dict = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        if not isinstance(doc, dict):
            raise UsageError(f"config file {args.config} must hold a JSON object")
        mapping.update(doc)
    mapping.update(_parse_set(args.set or []))
    for key, value in (
        ("dataset", args.dataset),
        ("out", args.out),
        ("seed", args.seed),
        ("splits.limit", args.limit),
        ("workers", args.workers),
    ):
        if value is not None:
            mapping[key] = value
    try:
        return runner.config_from_dotted(mapping)
    except (ValueError, TypeError) as exc:
        raise UsageError(str(exc)) from exc


def _parse_body_keep(raw: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in raw.split(","))
    except ValueError as exc:
        raise UsageError(f"--body-keep expects comma-separated integers, got {raw!r}") from exc


def _frame_files(take_dir: Path) -> list[Path]:
    return sorted(take_dir.glob("*.json"))


def _read_take_sequence(
    take_dir: Path, width: int, height: int, fps: float, body_keep
) -> LandmarkSequence:
    files = _frame_files(take_dir)
    if not files:
        raise ManifestError(f"{take_dir}: no keypoint JSON files")
    frames = []
    for index, f in enumerate(files):
        try:
            raw = parse_keypoint_file(f.read_bytes(), frame_index=index)
        except (KeypointParseError, KeypointSchemaError) as exc:
            raise type(exc)(f"{f.name}: {exc}") from exc
        frames.append(select_landmarks(raw, width, height, body_keep=body_keep))
    seq = LandmarkSequence.from_frames(frames, fps=fps, source_id=take_dir.as_posix())
    return carry_forward(seq)


def cmd_ingest(args) -> int:
    root = Path(args.root)
    out = Path(args.out)
    body_keep = _parse_body_keep(args.body_keep) if args.body_keep else DEFAULT_BODY_KEEP
    if not root.is_dir():
        raise ManifestError(f"input root {root} is not a directory")
    annotations = read_annotations_csv(args.annotations) if args.annotations else None
    failures: list[str] = []
    written = 0

    signer_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    for signer_dir in signer_dirs:
        signer = signer_dir.name
        take_counter: dict[str, int] = {}
        for sub in sorted(p for p in signer_dir.iterdir() if p.is_dir()):
            if annotations is None:
                # <signer>/<label>/<take>/frame_*.json, one sign per take dir
                label = sub.name
                for take_dir in sorted(p for p in sub.iterdir() if p.is_dir()):
                    try:
                        take = int(take_dir.name)
                    except ValueError:
                        failures.append(f"{take_dir}: take directory name must be an integer")
                        continue
                    try:
                        seq = _read_take_sequence(take_dir, args.width, args.height, args.fps, body_keep)
                    except (KeypointParseError, KeypointSchemaError, ManifestError) as exc:
                        failures.append(f"{take_dir}: {exc}")
                        continue
                    target = out / signer / label / f"{take:03d}.slm"
                    target.parent.mkdir(parents=True, exist_ok=True)
                    write_landmark_file(seq, target)
                    written += 1
            else:
                # <signer>/<video_id>/frame_*.json with multi-take annotations
                video_id = sub.name
                video_annotations = [a for a in annotations if a.video_id == video_id]
                if not video_annotations:
                    failures.append(f"{sub}: no annotations for video {video_id!r}")
                    continue
                try:
                    seq = _read_take_sequence(sub, args.width, args.height, args.fps, body_keep)
                except (KeypointParseError, KeypointSchemaError, ManifestError) as exc:
                    failures.append(f"{sub}: {exc}")
                    continue
                samples, errors = segment_takes(
                    seq, video_annotations, pad=args.pad, signer=signer, fps=args.fps
                )
                failures.extend(errors)
                for sample in samples:
                    take = take_counter.get(sample.label, 0)
                    take_counter[sample.label] = take + 1
                    target = out / signer / sample.label / f"{take:03d}.slm"
                    target.parent.mkdir(parents=True, exist_ok=True)
                    write_landmark_file(sample.sequence, target)
                    written += 1

    if written:
        manifest = build_manifest(out)
        save_manifest(manifest, out / "manifest.json")
        print(
            f"ingested {len(manifest.samples)} samples, "
            f"{len(manifest.classes)} classes, {len(manifest.signers)} signers -> {out}"
        )
    for failure in failures:
        print(f"error: {failure}", file=sys.stderr)
    if not written:
        raise ManifestError(f"no samples ingested from {root}")
    return EXIT_DATA if failures else EXIT_OK


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        n_classes=args.classes,
        n_signers=args.signers,
        takes_per_sign=args.takes,
        frames_range=(args.frames[0], args.frames[1]),
        noise_std=args.noise,
        seed=args.seed,
    )
    manifest = generate_dataset(spec, args.out)
    print(
        f"generated {len(manifest.samples)} samples "
        f"({len(manifest.classes)} classes x {len(manifest.signers)} signers) -> {args.out}"
    )
    return EXIT_OK


def cmd_encode(args) -> int:
    source = Path(args.input)
    png_out = Path(args.png_out)
    if source.is_file():
        img = encode(read_landmark_file(source))
        save_png(img, png_out)
        print(f"{source} -> {png_out} ({img.rows}x{img.cols})")
        return EXIT_OK
    manifest = load_manifest(source / "manifest.json")
    for ref in manifest.samples:
        sample = load_sample(manifest, ref)
        target = png_out / ref.signer / ref.label / f"{ref.take:03d}.png"
        target.parent.mkdir(parents=True, exist_ok=True)
        save_png(encode(sample.sequence), target)
    print(f"wrote {len(manifest.samples)} PNG images -> {png_out}")
    return EXIT_OK


def _print_report(report) -> None:
    for name in METRIC_NAMES:
        agg = report.aggregate[name]
        print(f"{name:16s} {format_mean_std(agg['mean'], agg['std'])}")
    if report.timing:
        print(
            f"{'latency':16s} median {report.timing['median_ms']:.2f} ms, "
            f"p95 {report.timing['p95_ms']:.2f} ms over {report.timing['count']} sequences"
        )


def cmd_run(args) -> int:
    cfg = _load_config(args)
    report = runner.run_experiment(cfg, force=args.force)
    print(f"run complete: {len(report.sections)} sections -> {cfg.out}")
    _print_report(report)
    return EXIT_OK


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    rows = runner.run_ablation(cfg, force=args.force)
    print(f"ablation complete -> {cfg.out}")
    for row in rows:
        cells = " ".join(
            f"{m}={format_mean_std(row['aggregate'][m]['mean'], row['aggregate'][m]['std'])}"
            for m in METRIC_NAMES
        )
        print(f"{row['variant']:14s} aug={row['data_aug']} unif={row['uniformize']} {cells}")
    return EXIT_OK


def cmd_bench(args) -> int:
    stats = runner.run_bench(args.model, args.dataset, count=args.count)
    for stage in ("encode", "resize", "predict", "total"):
        s = stats[stage]
        print(
            f"{stage:8s} median {s['median_ms']:8.3f} ms   "
            f"p95 {s['p95_ms']:8.3f} ms   mean {s['mean_ms']:8.3f} ms"
        )
    if args.json:
        Path(args.json).write_text(json.dumps(stats, sort_keys=True, indent=1) + "\n")
    return EXIT_OK


def cmd_report(args) -> int:
    report = runner.build_report(args.run)
    from .metrics import save_confusion_heatmap, write_report_csv, write_report_json

    write_report_json(report, Path(args.run) / "report.json")
    write_report_csv(report, Path(args.run) / "report.csv")
    if args.heatmaps:
        for section in report.sections:
            png = Path(args.run) / "sections" / f"{section.section_id:03d}" / "confusion.png"
            save_confusion_heatmap(section.confusion, png)
        print(f"wrote {len(report.sections)} row-normalized confusion heatmaps")
    print(f"report over {len(report.sections)} sections:")
    _print_report(report)
    return EXIT_OK


def _add_run_options(p: _Parser) -> None:
    p.add_argument("--config", help="JSON config file with dotted keys")
    p.add_argument("--dataset", help="dataset root (holds manifest.json)")
    p.add_argument("--out", help="run output directory")
    p.add_argument("--seed", type=int, help="run seed (mandatory, here or in the config)")
    p.add_argument("--limit", type=int, help="run only the first N sections")
    p.add_argument("--workers", type=int, help="parallel section workers")
    p.add_argument("--force", action="store_true", help="overwrite a mismatched run directory")
    p.add_argument(
        "--set", action="append", metavar="KEY=VALUE",
        help="override any dotted config key (repeatable)",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="signenc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="convert keypoint JSON trees to landmark files")
    p.add_argument("--root", required=True, help="keypoint JSON tree root")
    p.add_argument("--out", required=True, help="landmark dataset output root")
    p.add_argument("--width", type=int, required=True, help="video frame width in pixels")
    p.add_argument("--height", type=int, required=True, help="video frame height in pixels")
    p.add_argument("--annotations", help="CSV of sign segments for multi-take recordings")
    p.add_argument("--pad", type=int, default=15, help="frames kept around each segment")
    p.add_argument("--fps", type=float, default=30.0)
    p.add_argument("--body-keep", help="comma-separated BODY_25 indices to keep (14 entries)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a synthetic landmark dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--signers", type=int, default=6)
    p.add_argument("--takes", type=int, default=5)
    p.add_argument("--frames", type=int, nargs=2, default=(40, 80), metavar=("MIN", "MAX"))
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("encode", help="encode landmark files to PNG images")
    p.add_argument("--input", required=True, help="a .slm file or a dataset root")
    p.add_argument("--png-out", required=True, help="output PNG file or directory")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("run", help="execute the nested leave-one-person-out experiment")
    _add_run_options(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("ablate", help="run one-at-a-time component toggles")
    _add_run_options(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", help="measure per-sequence classification latency")
    p.add_argument("--model", required=True, help="trained model file (.slc)")
    p.add_argument("--dataset", required=True, help="dataset root to draw sequences from")
    p.add_argument("--count", type=int, default=200)
    p.add_argument("--json", help="also write the stats to this JSON file")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("report", help="re-aggregate a run directory")
    p.add_argument("--run", required=True, help="run directory with completed sections")
    p.add_argument(
        "--heatmaps", action="store_true",
        help="also render per-section confusion heatmap PNGs (needs matplotlib)",
    )
    p.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except runner.RunDirError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAINING
    except _DATA_ERRORS as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
