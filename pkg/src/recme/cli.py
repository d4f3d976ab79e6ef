"""Command-line front door for every pipeline stage.

Exit codes: 0 success, 1 domain error (bad data, failed check), 2 usage
error. `--json` emits exactly one machine-readable record on stdout;
human-readable output goes to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import CLIP_RATE
from .audio_io import decode_wav, encode_wav, preprocess as preprocess_wave, PcmWave
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import NOISE_DIR, build_dataset, split
from .gradcheck import TOLERANCE, full_model_gradcheck
from .identification import EnrollmentRequest, enroll, identify
from .model import new_state
from .service import DEFAULT_PORT, serve
from .synth import synth_dataset
from .train import TrainingConfig, export_metrics, fit


class CliError(Exception):
    """Domain failure that should exit 1 with a message."""


def _read_wave(path: str) -> PcmWave:
    try:
        return decode_wav(Path(path).read_bytes())
    except (OSError, ValueError) as exc:
        raise CliError(f"cannot read {path}: {exc}") from exc


def _emit(args, record: dict, human: str) -> None:
    if args.json:
        print(json.dumps(record))
    elif human:
        print(human)


def cmd_preprocess(args) -> dict:
    src = Path(args.in_dir)
    out = Path(args.out)
    if not src.is_dir():
        raise CliError(f"{src} is not a directory")
    # loose files belong to a speaker named after the file; subdirectories
    # are speakers already (the `_noise` directory passes through)
    groups: dict[str, list[Path]] = {}
    for entry in sorted(src.iterdir()):
        if entry.is_dir():
            wavs = sorted(entry.glob("*.wav"))
            if wavs:
                groups[entry.name] = wavs
        elif entry.suffix.lower() == ".wav":
            groups.setdefault(entry.stem, []).append(entry)
    if not groups:
        raise CliError("no audio found")
    total = 0
    for speaker, files in groups.items():
        target = out / speaker
        target.mkdir(parents=True, exist_ok=True)
        written = 0
        for path in files:
            wave = _read_wave(str(path))
            for clip in preprocess_wave(wave, source_id=str(path)):
                clip_bytes = encode_wav(PcmWave(args.rate, 1, clip.samples))
                (target / f"clip_{written:04d}.wav").write_bytes(clip_bytes)
                written += 1
        total += written
    return {"speakers": sorted(groups), "clips_written": total, "out": str(out)}


def cmd_synth(args) -> dict:
    out = synth_dataset(args.speakers, args.seconds, args.seed, args.out)
    return {"out": str(out), "speakers": args.speakers, "seconds": args.seconds,
            "seed": args.seed}


def cmd_train(args) -> dict:
    config = TrainingConfig(
        seed=args.seed, batch_size=args.batch_size, max_epochs=args.max_epochs,
        patience=args.patience,
    )
    try:
        index = build_dataset(args.data)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    if index.num_classes < 2:
        raise CliError("TooFewSpeakers: need at least 2 speaker directories")
    train_set, val_set = split(index, config.split_ratio, config.seed)
    state = new_state(index.registry, seed=config.seed,
                      dropout_rate=config.dropout_rate)

    def on_epoch(m):
        print(
            f"epoch {m.epoch:3d}  step {m.global_step:5d}  "
            f"train {m.train_acc:.3f}/{m.train_loss:.4f}  "
            f"val {m.val_acc:.3f}/{m.val_loss:.4f}  lr {m.lr:.2e}",
            file=sys.stderr,
        )

    result = fit(state, train_set, val_set, config,
                 on_epoch=None if args.json else on_epoch)
    out_path = Path(args.out)
    save_checkpoint(result.state, out_path)
    metrics_path, hist_path = export_metrics(
        result.metrics, result.histograms, out_path.parent
    )
    return {
        "model": str(out_path),
        "metrics": str(metrics_path),
        "histograms": str(hist_path),
        "epochs_run": len(result.metrics),
        "best_epoch": result.best_epoch,
        "best_val_acc": result.best_val_acc,
    }


def cmd_identify(args) -> dict:
    state = load_checkpoint(args.model)
    result = identify(state, _read_wave(args.wav), args.threshold)
    return result.to_dict()


def cmd_enroll(args) -> dict:
    try:
        result = enroll(args.data, EnrollmentRequest(args.name, _read_wave(args.wav)))
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    return {"name": result.name, "class_index": result.class_index,
            "clips_added": result.clips_added, "retrain_needed": result.retrain_needed}


def cmd_serve(args) -> dict:
    serve(args.data, args.model, args.port, static_dir=args.static)
    return {}


def cmd_gradcheck(args) -> dict:
    report = full_model_gradcheck()
    if not args.json:
        for name, err in sorted(report["per_param"].items()):
            print(f"  {name:20s} {err:.3e}", file=sys.stderr)
    if not report["passed"]:
        raise CliError(
            f"gradcheck FAILED: max rel err {report['max_rel_err']:.3e} "
            f"({report['worst_param']}) > {TOLERANCE}"
        )
    return {"max_rel_err": report["max_rel_err"], "worst_param": report["worst_param"],
            "tolerance": TOLERANCE, "passed": True}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="recme", description="speaker identification pipeline"
    )
    parser.add_argument("--json", action="store_true",
                        help="emit one JSON record on stdout")
    sub = parser.add_subparsers(dest="command", required=True)
    data_default = os.environ.get("RECME_DATA_DIR")

    p = sub.add_parser("preprocess", help="resample and clip raw recordings")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rate", type=int, default=CLIP_RATE)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("synth", help="generate a synthetic speaker dataset")
    p.add_argument("--speakers", type=int, required=True)
    p.add_argument("--seconds", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", default=data_default, required=data_default is None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-epochs", type=int, default=200)
    p.add_argument("--patience", type=int, default=10)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("identify", help="identify the speaker in a recording")
    p.add_argument("--model", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("enroll", help="add a speaker's recording to a dataset")
    p.add_argument("--data", default=data_default, required=data_default is None)
    p.add_argument("--name", required=True)
    p.add_argument("--wav", required=True)
    p.set_defaults(func=cmd_enroll)

    p = sub.add_parser("serve", help="run the local HTTP service")
    p.add_argument("--data", default=data_default, required=data_default is None)
    p.add_argument("--model", default=None)
    p.add_argument("--port", type=int, default=DEFAULT_PORT)
    p.add_argument("--static", default=None, help="directory of console assets")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("gradcheck", help="finite-difference check of backprop")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def _human_summary(command: str, record: dict) -> str:
    if command == "identify":
        lines = [
            f"decision:   {record['decision']}"
            + (f" ({record['speaker']})" if record["speaker"] else ""),
            f"confidence: {record['confidence']:.3f}",
            "votes:",
        ]
        for cls, count in record["votes"].items():
            lines.append(f"  class {cls}: {count} clip(s)")
        return "\n".join(lines)
    if command == "train":
        return (f"best val_acc {record['best_val_acc']:.4f} at epoch "
                f"{record['best_epoch']} ({record['epochs_run']} epochs run); "
                f"model -> {record['model']}")
    if command == "gradcheck":
        return (f"gradcheck passed: max rel err {record['max_rel_err']:.3e} "
                f"({record['worst_param']}) <= {record['tolerance']}")
    return json.dumps(record)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        record = args.func(args)
    except CliError as exc:
        if args.json:
            print(json.dumps({"error": str(exc)}))
        print(str(exc), file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        if args.json:
            print(json.dumps({"error": str(exc)}))
        print(str(exc), file=sys.stderr)
        return 1
    _emit(args, record, _human_summary(args.command, record))
    return 0


if __name__ == "__main__":
    sys.exit(main())
