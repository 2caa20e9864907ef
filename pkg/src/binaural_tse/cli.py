"""Command-line entry point: synth, train, eval, extract, inspect-hrir.

Every invocation prints one JSON summary line on stdout (also on failure)
and logs to stderr. Exit codes: 0 success, 1 runtime failure, 2 usage
error, 3 validation error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE, EXIT_VALIDATION = 0, 1, 2, 3

# Path-only environment overrides for `train`; flags take precedence.
ENV_PATHS = {
    "train_manifest": "BTSE_TRAIN_MANIFEST",
    "valid_manifest": "BTSE_VALID_MANIFEST",
    "out_dir": "BTSE_OUT_DIR",
}

log = logging.getLogger("binaural_tse")


class UsageError(Exception):
    pass


class ValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _corpus(spec: str):
    from .spatial_synth import DirectoryCorpus, SyntheticCorpus

    if spec.startswith("synthetic"):
        _, _, n = spec.partition(":")
        return SyntheticCorpus(num_speakers=int(n) if n else 12)
    return DirectoryCorpus(spec)


def _hrir(spec: str, resolution: int, mapping=None):
    from .spatial_synth import load_hrir_db, synth_spherical_hrir

    if spec.startswith("synthetic"):
        _, _, res = spec.partition(":")
        return synth_spherical_hrir(int(res) if res else resolution)
    return load_hrir_db(spec, resolution, mapping_file=mapping)


def cmd_synth(args) -> dict:
    from .spatial_synth import generate_dataset

    if args.count < 0:
        raise ValidationError("--count must be non-negative")
    try:
        corpus = _corpus(args.corpus)
        db = _hrir(args.hrir, args.resolution, args.hrir_mapping)
    except (FileNotFoundError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc
    manifest = generate_dataset(corpus, db, args.out, args.count, split=args.split, seed=args.seed,
                                duration_s=args.duration, enrollment_duration_s=args.enrollment_duration,
                                subtype=args.subtype, paired=args.paired)
    return {"manifest": str(manifest), "count": args.count, "split": args.split, "seed": args.seed}


def _train_config(args):
    from .trainer import TrainConfig

    try:
        config = TrainConfig.from_yaml(args.config)
    except (OSError, ValueError, TypeError) as exc:
        raise ValidationError(f"bad config {args.config}: {exc}") from exc
    for key, env in ENV_PATHS.items():
        flag = getattr(args, key)
        if flag is not None:
            setattr(config, key, flag)
        elif os.environ.get(env):
            setattr(config, key, os.environ[env])
    if not config.train_manifest or not Path(config.train_manifest).exists():
        raise ValidationError(f"training manifest {config.train_manifest!r} not found")
    if config.valid_manifest and not Path(config.valid_manifest).exists():
        raise ValidationError(f"validation manifest {config.valid_manifest!r} not found")
    return config


def cmd_train(args) -> dict:
    from .trainer import Checkpoint, train

    config = _train_config(args)
    resume = None
    if args.resume:
        try:
            resume = Checkpoint.load(args.resume)
        except (OSError, ValueError) as exc:
            raise ValidationError(str(exc)) from exc
    ckpt = train(config, resume=resume)
    s = ckpt.state
    return {
        "out_dir": config.out_dir,
        "last_checkpoint": str(Path(config.out_dir) / "last.pt"),
        "step": s["step"],
        "epoch": s["epoch"],
        "final_loss": s["loss_history"][-1] if s["loss_history"] else None,
        "best_valid_si_sdr": s["best_valid_si_sdr"],
    }


def cmd_eval(args) -> dict:
    from .objectives import ORACLE, evaluate, known_metrics

    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = set(metrics) - set(known_metrics())
    if unknown:
        raise ValidationError(f"unknown metrics {sorted(unknown)}")
    if args.checkpoint != ORACLE and not Path(args.checkpoint).exists():
        raise ValidationError(f"checkpoint {args.checkpoint} not found")
    if not Path(args.manifest).exists():
        raise ValidationError(f"manifest {args.manifest} not found")
    report = evaluate(args.checkpoint, args.manifest, metrics=metrics, reference=args.reference)
    report.write(args.out)
    return {"report": str(args.out), **report.summary()}


def cmd_extract(args) -> dict:
    from .spatial_synth import read_wav, write_wav
    from .trainer import Checkpoint, VariantMismatchError, extract

    try:
        ckpt = Checkpoint.load(args.checkpoint)
    except (OSError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc
    try:
        left = read_wav(args.mix_left)[0]
        right = read_wav(args.mix_right)[0] if args.mix_right else None
        enrollment = read_wav(args.enrollment)[0]
        out = extract(ckpt, left, right, enrollment)
    except VariantMismatchError as exc:
        raise ValidationError(str(exc)) from exc
    except (OSError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc
    write_wav(args.out, out)
    return {"output": str(args.out), "num_samples": len(out), "variant": ckpt.model_config.variant}


def cmd_inspect_hrir(args) -> dict:
    from .spatial_synth import SAMPLE_RATE

    try:
        db = _hrir(args.hrir, args.resolution, args.hrir_mapping)
    except (FileNotFoundError, ValueError) as exc:
        raise ValidationError(str(exc)) from exc
    itd = {}
    for az, pair in db.pairs.items():
        itd[str(az)] = int(abs(pair.left).argmax()) - int(abs(pair.right).argmax())
    return {
        "source_tag": db.source_tag,
        "resolution_deg": db.resolution_deg,
        "num_azimuths": len(db),
        "azimuths": db.azimuths,
        "ir_length": db.ir_length,
        "sample_rate": SAMPLE_RATE,
        "peak_lag_left_minus_right": itd,
    }


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="binaural-tse", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, required=True)

    s = sub.add_parser("synth", help="render binaural mixtures and a manifest")
    s.add_argument("--corpus", required=True, help="speech directory (speaker subfolders of WAVs) or synthetic[:SPEAKERS]")
    s.add_argument("--hrir", required=True, help="HRIR directory (azi_{deg}{L|R}.wav) or synthetic[:RESOLUTION]")
    s.add_argument("--hrir-mapping", default=None, help="JSON file mapping azimuth -> {L, R} file names")
    s.add_argument("--resolution", type=int, default=5, help="HRIR grid resolution in degrees")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--count", type=int, required=True, help="number of mixtures")
    s.add_argument("--split", choices=("train", "valid", "test"), default="train")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--duration", type=float, default=4.0, help="mixture length in seconds")
    s.add_argument("--enrollment-duration", type=float, default=8.0, help="enrollment length in seconds")
    s.add_argument("--subtype", choices=("float32", "pcm16"), default="float32", help="WAV sample format")
    s.add_argument("--paired", action="store_true",
                   help="render each mixture twice, once per speaker as target")
    s.set_defaults(func=cmd_synth)

    t = sub.add_parser("train", help="train a model from a YAML config")
    t.add_argument("--config", required=True, help="YAML training config")
    t.add_argument("--resume", default=None, help="checkpoint to resume from")
    t.add_argument("--train-manifest", dest="train_manifest", default=None)
    t.add_argument("--valid-manifest", dest="valid_manifest", default=None)
    t.add_argument("--out-dir", dest="out_dir", default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint on a manifest")
    e.add_argument("--checkpoint", required=True, help="checkpoint file, or 'oracle' to score the clean reference")
    e.add_argument("--manifest", required=True)
    e.add_argument("--out", required=True, help="report file (JSON lines)")
    e.add_argument("--metrics", default="si_sdr,sdr", help="comma list from si_sdr,sdr,pesq,stoi")
    e.add_argument("--reference", choices=("dry", "rendered_left"), default=None,
                   help="reference signal (default: the checkpoint's training reference)")
    e.set_defaults(func=cmd_eval)

    x = sub.add_parser("extract", help="extract the enrolled speaker from a mixture")
    x.add_argument("--checkpoint", required=True)
    x.add_argument("--mix-left", required=True, help="left-ear mixture WAV (the only channel for monaural models)")
    x.add_argument("--mix-right", default=None, help="right-ear mixture WAV (binaural models)")
    x.add_argument("--enrollment", required=True)
    x.add_argument("--out", required=True, help="output WAV (float32)")
    x.set_defaults(func=cmd_extract)

    h = sub.add_parser("inspect-hrir", help="summarise an HRIR database")
    h.add_argument("--hrir", required=True, help="HRIR directory or synthetic[:RESOLUTION]")
    h.add_argument("--hrir-mapping", default=None)
    h.add_argument("--resolution", type=int, default=5)
    h.set_defaults(func=cmd_inspect_hrir)
    return p


def _emit(record: dict) -> None:
    sys.stdout.write(json.dumps(record, default=str) + "\n")
    sys.stdout.flush()


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(exc, file=sys.stderr)
        _emit({"status": "error", "error_class": "usage", "exit_code": EXIT_USAGE, "message": str(exc)})
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        result = args.func(args)
    except ValidationError as exc:
        log.error("%s", exc)
        _emit({"status": "error", "command": args.command, "error_class": "validation",
               "exit_code": EXIT_VALIDATION, "message": str(exc)})
        return EXIT_VALIDATION
    except Exception as exc:
        log.exception("%s failed", args.command)
        _emit({"status": "error", "command": args.command, "error_class": "runtime",
               "exit_code": EXIT_RUNTIME, "message": f"{type(exc).__name__}: {exc}"})
        return EXIT_RUNTIME
    _emit({"status": "ok", "command": args.command, "exit_code": EXIT_OK, **result})
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
