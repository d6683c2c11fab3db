"""Command-line entry point.

Subcommands: import (DSTC2 to canonical), build-vocab, train, eval, lowdata,
ablate, synth. A JSON config file with "model", "train", and "data" sections
supplies defaults; explicit flags win over file values. Every run directory
receives a manifest (resolved config, data hashes, seeds, version,
timestamps) sufficient to reproduce the run.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

logger = logging.getLogger("nbest_slu")


def _setup_logging(log_file: Path | None = None) -> None:
    root = logging.getLogger()
    root.setLevel(logging.INFO)
    root.handlers.clear()
    console = logging.StreamHandler()
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    root.addHandler(console)
    if log_file is not None:
        log_file.parent.mkdir(parents=True, exist_ok=True)

        class JsonFormatter(logging.Formatter):
            def format(self, record):
                return json.dumps(
                    {"ts": self.formatTime(record), "level": record.levelname,
                     "name": record.name, "message": record.getMessage()}
                )

        fh = logging.FileHandler(log_file)
        fh.setFormatter(JsonFormatter())
        root.addHandler(fh)


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, encoding="utf-8") as f:
        cfg = json.load(f)
    unknown = set(cfg) - {"model", "train", "data"}
    if unknown:
        raise ValueError(f"config file {path}: unknown sections {sorted(unknown)}")
    return cfg


def _resolve_configs(args) -> tuple[dict, "TrainConfig", dict]:
    """Merge profile defaults, config-file sections, and CLI flags (flags win)."""
    from .training import PROFILES

    cfg = _load_config_file(getattr(args, "config", None))
    profile = getattr(args, "profile", None) or cfg.get("train", {}).get("profile") or "desk"
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r} (choose from {sorted(PROFILES)})")
    train_kwargs = dict(cfg.get("train", {}))
    train_kwargs.pop("profile", None)
    train_config = PROFILES[profile](**train_kwargs)

    if getattr(args, "no_context", False):
        train_config = replace(train_config, use_context=False)
    if getattr(args, "n_best", None) is not None:
        train_config = replace(train_config, n_cap=args.n_best)
    if getattr(args, "seed", None) is not None:
        train_config = replace(train_config, seed=args.seed)
    if getattr(args, "threshold", None) is not None:
        train_config = replace(train_config, threshold=args.threshold)

    model_section = dict(cfg.get("model", {}))
    data_section = dict(cfg.get("data", {}))
    return model_section, train_config, data_section


def _encoder_config(model_section: dict, vocab_size: int, train_config) -> "EncoderConfig":
    from .encoder import EncoderConfig

    kwargs = dict(model_section)
    kwargs["vocab_size"] = vocab_size
    kwargs.setdefault("dropout", train_config.dropout)
    kwargs.setdefault("max_positions", max(train_config.max_len, kwargs.get("max_positions", 0) or 0))
    return EncoderConfig(**kwargs)


def cmd_import(args) -> int:
    from .corpus import import_dstc2, write_canonical

    split = import_dstc2(args.dstc2_root, args.flist)
    write_canonical(split, args.out)
    logger.info("imported %d samples to %s", len(split), args.out)
    return 0


def cmd_build_vocab(args) -> int:
    from .corpus import read_canonical
    from .representation import build_vocab

    split = read_canonical(args.train, "train")
    vocab = build_vocab(split, min_freq=args.min_freq)
    vocab.save(args.out)
    logger.info("vocabulary of %d tokens written to %s", len(vocab), args.out)
    return 0


def cmd_train(args) -> int:
    from .corpus import build_label_space, read_canonical
    from .manifests import finalize_manifest, start_manifest
    from .representation import build_vocab
    from .training import train

    model_section, train_config, data_section = _resolve_configs(args)
    out = Path(args.out)
    _setup_logging(out / "run_log.jsonl")
    min_freq = int(data_section.get("min_freq", 1))

    train_split = read_canonical(args.train, "train")
    dev_split = read_canonical(args.dev, "dev")
    vocab = build_vocab(train_split, min_freq=min_freq)
    labels = build_label_space(train_split)
    enc_config = _encoder_config(model_section, len(vocab), train_config)

    resolved = {
        "min_freq": min_freq,
        "encoder": enc_config.to_json(),
        "train": train_config.to_json(),
    }
    logger.info("resolved config: %s", json.dumps(resolved, sort_keys=True))
    manifest_path = start_manifest(
        out, "train", config=resolved,
        data_files={"train": args.train, "dev": args.dev},
        seeds={"seed": train_config.seed},
    )
    if args.dry_run:
        finalize_manifest(manifest_path, status="dry-run")
        print(json.dumps(resolved, indent=2, sort_keys=True))
        return 0
    result = train(train_split, dev_split, labels, vocab, enc_config, train_config, out)
    finalize_manifest(manifest_path, results={
        "best_dev_f1": result.best_f1,
        "best_epoch": result.best_epoch,
        "epochs_run": result.epochs_run,
    })
    logger.info("best dev F1 %.4f at epoch %d (checkpoint %s)", result.best_f1, result.best_epoch, result.checkpoint_dir)
    return 0


def cmd_eval(args) -> int:
    from .corpus import read_canonical
    from .evaluation import evaluate_checkpoint

    model_dir = Path(args.model)
    ckpt = model_dir / "checkpoint" if (model_dir / "checkpoint").is_dir() else model_dir
    split = read_canonical(args.test, "test")
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    report = evaluate_checkpoint(
        ckpt, split,
        threshold=args.threshold,
        use_context=not args.no_context,
        n_cap=args.n_best if args.n_best is not None else 10,
        predictions_path=out_path.with_suffix(".predictions.jsonl"),
    )
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(report.to_json(), f, indent=2)
    logger.info("F1 %.4f accuracy %.4f over %d samples -> %s",
                report.f1, report.accuracy, report.n_samples, out_path)
    return 0


def cmd_lowdata(args) -> int:
    from .experiments import run_lowdata

    model_section, train_config, data_section = _resolve_configs(args)
    _setup_logging(Path(args.out) / "run_log.jsonl")
    percents = [float(p) for p in args.percents.split(",") if p.strip()]
    from .corpus import read_canonical
    from .representation import build_vocab

    probe_vocab = build_vocab(read_canonical(args.train, "train"), min_freq=int(data_section.get("min_freq", 1)))
    enc_config = _encoder_config(model_section, len(probe_vocab), train_config)
    results = run_lowdata(
        args.train, args.dev, args.test, percents,
        seed=train_config.seed, enc_config=enc_config, train_config=train_config,
        out_dir=args.out, min_freq=int(data_section.get("min_freq", 1)),
    )
    for p, report in results:
        logger.info("p=%g%%: F1 %.4f accuracy %.4f", p, report.f1, report.accuracy)
    return 0


def cmd_ablate(args) -> int:
    from .corpus import read_canonical
    from .experiments import run_ablation
    from .representation import build_vocab

    model_section, train_config, data_section = _resolve_configs(args)
    _setup_logging(Path(args.out) / "run_log.jsonl")
    min_freq = int(data_section.get("min_freq", 1))
    probe_vocab = build_vocab(read_canonical(args.train, "train"), min_freq=min_freq)
    enc_config = _encoder_config(model_section, len(probe_vocab), train_config)
    result = run_ablation(
        args.train, args.dev, args.test,
        enc_config=enc_config, train_config=train_config,
        out_dir=args.out, repeats=args.repeats, min_freq=min_freq,
    )
    logger.info("mean F1 delta (with - without context): %+.4f", result.mean_f1_delta)
    logger.info("mean accuracy delta: %+.4f", result.mean_accuracy_delta)
    return 0


def cmd_synth(args) -> int:
    from .experiments import SynthSpec, default_synth_spec, write_synthetic_corpus

    if args.spec:
        with open(args.spec, encoding="utf-8") as f:
            spec = SynthSpec.from_json(json.load(f))
    else:
        spec = default_synth_spec(seed=args.seed if args.seed is not None else 0)
    if args.seed is not None:
        spec.seed = args.seed
    paths = write_synthetic_corpus(spec, args.out, args.n_train, args.n_dev, args.n_test)
    logger.info("synthetic corpus written: %s", json.dumps(paths))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nbest-slu",
        description="Spoken language understanding over concatenated N-best ASR hypotheses.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("import", help="convert raw DSTC2 call directories to the canonical format")
    p.add_argument("--dstc2-root", required=True, help="directory containing call directories")
    p.add_argument("--flist", required=True, help="file listing call directories, one per line")
    p.add_argument("--out", required=True, help="output canonical .jsonl file")
    p.set_defaults(func=cmd_import)

    p = sub.add_parser("build-vocab", help="build a word vocabulary from a canonical file")
    p.add_argument("--train", required=True)
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_vocab)

    def add_train_flags(p):
        p.add_argument("--config", help="JSON config file with model/train/data sections")
        p.add_argument("--profile", choices=["desk", "paper"], help="named hyperparameter profile")
        p.add_argument("--no-context", action="store_true", help="drop the system utterance from the input")
        p.add_argument("--n-best", type=int, metavar="K", help="cap on hypotheses per sample")
        p.add_argument("--seed", type=int)
        p.add_argument("--threshold", type=float, help="presence probability threshold")

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out", required=True)
    add_train_flags(p)
    p.add_argument("--dry-run", action="store_true", help="resolve and print the config, then exit")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a canonical test file")
    p.add_argument("--model", required=True, help="training output directory or checkpoint directory")
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True, help="metrics JSON output path")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--no-context", action="store_true")
    p.add_argument("--n-best", type=int, metavar="K")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("lowdata", help="stratified low-data sweep")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--percents", default="5,10,20,50", help="comma-separated percentages")
    p.add_argument("--out", required=True)
    add_train_flags(p)
    p.set_defaults(func=cmd_lowdata)

    p = sub.add_parser("ablate", help="paired runs with and without the system utterance")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--repeats", type=int, default=1, help="average deltas over this many seeds")
    add_train_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--spec", help="SynthSpec JSON file (omit for the built-in default)")
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=2000)
    p.add_argument("--n-dev", type=int, default=400)
    p.add_argument("--n-test", type=int, default=400)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_synth)

    return parser


def _validate_ranges(args) -> None:
    if getattr(args, "n_best", None) is not None and args.n_best < 1:
        raise ValueError(f"--n-best must be >= 1, got {args.n_best}")
    if getattr(args, "threshold", None) is not None and not 0.0 < args.threshold < 1.0:
        raise ValueError(f"--threshold must be in (0, 1), got {args.threshold}")
    if getattr(args, "min_freq", None) is not None and args.min_freq < 1:
        raise ValueError(f"--min-freq must be >= 1, got {args.min_freq}")
    if getattr(args, "repeats", None) is not None and args.repeats < 1:
        raise ValueError(f"--repeats must be >= 1, got {args.repeats}")


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        _validate_ranges(args)
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
