#!/usr/bin/env python3

"""
SAMO - Speaker-Attractor Multi-center One-class learning.

Command-line tool that generates synthetic multi-speaker corpora, trains
anti-spoofing countermeasures (SAMO, OC-Softmax, softmax), scores them with
and without enrollment, and runs ablations, multi-seed experiments and
2-D embedding projections. Every command writes plain CSV/text files plus
the resolved configuration (config.txt) into its output directory.

Usage: samo <gen-data|train|eval|ablate|project|seeds> [options]
"""

import argparse
import os
import sys
from typing import Optional

import numpy as np

from checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from config import (
    ConfigError,
    get,
    load_config,
    parse_overrides,
    synth_config,
    tdcf_params,
    train_config,
    write_config,
)
from dataset import (
    ParseError,
    ProtocolError,
    auto_protocol,
    corpus_summary,
    generate_synthetic,
    load_corpus,
    scoring_utts,
    split_partitions,
    write_corpus,
)
from display import (
    display_ablation,
    display_corpus_summary,
    display_epoch,
    display_metrics,
    display_seeds,
    print_error,
    start_spinner,
    stop_spinner,
)
from colors import RESET, GREEN, GRAY
from encoder import forward
from metrics import (
    EmptyClassError,
    InvalidCoefficientsError,
    NonFiniteScoreError,
    metrics_row,
    score_set_from_rows,
)
from numerics import (
    DegenerateDataError,
    DimensionMismatchError,
    ZeroNormError,
    l2_normalize_rows,
    make_rng,
    pca_project_2d,
)
from objective import EmptyAttractorsError, TooManySpeakersError, UnknownSpeakerError
from reports import (
    read_score_file,
    write_ablation_report,
    write_history,
    write_metrics,
    write_projection,
    write_seeds_summary,
)
from trainer import (
    ABLATION_SETUPS,
    MODES,
    WITH_ENROLLMENT,
    WITHOUT_ENROLLMENT,
    MissingEnrollmentError,
    NonFiniteLossError,
    evaluate,
    run_ablation,
    run_seeds,
    train,
)
from type_defs import Corpus, MetricsRow, Partition, Protocol, TdcfParams

# Return codes
SUCCESS = 0
USAGE = 1
DATA_ERROR = 2
NUMERIC_ERROR = 3

DATA_ERRORS = (
    ConfigError,
    ParseError,
    ProtocolError,
    DimensionMismatchError,
    UnknownSpeakerError,
    TooManySpeakersError,
    MissingEnrollmentError,
    EmptyClassError,
    InvalidCoefficientsError,
    CheckpointError,
    OSError,
)
NUMERIC_ERRORS = (
    ZeroNormError,
    DegenerateDataError,
    NonFiniteLossError,
    EmptyAttractorsError,
    NonFiniteScoreError,
)

MODE_FLAGS = {
    "enroll": [WITH_ENROLLMENT],
    "noenroll": [WITHOUT_ENROLLMENT],
    "both": [WITH_ENROLLMENT, WITHOUT_ENROLLMENT],
}


class SamoArgumentParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with USAGE."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(USAGE, f"{self.prog}: error: {message}\n")


# =============================================================================
# HELPERS
# =============================================================================


def _resolve_config(args: argparse.Namespace) -> dict[str, str]:
    """Defaults < config file < --set < dedicated flags."""

    overrides = parse_overrides(args.set)

    for flag, key in (("objective", "objective"), ("seed", "seed"), ("corpus", "corpus"), ("out_dir", "out_dir")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = "oc_softmax" if value == "ocs" else str(value)

    return load_config(args.config, overrides)


def _prepare_out_dir(config: dict[str, str]) -> str:
    out_dir = get(config, "out_dir")
    os.makedirs(out_dir, exist_ok=True)
    write_config(config, os.path.join(out_dir, "config.txt"))
    return out_dir


def _protocol(config: dict[str, str], corpus: Corpus) -> Protocol:
    """Explicit speaker lists when given, else the automatic split."""

    enroll = get(config, "enroll_per_speaker")
    train_speakers = get(config, "train_speakers")

    if train_speakers:
        return {
            "train_speakers": train_speakers,
            "dev_speakers": get(config, "dev_speakers"),
            "eval_speakers": get(config, "eval_speakers"),
            "enroll_per_speaker": enroll,
        }
    return auto_protocol(
        corpus, get(config, "n_train_speakers"), get(config, "n_dev_speakers"), enroll
    )


def _load_partitions(config: dict[str, str]) -> tuple[Partition, Partition, Partition]:
    t = start_spinner("Loading corpus")
    corpus = load_corpus(get(config, "corpus"))
    partitions = split_partitions(corpus, _protocol(config, corpus), make_rng(get(config, "seed")))
    stop_spinner(t, f"Loading corpus ({len(corpus['utterances'])} utterances)")
    return partitions


def _partition_by_name(partitions: tuple, name: str) -> Partition:
    return {"train": partitions[0], "dev": partitions[1], "eval": partitions[2]}[name]


# =============================================================================
# COMMANDS
# =============================================================================


def cmd_gen_data(args: argparse.Namespace) -> int:
    """Generate a synthetic corpus and print its partition summary."""

    config = _resolve_config(args)
    out_dir = _prepare_out_dir(config)
    path = args.out or get(config, "corpus")

    t = start_spinner("Generating corpus")
    corpus = generate_synthetic(synth_config(config))
    write_corpus(corpus, path)
    stop_spinner(t, f"Generating corpus -> {path}")

    try:
        partitions = split_partitions(corpus, _protocol(config, corpus), make_rng(get(config, "seed")))
    except ProtocolError as e:
        print(f"{GRAY}Protocol does not fit this corpus ({e}), summarizing all data{RESET}")
        partitions = (
            {"name": "all", "train_utts": corpus["utterances"], "enroll_utts": [], "test_utts": []},
        )

    display_corpus_summary(corpus_summary(partitions))
    print(f"{GRAY}Config written to {os.path.join(out_dir, 'config.txt')}{RESET}")
    return SUCCESS


def _on_epoch(args: argparse.Namespace):
    return None if args.quiet else display_epoch


def cmd_train(args: argparse.Namespace) -> int:
    """Train one model; write best/final checkpoints and the history."""

    config = _resolve_config(args)
    out_dir = _prepare_out_dir(config)
    partitions = _load_partitions(config)
    cfg = train_config(config)

    print(f"\n{GREEN}• Training {cfg['objective']} for {cfg['epochs']} epochs{RESET}\n")
    t = start_spinner("Training") if args.quiet else None
    result = train(cfg, partitions, out_dir, _on_epoch(args))
    if t is not None:
        stop_spinner(t, "Training")

    save_checkpoint(result["best"], os.path.join(out_dir, "best.ckpt"))
    save_checkpoint(result["final"], os.path.join(out_dir, "final.ckpt"))
    write_history(os.path.join(out_dir, "history.csv"), result["history"])

    print(f"\n{GREEN}Best epoch : {result['best_epoch']}{RESET}")
    print(f"{GRAY}Outputs written to {out_dir}{RESET}\n")
    return SUCCESS


def _rescore(path: str, tdcf: TdcfParams) -> list[MetricsRow]:
    """Metrics per scoring mode of an existing score file, in file order."""

    rows = read_score_file(path)
    if not rows:
        raise EmptyClassError(f"Score file '{path}' holds no scores")

    for line_number, row in enumerate(rows, start=2):
        if row["mode"] not in MODES:
            raise ParseError(f"unknown scoring mode '{row['mode']}'", line_number)

    modes = list(dict.fromkeys(r["mode"] for r in rows))

    return [
        metrics_row(mode, score_set_from_rows([r for r in rows if r["mode"] == mode]), tdcf)
        for mode in modes
    ]


def cmd_eval(args: argparse.Namespace) -> int:
    """Score a partition in one or both modes, or rescore an existing score file."""

    config = _resolve_config(args)
    out_dir = _prepare_out_dir(config)
    tdcf = tdcf_params(config)

    if args.scores:
        rows = _rescore(args.scores, tdcf)
        write_metrics(os.path.join(out_dir, "metrics_scores.csv"), rows)
        display_metrics(rows)
        return SUCCESS

    partitions = _load_partitions(config)
    partition = _partition_by_name(partitions, args.partition)
    ckpt = load_checkpoint(args.checkpoint)

    rows = []
    for mode in MODE_FLAGS[args.mode]:
        score_path = os.path.join(out_dir, f"scores_{args.partition}_{mode}.csv")
        t = start_spinner(f"Scoring {args.partition} ({mode})")
        result = evaluate(ckpt, partition, mode, tdcf, score_path)
        stop_spinner(t, f"Scoring {args.partition} ({mode}) -> {score_path}")
        rows.append(result["metrics"])

    write_metrics(os.path.join(out_dir, f"metrics_{args.partition}.csv"), rows)
    display_metrics(rows)
    return SUCCESS


def _setup_overrides(setup: int) -> dict[str, str]:
    """Raw config values of an ablation setup, for the config echo."""

    overrides = {"objective": "samo"}
    for key, value in ABLATION_SETUPS[setup][1].items():
        if isinstance(value, bool):
            overrides[key] = "true" if value else "false"
        elif value is None:
            overrides[key] = ""
        elif isinstance(value, list):
            overrides[key] = ",".join(str(v) for v in value)
        else:
            overrides[key] = str(value)
    return overrides


def cmd_ablate(args: argparse.Namespace) -> int:
    """Train and evaluate one ablation setup."""

    config = _resolve_config(args)
    config.update(_setup_overrides(args.setup))
    out_dir = _prepare_out_dir(config)
    partitions = _load_partitions(config)
    base = train_config(config)

    label = ABLATION_SETUPS[args.setup][0]
    print(f"\n{GREEN}• Setup {args.setup} : {label}{RESET}\n")
    t = start_spinner("Training") if args.quiet else None
    row, result = run_ablation(args.setup, base, partitions, out_dir, _on_epoch(args))
    if t is not None:
        stop_spinner(t, "Training")

    write_history(os.path.join(out_dir, "history.csv"), result["history"])
    save_checkpoint(result["best"], os.path.join(out_dir, "best.ckpt"))
    write_ablation_report(os.path.join(out_dir, "ablation.csv"), [row])
    display_ablation([row])
    return SUCCESS


def cmd_project(args: argparse.Namespace) -> int:
    """Export 2-D PCA projections of selected speakers' embeddings."""

    config = _resolve_config(args)
    out_dir = _prepare_out_dir(config)
    partitions = _load_partitions(config)
    partition = _partition_by_name(partitions, args.partition)
    ckpt = load_checkpoint(args.checkpoint)

    utts = scoring_utts(partition)
    present = sorted({u["speaker"] for u in utts})
    speakers = [s.strip() for s in args.speakers.split(",") if s.strip()] if args.speakers else present

    unknown = [s for s in speakers if s not in present]
    if unknown:
        raise UnknownSpeakerError(
            f"Speakers not in the {args.partition} partition: {', '.join(unknown)}"
        )

    selected = [u for u in utts if u["speaker"] in set(speakers)]
    if not selected:
        raise DegenerateDataError("No utterances to project")

    embeddings, _ = forward(ckpt["encoder"], np.vstack([u["features"] for u in selected]))
    units, _ = l2_normalize_rows(embeddings)
    projected = pca_project_2d(units)

    rows = [
        {
            "utt_id": u["utt_id"],
            "speaker": u["speaker"],
            "label": u["label"],
            "px": float(p[0]),
            "py": float(p[1]),
        }
        for u, p in zip(selected, projected)
    ]

    path = args.out or os.path.join(out_dir, "projection.csv")
    write_projection(path, rows)
    print(f"{GREEN}✓{RESET} {len(rows)} embeddings projected -> {path}")
    return SUCCESS


def cmd_seeds(args: argparse.Namespace) -> int:
    """Train once per seed and report mean and best eval metrics."""

    try:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    except ValueError:
        raise ConfigError(f"--seeds expects comma-separated integers, got '{args.seeds}'")

    config = _resolve_config(args)
    out_dir = _prepare_out_dir(config)
    partitions = _load_partitions(config)
    cfg = train_config(config)

    t = start_spinner(f"Training {cfg['objective']} on {len(seeds)} seeds")
    summary = run_seeds(cfg, partitions, seeds)
    stop_spinner(t, f"Training {cfg['objective']} on {len(seeds)} seeds")

    write_seeds_summary(os.path.join(out_dir, "seeds.csv"), summary)
    display_seeds(summary)
    return SUCCESS


# =============================================================================
# ARGUMENTS
# =============================================================================


def build_parser() -> SamoArgumentParser:
    """Parser with one subcommand per operation."""

    formatter = argparse.ArgumentDefaultsHelpFormatter

    common = SamoArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="key=value config file")
    common.add_argument(
        "--set", action="append", default=[], metavar="KEY=VALUE", help="Override a config key"
    )
    common.add_argument("--seed", type=int, default=None, help="Override the seed key")
    common.add_argument("--corpus", default=None, help="Override the corpus path")
    common.add_argument("--out-dir", "--out_dir", dest="out_dir", default=None, help="Output directory")
    common.add_argument("--quiet", action="store_true", help="No per-epoch lines")

    parser = SamoArgumentParser(
        prog="samo", description="Speaker-attractor one-class anti-spoofing", formatter_class=formatter
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    gen = sub.add_parser("gen-data", parents=[common], formatter_class=formatter, help="Generate a synthetic corpus")
    gen.add_argument("--out", default=None, help="Corpus file (default: the corpus key)")
    gen.set_defaults(handler=cmd_gen_data)

    tr = sub.add_parser("train", parents=[common], formatter_class=formatter, help="Train a countermeasure")
    tr.add_argument("--objective", choices=["samo", "ocs", "softmax"], default=None, help="Training objective")
    tr.set_defaults(handler=cmd_train)

    ev = sub.add_parser("eval", parents=[common], formatter_class=formatter, help="Score a partition")
    source = ev.add_mutually_exclusive_group(required=True)
    source.add_argument("--checkpoint", help="Checkpoint file")
    source.add_argument("--scores", help="Score file to recompute metrics from, instead of scoring")
    ev.add_argument("--partition", choices=["train", "dev", "eval"], default="eval", help="Partition to score")
    ev.add_argument("--mode", choices=sorted(MODE_FLAGS), default="both", help="Scoring mode")
    ev.set_defaults(handler=cmd_eval)

    ab = sub.add_parser("ablate", parents=[common], formatter_class=formatter, help="Run an ablation setup")
    ab.add_argument("--setup", type=int, choices=sorted(ABLATION_SETUPS), required=True, help="Setup id")
    ab.set_defaults(handler=cmd_ablate)

    pr = sub.add_parser("project", parents=[common], formatter_class=formatter, help="Export 2-D embedding projections")
    pr.add_argument("--checkpoint", required=True, help="Checkpoint file")
    pr.add_argument("--partition", choices=["train", "dev", "eval"], default="eval", help="Partition to project")
    pr.add_argument("--speakers", default=None, help="Comma-separated speakers (default: all)")
    pr.add_argument("--out", default=None, help="Projection file (default: <out_dir>/projection.csv)")
    pr.set_defaults(handler=cmd_project)

    se = sub.add_parser("seeds", parents=[common], formatter_class=formatter, help="Train on several seeds")
    se.add_argument("--objective", choices=["samo", "ocs", "softmax"], default=None, help="Training objective")
    se.add_argument("--seeds", default="0,1,2", help="Comma-separated seeds")
    se.set_defaults(handler=cmd_seeds)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    """
    Main entry point for SAMO.

    Args:
        argv: Arguments without the program name (sys.argv[1:] when None).

    Returns:
        0 on success, 1 on usage errors, 2 on data/config errors,
        3 on numeric failures.
    """

    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else USAGE

    try:
        return args.handler(args)

    except DATA_ERRORS as e:
        print_error(str(e))
        return DATA_ERROR

    except NUMERIC_ERRORS as e:
        print_error(f"Numeric failure : {e}")
        return NUMERIC_ERROR

    except KeyboardInterrupt:
        print("\n\nInterrupted by user.\n")
        return SUCCESS


if __name__ == "__main__":
    sys.exit(main())
