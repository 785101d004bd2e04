"""Command-line interface.

Subcommands cover the full pipeline: `synth` writes a synthetic corpus,
`build-vocab` derives a vocabulary from augmented training text, `train`
runs one adaptation plan end to end, `evaluate` re-scores a checkpoint,
`matrix` fills a source x target transfer matrix, and `loo` runs
leave-one-out over events. Every run directory gets a manifest.json with
input digests and the exact configuration.

Exit codes: 0 success, 2 configuration or usage problems, 3 data or
checkpoint problems, 4 incomplete experiments.

Relative input paths that do not exist under the working directory are
retried under $CRISISADAPT_DATA_DIR when it is set.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import __version__
from . import checkpoint as ckpt
from .corpus import (
    RELEVANCE_MAP,
    TOPIC_MAP,
    compose_plan,
    load_dataset,
    load_registry,
    splits_by_event,
    unify_labels,
    write_dataset,
    write_registry,
)
from .errors import (
    CheckpointError,
    CompatibilityError,
    ConfigError,
    DataError,
    IncompleteExperimentError,
)
from .evaluation import (
    evaluate,
    pearson_row_correlation,
    write_correlation_csv,
    write_matrix_csv,
    write_matrix_provenance,
)
from .experiment import (
    augmented_texts,
    encode_eval_inputs,
    encode_training_examples,
    run_loo,
    run_matrix,
)
from .model import init_params, named_config
from .prompt import SCENARIOS
from .rng import mix_seed
from .synth import DEFAULT_EVENTS, generate_corpus
from .tokenizer import DEFAULT_MAX_SIZE, DEFAULT_MIN_FREQ, build_vocab, load_vocab, save_vocab
from .train import TrainConfig, train, write_history

ENV_DATA_DIR = "CRISISADAPT_DATA_DIR"
LABEL_SCHEMES = {"relevance": RELEVANCE_MAP, "topic": TOPIC_MAP}


def _resolve(path: str) -> Path:
    p = Path(path)
    base = os.environ.get(ENV_DATA_DIR)
    if not p.is_absolute() and base and not p.exists():
        return Path(base) / p
    return p


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _out_dir(raw: str) -> Path:
    out = Path(raw)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = _resolve(path)
    try:
        cfg = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: malformed config JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{p}: config must be a JSON object")
    unknown = set(cfg) - {"model", "train", "seed"}
    if unknown:
        raise ConfigError(f"{p}: unknown config sections {sorted(unknown)}")
    return cfg


def _train_config(cfg: dict, seed_flag: int | None) -> TrainConfig:
    section = dict(cfg.get("train", {}))
    if "seed" not in section and "seed" in cfg:
        section["seed"] = cfg["seed"]
    if seed_flag is not None:
        section["seed"] = seed_flag
    try:
        return TrainConfig(**section)
    except TypeError as exc:
        raise ConfigError(f"bad train config: {exc}") from None


def _model_config(cfg: dict, vocab_size: int):
    section = dict(cfg.get("model", {}))
    size = section.pop("size", "tiny")
    try:
        return named_config(size, vocab_size, **section)
    except TypeError as exc:
        raise ConfigError(f"bad model config: {exc}") from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _load_data(args):
    registry = load_registry(_resolve(args.registry))
    mapping = LABEL_SCHEMES[args.label_scheme]
    train_records = unify_labels(load_dataset(_resolve(args.train_file), registry), mapping)
    test_records = unify_labels(load_dataset(_resolve(args.test_file), registry), mapping)
    return train_records, test_records, registry


def _write_manifest(out: Path, command: str, payload: dict) -> None:
    core = {"command": command, "version": __version__, **payload}
    run_id = hashlib.sha256(
        json.dumps(core, sort_keys=True, default=str).encode("utf-8")
    ).hexdigest()[:12]
    manifest = {
        "run_id": run_id,
        "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(
            timespec="seconds"
        ),
        **core,
    }
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n",
        encoding="utf-8",
    )


def _input_digests(args, names) -> dict[str, str]:
    digests = {}
    for name in names:
        raw = getattr(args, name, None)
        if raw:
            p = _resolve(raw)
            digests[str(p)] = _sha256_file(p)
    return digests


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> None:
    splits, registry = generate_corpus(
        DEFAULT_EVENTS, n_train=args.n_train, n_test=args.n_test, seed=args.seed
    )
    out = _out_dir(args.out)
    train_records = [r for ev in sorted(splits) for r in splits[ev].train]
    test_records = [r for ev in sorted(splits) for r in splits[ev].test]
    write_dataset(train_records, out / "train.tsv")
    write_dataset(test_records, out / "test.tsv")
    write_registry(registry, out / "registry.json")
    print(
        f"wrote {len(train_records)} train / {len(test_records)} test records "
        f"for {len(splits)} events to {out}"
    )


def cmd_build_vocab(args) -> None:
    registry = load_registry(_resolve(args.registry))
    records = unify_labels(
        load_dataset(_resolve(args.train_file), registry), LABEL_SCHEMES[args.label_scheme]
    )
    texts = augmented_texts(records, args.scenario, registry)
    vocab = build_vocab(texts, min_freq=args.min_freq, max_size=args.max_size)
    save_vocab(vocab, args.out)
    print(f"vocabulary: {vocab.size} tokens, hash {vocab.content_hash} -> {args.out}")


def cmd_train(args) -> None:
    cfg = _load_config_file(args.config)
    train_records, test_records, registry = _load_data(args)
    vocab = load_vocab(_resolve(args.vocab))
    tcfg = _train_config(cfg, args.seed)
    mcfg = _model_config(cfg, vocab.size)
    splits = splits_by_event(train_records, test_records)
    sources = (
        {s for s in args.source_events.split(",") if s}
        if args.source_events
        else {args.target_event}
    )
    plan = compose_plan(sources, args.target_event, args.scenario, splits, tcfg.seed)

    out = _out_dir(args.out)
    params = init_params(mcfg, mix_seed(plan.seed, "init"))
    start_step = 0
    optimizer = None
    if args.resume:
        loaded = ckpt.load_checkpoint(
            _resolve(args.resume), expected_vocab_hash=vocab.content_hash
        )
        if loaded.config != mcfg:
            raise CompatibilityError(
                f"checkpoint model config {loaded.config} differs from requested {mcfg}"
            )
        params.load_arrays(loaded.arrays)
        optimizer = loaded.restore_optimizer(params)
        if optimizer is None:
            raise CompatibilityError("checkpoint has no optimizer state; cannot resume")
        start_step = loaded.step

    examples = encode_training_examples(
        plan.source_dataset, plan.scenario, registry, vocab, mcfg
    )
    result = train(
        params,
        examples,
        mcfg,
        replace(tcfg, seed=plan.seed),
        start_step=start_step,
        optimizer=optimizer,
    )
    encoded, gold = encode_eval_inputs(
        plan.target_test_set, plan.scenario, registry[plan.target_event], vocab, mcfg
    )
    report = evaluate(params, encoded, gold, vocab, mcfg)

    write_history(out / "history.csv", result.history)
    ckpt.save_checkpoint(
        out / "checkpoint.castckpt",
        params,
        mcfg,
        vocab.content_hash,
        step=result.final_step,
        seed=plan.seed,
        optimizer=result.optimizer,
        extra={
            "train": asdict(tcfg),
            "task_id": plan.task_id,
            "total_steps": result.total_steps,
        },
    )
    (out / "report.json").write_text(
        json.dumps({"task_id": plan.task_id, **report.to_dict()}, indent=2, sort_keys=True)
        + "\n",
        encoding="utf-8",
    )
    _write_manifest(
        out,
        "train",
        {
            "task_id": plan.task_id,
            "scenario": plan.scenario,
            "source_events": sorted(plan.source_events),
            "target_event": plan.target_event,
            "seed": tcfg.seed,
            "config": {"model": asdict(mcfg), "train": asdict(tcfg)},
            "inputs": _input_digests(args, ("train_file", "test_file", "registry", "vocab")),
            "vocab_hash": vocab.content_hash,
            "steps": {"start": start_step, "final": result.final_step,
                      "total": result.total_steps},
            "artifacts": {
                "checkpoint": "checkpoint.castckpt",
                "history": "history.csv",
                "report": "report.json",
            },
        },
    )
    last = result.history[-1] if result.history else None
    print(f"task {plan.task_id}: step {result.final_step}/{result.total_steps}")
    if last is not None:
        print(f"final step loss {last.loss:.4f} at lr {last.lr:.3g}")
    print(
        f"target accuracy {report.accuracy:.4f}, weighted F1 {report.weighted_f1:.4f}, "
        f"fallback rate {report.fallback_rate:.4f}"
    )


def cmd_evaluate(args) -> None:
    vocab = load_vocab(_resolve(args.vocab))
    loaded = ckpt.load_checkpoint(
        _resolve(args.checkpoint), expected_vocab_hash=vocab.content_hash
    )
    mcfg = loaded.config
    params = init_params(mcfg, 0)
    params.load_arrays(loaded.arrays)

    registry = load_registry(_resolve(args.registry))
    records = unify_labels(
        load_dataset(_resolve(args.test_file), registry), LABEL_SCHEMES[args.label_scheme]
    )
    records = [r for r in records if r.event_id == args.target_event]
    if not records:
        raise DataError(f"no test records for event {args.target_event!r}")
    encoded, gold = encode_eval_inputs(
        records, args.scenario, registry[args.target_event], vocab, mcfg
    )
    report = evaluate(params, encoded, gold, vocab, mcfg)

    out = _out_dir(args.out)
    (out / "report.json").write_text(
        json.dumps(
            {"target_event": args.target_event, "scenario": args.scenario,
             **report.to_dict()},
            indent=2,
            sort_keys=True,
        )
        + "\n",
        encoding="utf-8",
    )
    _write_manifest(
        out,
        "evaluate",
        {
            "scenario": args.scenario,
            "target_event": args.target_event,
            "inputs": _input_digests(args, ("test_file", "registry", "vocab", "checkpoint")),
            "vocab_hash": vocab.content_hash,
            "checkpoint_step": loaded.step,
            "artifacts": {"report": "report.json"},
        },
    )
    print(
        f"{args.target_event}/{args.scenario}: accuracy {report.accuracy:.4f}, "
        f"weighted F1 {report.weighted_f1:.4f}, fallback rate {report.fallback_rate:.4f} "
        f"({report.n} examples)"
    )


def _experiment_vocab(args, out: Path, train_records, registry):
    if args.vocab:
        return load_vocab(_resolve(args.vocab))
    texts = augmented_texts(train_records, args.scenario, registry)
    vocab = build_vocab(texts, min_freq=args.min_freq, max_size=args.max_size)
    save_vocab(vocab, out / "vocab.txt")
    return vocab


def cmd_matrix(args) -> None:
    cfg = _load_config_file(args.config)
    train_records, test_records, registry = _load_data(args)
    splits = splits_by_event(train_records, test_records)
    events = sorted(args.events.split(",")) if args.events else sorted(splits)
    out = _out_dir(args.out)
    vocab = _experiment_vocab(args, out, train_records, registry)
    tcfg = _train_config(cfg, args.seed)
    mcfg = _model_config(cfg, vocab.size)

    matrix = run_matrix(
        splits,
        registry,
        events,
        args.scenario,
        vocab,
        mcfg,
        tcfg,
        diagonal_mode=args.diagonal,
        k=args.k,
        seed=tcfg.seed,
        jobs=args.jobs,
    )
    write_matrix_csv(out / "matrix.csv", matrix)
    write_matrix_provenance(out / "provenance.json", matrix)
    # Pearson needs at least 3 paired columns per row pair
    points = len(matrix.events) - (2 if args.exclude_self else 0)
    artifacts = {"matrix": "matrix.csv", "provenance": "provenance.json"}
    if points >= 3:
        corr = pearson_row_correlation(matrix, exclude_self=args.exclude_self)
        write_correlation_csv(out / "correlation.csv", matrix.events, corr)
        artifacts["correlation"] = "correlation.csv"
    else:
        print(f"skipping row correlations: only {points} paired points per row pair")
    _write_manifest(
        out,
        "matrix",
        {
            "scenario": args.scenario,
            "events": list(matrix.events),
            "diagonal_mode": matrix.diagonal_mode,
            "k": args.k,
            "seed": tcfg.seed,
            "exclude_self": args.exclude_self,
            "config": {"model": asdict(mcfg), "train": asdict(tcfg)},
            "inputs": _input_digests(args, ("train_file", "test_file", "registry", "vocab")),
            "vocab_hash": vocab.content_hash,
            "artifacts": artifacts,
        },
    )
    print("accuracy matrix (rows = source, columns = target):")
    width = max(len(e) for e in matrix.events)
    print(" " * (width + 2) + "  ".join(f"{e:>8}" for e in matrix.events))
    for s in matrix.events:
        cells = "  ".join(f"{matrix.cells[(s, t)]:8.4f}" for t in matrix.events)
        print(f"{s:>{width}}  {cells}")


def cmd_loo(args) -> None:
    cfg = _load_config_file(args.config)
    train_records, test_records, registry = _load_data(args)
    splits = splits_by_event(train_records, test_records)
    events = sorted(args.events.split(",")) if args.events else sorted(splits)
    out = _out_dir(args.out)
    vocab = _experiment_vocab(args, out, train_records, registry)
    tcfg = _train_config(cfg, args.seed)
    mcfg = _model_config(cfg, vocab.size)

    plans, results, table = run_loo(
        splits, registry, events, args.scenario, vocab, mcfg, tcfg,
        seed=tcfg.seed, jobs=args.jobs,
    )
    doc = {
        "scenario": args.scenario,
        "plans": [
            {
                "task_id": p.task_id,
                "target_event": p.target_event,
                "source_events": sorted(p.source_events),
                "seed": p.seed,
            }
            for p in plans
        ],
        **table,
    }
    (out / "loo.json").write_text(
        json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_manifest(
        out,
        "loo",
        {
            "scenario": args.scenario,
            "events": events,
            "seed": tcfg.seed,
            "config": {"model": asdict(mcfg), "train": asdict(tcfg)},
            "inputs": _input_digests(args, ("train_file", "test_file", "registry", "vocab")),
            "vocab_hash": vocab.content_hash,
            "artifacts": {"table": "loo.json"},
        },
    )
    for target, row in table["per_target"].items():
        print(
            f"{target}: accuracy {row['accuracy']:.4f}, weighted F1 "
            f"{row['weighted_f1']:.4f} ({row['n']} examples)"
        )
    mean = table["mean"]
    print(
        f"mean over {mean['targets']} targets: accuracy {mean['accuracy']:.4f}, "
        f"weighted F1 {mean['weighted_f1']:.4f}"
    )


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crisisadapt",
        description="Event-aware crisis message classification experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--train-file", required=True, help="training TSV")
    data.add_argument("--test-file", required=True, help="test TSV")
    data.add_argument("--registry", required=True, help="event registry JSON")
    data.add_argument(
        "--label-scheme",
        choices=sorted(LABEL_SCHEMES),
        default="relevance",
        help="raw label unification map (default: relevance)",
    )

    run = argparse.ArgumentParser(add_help=False)
    run.add_argument("--scenario", choices=SCENARIOS, required=True)
    run.add_argument("--config", help="JSON config with model/train sections")
    run.add_argument("--seed", type=int, default=None, help="override the run seed")
    run.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("synth", help="write a synthetic multi-event corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-train", type=int, default=48, help="train records per event")
    p.add_argument("--n-test", type=int, default=24, help="test records per event")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-vocab", help="build a vocabulary from augmented text")
    p.add_argument("--train-file", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--label-scheme", choices=sorted(LABEL_SCHEMES), default="relevance")
    p.add_argument("--scenario", choices=SCENARIOS, required=True)
    p.add_argument("--min-freq", type=int, default=DEFAULT_MIN_FREQ)
    p.add_argument("--max-size", type=int, default=DEFAULT_MAX_SIZE)
    p.add_argument("--out", required=True, help="vocabulary file to write")
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("train", parents=[data, run], help="train one adaptation plan")
    p.add_argument("--vocab", required=True, help="vocabulary file")
    p.add_argument("--target-event", required=True)
    p.add_argument(
        "--source-events",
        help="comma-separated source events (default: the target event)",
    )
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a test set")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--test-file", required=True)
    p.add_argument("--registry", required=True)
    p.add_argument("--label-scheme", choices=sorted(LABEL_SCHEMES), default="relevance")
    p.add_argument("--scenario", choices=SCENARIOS, required=True)
    p.add_argument("--target-event", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("matrix", parents=[data, run], help="fill a transfer matrix")
    p.add_argument("--vocab", help="vocabulary file (default: build from training data)")
    p.add_argument("--min-freq", type=int, default=1, help="for a freshly built vocabulary")
    p.add_argument("--max-size", type=int, default=DEFAULT_MAX_SIZE)
    p.add_argument("--events", help="comma-separated subset (default: all in the data)")
    p.add_argument("--diagonal", choices=("standard_split", "five_fold_mean"),
                   default="standard_split")
    p.add_argument("--k", type=int, default=5, help="folds for five_fold_mean")
    p.add_argument("--exclude-self", action="store_true",
                   help="drop self-transfer columns from row correlations")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_matrix)

    p = sub.add_parser("loo", parents=[data, run], help="leave-one-out over events")
    p.add_argument("--vocab", help="vocabulary file (default: build from training data)")
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--max-size", type=int, default=DEFAULT_MAX_SIZE)
    p.add_argument("--events", help="comma-separated subset (default: all in the data)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_loo)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
        return 0
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IncompleteExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except (DataError, CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
