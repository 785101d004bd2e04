"""End-to-end adaptation experiments.

A plan's source records are augmented with their own event's description
at training time; the target's description is used at test time. One
vocabulary (built over augmented source text) is shared across the runs
of an experiment so checkpoints stay comparable.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from functools import partial

import numpy as np

from .corpus import (
    AdaptationPlan,
    CrisisRecord,
    EventDescriptor,
    EventSplits,
    compose_plan,
    fold_split,
    make_folds,
)
from .errors import LabelError, UnknownEventError, VocabError
from .evaluation import (
    AdaptationMatrix,
    EvalReport,
    evaluate,
    loo_table,
    plan_leave_one_out,
)
from .model import ModelConfig, ParameterStore, init_params
from .prompt import construct, target_text
from .rng import mix_seed
from .tokenizer import EOS, UNK, Vocabulary, encode_augmented
from .train import TrainConfig, TrainResult, train


def _augmented(record: CrisisRecord, scenario: str, registry: dict[str, EventDescriptor]):
    if record.event_id not in registry:
        raise UnknownEventError(f"record {record.id!r} names unknown event {record.event_id!r}")
    return construct(record, scenario, registry[record.event_id])


def _target_ids(record: CrisisRecord, vocab: Vocabulary) -> np.ndarray:
    if record.unified_label is None:
        raise LabelError(
            f"record {record.id!r} has no unified label; run label unification first"
        )
    word = target_text(record.unified_label)
    tid = vocab.lookup(word)
    if tid == UNK:
        raise VocabError(f"label word {word!r} missing from vocabulary")
    return np.array([tid, EOS], dtype=np.int64)


def augmented_texts(
    records: list[CrisisRecord], scenario: str, registry: dict[str, EventDescriptor]
) -> list[str]:
    """Augmented input strings, e.g. as a corpus for vocabulary building."""
    return [_augmented(rec, scenario, registry).text for rec in records]


def encode_training_examples(
    records: list[CrisisRecord],
    scenario: str,
    registry: dict[str, EventDescriptor],
    vocab: Vocabulary,
    model_config: ModelConfig,
) -> list[tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """(src_ids, src_mask, target_ids) triples; each record is augmented
    with the description of its own event."""
    out = []
    for rec in records:
        ids, mask = encode_augmented(
            _augmented(rec, scenario, registry), vocab, model_config.max_src_len, pad=False
        )
        out.append(
            (
                np.array(ids, dtype=np.int64),
                np.array(mask, dtype=np.float32),
                _target_ids(rec, vocab),
            )
        )
    return out


def encode_eval_inputs(
    records: list[CrisisRecord],
    scenario: str,
    descriptor: EventDescriptor,
    vocab: Vocabulary,
    model_config: ModelConfig,
) -> tuple[list[tuple[np.ndarray, np.ndarray]], list[str]]:
    """Encoded test inputs (augmented with the target event's description)
    plus the gold label list."""
    encoded = []
    gold = []
    for rec in records:
        if rec.unified_label is None:
            raise LabelError(
                f"record {rec.id!r} has no unified label; run label unification first"
            )
        aug = construct(rec, scenario, descriptor)
        ids, mask = encode_augmented(aug, vocab, model_config.max_src_len, pad=False)
        encoded.append((np.array(ids, dtype=np.int64), np.array(mask, dtype=np.float32)))
        gold.append(rec.unified_label)
    return encoded, gold


@dataclass
class PlanOutcome:
    plan: AdaptationPlan
    params: ParameterStore
    train_result: TrainResult
    report: EvalReport


def run_plan(
    plan: AdaptationPlan,
    registry: dict[str, EventDescriptor],
    vocab: Vocabulary,
    model_config: ModelConfig,
    train_config: TrainConfig,
) -> PlanOutcome:
    """Train on the plan's source dataset, evaluate on its target test set.

    The plan seed drives initialization, epoch shuffles, and dropout, so a
    plan re-run is bit-for-bit reproducible.
    """
    tcfg = replace(train_config, seed=plan.seed)
    params = init_params(model_config, mix_seed(plan.seed, "init"))
    examples = encode_training_examples(
        plan.source_dataset, plan.scenario, registry, vocab, model_config
    )
    result = train(params, examples, model_config, tcfg)
    encoded, gold = encode_eval_inputs(
        plan.target_test_set, plan.scenario, registry[plan.target_event], vocab, model_config
    )
    report = evaluate(params, encoded, gold, vocab, model_config)
    return PlanOutcome(plan=plan, params=params, train_result=result, report=report)


def _cell_plan(
    task: tuple[str, str, int | None],
    splits: dict[str, EventSplits],
    scenario: str,
    k: int,
    seed: int,
) -> AdaptationPlan:
    s, t, fold = task
    if fold is None:
        return compose_plan({s}, t, scenario, splits, mix_seed(seed, "cell", s, t))
    ev = splits[t]
    pooled = list(ev.train) + list(ev.dev) + list(ev.test)
    assignments = make_folds(pooled, k, mix_seed(seed, "folds", t))
    tr, te = fold_split(pooled, assignments, fold)
    return compose_plan(
        {t}, t, scenario, {t: EventSplits(train=tr, test=te)},
        mix_seed(seed, "cell", t, fold),
    )


def _run_cell(task, *, splits, registry, scenario, vocab, model_config, train_config, k, seed):
    plan = _cell_plan(task, splits, scenario, k, seed)
    outcome = run_plan(plan, registry, vocab, model_config, train_config)
    return task, outcome.report


def run_matrix(
    splits: dict[str, EventSplits],
    registry: dict[str, EventDescriptor],
    events,
    scenario: str,
    vocab: Vocabulary,
    model_config: ModelConfig,
    train_config: TrainConfig,
    diagonal_mode: str = "standard_split",
    k: int = 5,
    seed: int = 0,
    jobs: int = 1,
) -> AdaptationMatrix:
    """Fill the full source x target accuracy matrix.

    Off-diagonal cells train on one event and test on another. Diagonal
    cells either reuse the event's own train/test split or average k
    cross-validation folds over all of the event's records. Cell seeds
    derive from (seed, cell), never from execution order, so several
    worker processes change wall time only, not results.
    """
    names = tuple(sorted(events))
    matrix = AdaptationMatrix(events=names, diagonal_mode=diagonal_mode)
    tasks: list[tuple[str, str, int | None]] = []
    for s in names:
        for t in names:
            if s != t or diagonal_mode == "standard_split":
                tasks.append((s, t, None))
            else:
                tasks.extend((t, t, f) for f in range(k))

    runner = partial(
        _run_cell,
        splits=splits,
        registry=registry,
        scenario=scenario,
        vocab=vocab,
        model_config=model_config,
        train_config=train_config,
        k=k,
        seed=seed,
    )
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(runner, tasks))
    else:
        results = [runner(task) for task in tasks]

    fold_reports: dict[str, list[EvalReport]] = {}
    for (s, t, fold), report in results:
        if fold is None:
            matrix.set_cell(
                s,
                t,
                report.accuracy,
                info={
                    "task_id": f"{s}->{t}/{scenario}",
                    "n_test": report.n,
                    "weighted_f1": report.weighted_f1,
                    "fallback_rate": report.fallback_rate,
                    "seed": mix_seed(seed, "cell", s, t),
                },
            )
        else:
            fold_reports.setdefault(t, []).append(report)
    for t, reports in fold_reports.items():
        accs = [r.accuracy for r in reports]
        matrix.set_cell(
            t, t, float(np.mean(accs)), info={"k": k, "fold_accuracies": accs, "seed": seed}
        )
    return matrix


def run_loo(
    splits: dict[str, EventSplits],
    registry: dict[str, EventDescriptor],
    events,
    scenario: str,
    vocab: Vocabulary,
    model_config: ModelConfig,
    train_config: TrainConfig,
    seed: int = 0,
    jobs: int = 1,
) -> tuple[list[AdaptationPlan], dict[str, EvalReport], dict]:
    """Leave-one-out over events: train on all others, test on the one."""
    plans = plan_leave_one_out(events, scenario, splits, seed)
    runner = partial(
        _run_loo_plan,
        registry=registry,
        vocab=vocab,
        model_config=model_config,
        train_config=train_config,
    )
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(runner, plans))
    else:
        reports = [runner(plan) for plan in plans]
    results = {plan.target_event: report for plan, report in zip(plans, reports)}
    return plans, results, loo_table(results)


def _run_loo_plan(plan, *, registry, vocab, model_config, train_config):
    return run_plan(plan, registry, vocab, model_config, train_config).report
