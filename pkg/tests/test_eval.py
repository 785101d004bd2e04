"""Metrics against brute-force oracles, transfer matrix, experiment plans."""

import json

import numpy as np
import pytest

from crisisadapt.corpus import EventSplits, PlanError
from crisisadapt.errors import IncompleteExperimentError
from crisisadapt.evaluation import (
    AdaptationMatrix,
    ClassScores,
    EvalReport,
    accuracy,
    class_scores,
    evaluate,
    loo_table,
    pearson_row_correlation,
    plan_leave_one_out,
    plan_many_to_one,
    predict_label,
    weighted_f1,
    write_correlation_csv,
    write_matrix_csv,
    write_matrix_provenance,
)
from crisisadapt.model import ModelConfig, init_params
from crisisadapt.tokenizer import EOS, build_vocab, encode

from conftest import make_record


# ---------------------------------------------------------------------------
# Brute-force oracles


def oracle_accuracy(gold, pred):
    return sum(1 for g, p in zip(gold, pred) if g == p) / len(gold)


def oracle_class_scores(gold, pred, cls):
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        if p == cls and g == cls:
            tp += 1
        elif p == cls:
            fp += 1
        elif g == cls:
            fn += 1
    prec = tp / (tp + fp) if tp + fp else 0.0
    rec = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
    return prec, rec, f1, tp + fn


def oracle_weighted_f1(gold, pred):
    classes = sorted(set(gold))
    total = len(gold)
    out = 0.0
    for cls in classes:
        _, _, f1, support = oracle_class_scores(gold, pred, cls)
        out += f1 * support / total
    return out


def oracle_pearson(x, y):
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    dx = sum((a - mx) ** 2 for a in x)
    dy = sum((b - my) ** 2 for b in y)
    return num / (dx * dy) ** 0.5


def random_labels(rng, n, alphabet):
    return [alphabet[i] for i in rng.integers(0, len(alphabet), size=n)]


def test_metrics_match_oracles_on_random_instances(rng):
    for trial in range(200):
        n = int(rng.integers(1, 40))
        alphabet = ("yes", "no") if trial % 2 else ("a", "b", "c")
        gold = random_labels(rng, n, alphabet)
        pred = random_labels(rng, n, alphabet)
        assert abs(accuracy(gold, pred) - oracle_accuracy(gold, pred)) < 1e-12
        assert abs(weighted_f1(gold, pred) - oracle_weighted_f1(gold, pred)) < 1e-12
        scores = class_scores(gold, pred)
        assert set(scores) == set(gold)
        for cls, s in scores.items():
            prec, rec, f1, support = oracle_class_scores(gold, pred, cls)
            assert abs(s.precision - prec) < 1e-12
            assert abs(s.recall - rec) < 1e-12
            assert abs(s.f1 - f1) < 1e-12
            assert s.support == support


def test_metric_validation():
    with pytest.raises(ValueError, match="lengths differ"):
        accuracy(["yes"], ["yes", "no"])
    with pytest.raises(ValueError, match="empty"):
        accuracy([], [])
    with pytest.raises(ValueError, match="lengths differ"):
        class_scores(["yes"], [])
    with pytest.raises(ValueError, match="empty"):
        weighted_f1([], [])


def test_perfect_and_inverted_predictions():
    gold = ["yes", "no", "yes", "no"]
    assert accuracy(gold, gold) == 1.0
    assert weighted_f1(gold, gold) == 1.0
    flipped = ["no", "yes", "no", "yes"]
    assert accuracy(gold, flipped) == 0.0
    assert weighted_f1(gold, flipped) == 0.0


def test_pearson_matches_oracle(rng):
    for _ in range(100):
        n = int(rng.integers(3, 9))
        arr = rng.normal(size=(n, n))
        got = pearson_row_correlation(arr)
        assert np.allclose(got, got.T)
        assert np.array_equal(np.diag(got), np.ones(n))
        for i in range(n):
            for j in range(i + 1, n):
                want = oracle_pearson(arr[i].tolist(), arr[j].tolist())
                assert abs(got[i, j] - want) < 1e-9
        # independent second oracle
        assert np.allclose(got, np.corrcoef(arr), atol=1e-9)


def test_pearson_exclude_self_drops_both_columns():
    arr = np.arange(25, dtype=np.float64).reshape(5, 5)
    arr[2, 4] = -3.0  # break exact collinearity
    got = pearson_row_correlation(arr, exclude_self=True)
    cols = [k for k in range(5) if k not in (0, 1)]
    want = oracle_pearson(arr[0, cols].tolist(), arr[1, cols].tolist())
    assert abs(got[0, 1] - want) < 1e-9


def test_pearson_zero_variance_warns_and_returns_zero():
    arr = np.ones((3, 3))
    arr[2] = [0.1, 0.5, 0.9]
    with pytest.warns(UserWarning, match="zero variance"):
        got = pearson_row_correlation(arr)
    assert got[0, 1] == 0.0
    assert got[0, 2] == 0.0


def test_pearson_validation():
    with pytest.raises(ValueError, match="too few"):
        pearson_row_correlation(np.ones((2, 2)))
    with pytest.raises(ValueError, match="too few"):
        pearson_row_correlation(np.ones((4, 4)), exclude_self=True)
    with pytest.raises(ValueError, match="square"):
        pearson_row_correlation(np.ones((3, 4)))


# ---------------------------------------------------------------------------
# predict_label and evaluate on a rigged model


VOCAB = build_vocab(["water rain storm flood go"], min_freq=1)


def rigged(favored: dict[str, float], max_tgt_len=6):
    cfg = ModelConfig(vocab_size=VOCAB.size, d_model=8, n_heads=2, d_ff=16,
                      n_enc_layers=1, n_dec_layers=1, dropout=0.0,
                      max_src_len=8, max_tgt_len=max_tgt_len)
    params = init_params(cfg, 0)
    params["out_proj.weight"].data[...] = 0.0
    bias = params["out_proj.bias"].data
    bias[...] = -10.0
    for tok, b in favored.items():
        bias[VOCAB.lookup(tok)] = b
    return params, cfg


def encode_query(text="water rain"):
    ids, mask = encode(text, VOCAB, max_len=8)
    return np.array(ids, dtype=np.int64), np.array(mask, dtype=np.float32)


def test_predict_label_clean_decode():
    params, cfg = rigged({"yes": 10.0}, max_tgt_len=1)
    ids, mask = encode_query()
    label, fell_back = predict_label(params, ids, mask, VOCAB, cfg)
    assert (label, fell_back) == ("yes", False)


def test_predict_label_fallback_tie_is_no():
    # greedy emits a non-label word, and the scoring tie resolves to "no"
    params, cfg = rigged({"water": 10.0})
    ids, mask = encode_query()
    label, fell_back = predict_label(params, ids, mask, VOCAB, cfg)
    assert fell_back
    assert label == "no"


def test_predict_label_fallback_prefers_higher_score():
    params, cfg = rigged({"water": 10.0, "yes": 2.0, "no": 1.0})
    ids, mask = encode_query()
    label, fell_back = predict_label(params, ids, mask, VOCAB, cfg)
    assert fell_back
    assert label == "yes"


def test_evaluate_report_shape():
    params, cfg = rigged({"no": 10.0}, max_tgt_len=1)
    encoded = [encode_query("water rain"), encode_query("storm flood"),
               encode_query("flood go")]
    gold = ["no", "yes", "no"]
    report = evaluate(params, encoded, gold, VOCAB, cfg)
    assert report.n == 3
    assert report.accuracy == pytest.approx(2 / 3)
    assert report.fallback_count == 0
    assert report.confusion[("yes", "no")] == 1
    assert report.confusion[("no", "no")] == 2
    doc = report.to_dict()
    assert doc["confusion"] == {"no->no": 2, "yes->no": 1}
    assert doc["per_class"]["no"]["support"] == 2
    assert doc["fallback_rate"] == 0.0
    with pytest.raises(ValueError, match="gold labels"):
        evaluate(params, encoded, gold[:2], VOCAB, cfg)
    with pytest.raises(ValueError, match="empty"):
        evaluate(params, [], [], VOCAB, cfg)


# ---------------------------------------------------------------------------
# Adaptation matrix


def filled_matrix(events=("a", "b", "c")):
    m = AdaptationMatrix(events=tuple(events))
    vals = {("a", "a"): 0.9617, ("a", "b"): 0.8, ("a", "c"): 0.5,
            ("b", "a"): 0.75, ("b", "b"): 0.95, ("b", "c"): 0.45,
            ("c", "a"): 0.52, ("c", "b"): 0.48, ("c", "c"): 0.99}
    for (s, t), v in vals.items():
        if s in events and t in events:
            m.set_cell(s, t, v)
    return m


def test_matrix_validation():
    with pytest.raises(ValueError, match="at least two"):
        AdaptationMatrix(events=("solo",))
    with pytest.raises(ValueError, match="duplicate"):
        AdaptationMatrix(events=("a", "a"))
    with pytest.raises(ValueError, match="diagonal_mode"):
        AdaptationMatrix(events=("a", "b"), diagonal_mode="average")


def test_matrix_cell_rules():
    m = AdaptationMatrix(events=("a", "b"))
    with pytest.raises(KeyError, match="outside events"):
        m.set_cell("a", "zz", 0.5)
    with pytest.raises(ValueError, match="in \\[0, 1\\]"):
        m.set_cell("a", "b", 1.5)
    m.set_cell("a", "b", 0.5, info={"steps": 12})
    assert m.provenance["a->b"] == {"value": 0.5, "steps": 12}
    assert m.missing() == [("a", "a"), ("b", "a"), ("b", "b")]
    assert not m.complete
    with pytest.raises(IncompleteExperimentError, match="unfilled cells"):
        m.to_array()


def test_matrix_to_array_order():
    m = filled_matrix()
    arr = m.to_array()
    assert arr.shape == (3, 3)
    assert arr[0, 1] == 0.8
    assert arr[2, 0] == 0.52
    assert m.complete


def test_matrix_csv_golden(tmp_path):
    m = AdaptationMatrix(events=("a", "b"))
    m.set_cell("a", "a", 0.9617)
    m.set_cell("a", "b", 0.8)
    m.set_cell("b", "b", 1.0)
    path = tmp_path / "matrix.csv"
    write_matrix_csv(path, m)
    assert path.read_text(encoding="utf-8") == (
        "source\\target,a,b\n"
        "a,0.9617,0.8000\n"
        "b,,1.0000\n"
    )


def test_correlation_csv_golden(tmp_path):
    corr = np.array([[1.0, -0.5], [-0.5, 1.0]])
    path = tmp_path / "corr.csv"
    write_correlation_csv(path, ("a", "b"), corr)
    assert path.read_text(encoding="utf-8") == (
        "row\\row,a,b\n"
        "a,1.0000,-0.5000\n"
        "b,-0.5000,1.0000\n"
    )


def test_matrix_provenance_json(tmp_path):
    m = filled_matrix(("a", "b"))
    path = tmp_path / "prov.json"
    write_matrix_provenance(path, m)
    doc = json.loads(path.read_text(encoding="utf-8"))
    assert doc["events"] == ["a", "b"]
    assert doc["diagonal_mode"] == "standard_split"
    assert doc["complete"]
    assert doc["cells"]["a->b"]["value"] == 0.8


# ---------------------------------------------------------------------------
# Experiment planning


def event_splits(names):
    splits = {}
    for name in names:
        train = [make_record(i, event_id=name, label="yes" if i % 2 else "no")
                 for i in range(4)]
        test = [make_record(100 + i, event_id=name, label="yes" if i % 2 else "no")
                for i in range(2)]
        splits[name] = EventSplits(train=train, test=test)
    return splits


def test_plan_leave_one_out_shape():
    names = ["ev_c", "ev_a", "ev_b"]
    splits = event_splits(names)
    plans = plan_leave_one_out(names, "postq", splits, seed=0)
    assert [p.target_event for p in plans] == ["ev_a", "ev_b", "ev_c"]
    for plan in plans:
        assert len(plan.source_events) == 2
        assert plan.target_event not in plan.source_events
        assert len(plan.source_dataset) == 8  # two events pooled
    with pytest.raises(ValueError, match="at least two"):
        plan_leave_one_out(["only"], "postq", splits, seed=0)


def test_plan_leave_one_out_deterministic():
    splits = event_splits(["ev_a", "ev_b", "ev_c"])
    a = plan_leave_one_out(["ev_a", "ev_b", "ev_c"], "postq", splits, seed=5)
    b = plan_leave_one_out(["ev_c", "ev_b", "ev_a"], "postq", splits, seed=5)
    for pa, pb in zip(a, b):
        assert pa.task_id == pb.task_id
        assert [r.id for r in pa.source_dataset] == [r.id for r in pb.source_dataset]


def test_plan_many_to_one():
    splits = event_splits(["ev_a", "ev_b", "ev_c"])
    plan = plan_many_to_one(["ev_a", "ev_b"], "ev_c", "postq", splits, seed=1)
    assert plan.target_event == "ev_c"
    assert plan.source_events == frozenset({"ev_a", "ev_b"})
    with pytest.raises(PlanError):
        plan_many_to_one(["ev_a", "ev_c"], "ev_c", "postq", splits, seed=1)


def test_loo_table_mean_row():
    def report(acc, f1, n):
        return EvalReport(n=n, accuracy=acc, weighted_f1=f1, per_class={},
                          confusion={}, fallback_count=0)

    results = {"b": report(0.9, 0.88, 10), "a": report(0.7, 0.66, 20)}
    table = loo_table(results)
    assert list(table["per_target"]) == ["a", "b"]
    assert table["per_target"]["a"]["n"] == 20
    assert table["mean"]["accuracy"] == pytest.approx(0.8)
    assert table["mean"]["weighted_f1"] == pytest.approx(0.77)
    assert table["mean"]["targets"] == 2
    with pytest.raises(ValueError, match="no leave-one-out"):
        loo_table({})


def test_class_scores_zero_denominators():
    gold = ["yes", "yes"]
    pred = ["no", "no"]
    scores = class_scores(gold, pred)
    assert scores["yes"] == ClassScores(0.0, 0.0, 0.0, 2)
