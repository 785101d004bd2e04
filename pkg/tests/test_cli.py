"""Command-line interface: happy paths, exit codes, artifact layout."""

import json
import subprocess
import sys

import pytest

import crisisadapt.cli as cli
from crisisadapt.checkpoint import load_checkpoint
from crisisadapt.errors import IncompleteExperimentError
from crisisadapt.tokenizer import load_vocab
from crisisadapt.train import read_history

CONFIG = {
    "model": {"size": "tiny", "d_model": 16, "n_heads": 2, "d_ff": 32,
              "n_enc_layers": 1, "n_dec_layers": 1, "dropout": 0.0,
              "max_src_len": 48, "max_tgt_len": 4},
    "train": {"peak_lr": 0.001, "effective_batch": 8, "epochs": 2},
}


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """Shared workspace: synthetic data, vocabulary, one trained run."""
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert cli.main(["synth", "--out", str(data),
                     "--n-train", "8", "--n-test", "4", "--seed", "0"]) == 0
    vocab_path = root / "vocab.txt"
    assert cli.main(["build-vocab",
                     "--train-file", str(data / "train.tsv"),
                     "--registry", str(data / "registry.json"),
                     "--scenario", "postq", "--min-freq", "1",
                     "--out", str(vocab_path)]) == 0
    config_path = root / "config.json"
    config_path.write_text(json.dumps(CONFIG), encoding="utf-8")
    run = root / "run1"
    assert cli.main(["train",
                     "--train-file", str(data / "train.tsv"),
                     "--test-file", str(data / "test.tsv"),
                     "--registry", str(data / "registry.json"),
                     "--vocab", str(vocab_path),
                     "--scenario", "postq",
                     "--target-event", "alpha_flood",
                     "--config", str(config_path),
                     "--out", str(run)]) == 0
    return {"root": root, "data": data, "vocab": vocab_path,
            "config": config_path, "run": run}


def base_args(ws, sub, **extra):
    args = [sub,
            "--train-file", str(ws["data"] / "train.tsv"),
            "--test-file", str(ws["data"] / "test.tsv"),
            "--registry", str(ws["data"] / "registry.json"),
            "--scenario", "postq",
            "--config", str(ws["config"])]
    for flag, value in extra.items():
        args += [f"--{flag.replace('_', '-')}", str(value)]
    return args


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "crisisadapt.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "crisisadapt" in proc.stdout


def test_synth_artifacts(ws):
    data = ws["data"]
    assert (data / "train.tsv").exists()
    assert (data / "test.tsv").exists()
    registry = json.loads((data / "registry.json").read_text(encoding="utf-8"))
    assert set(registry) == {"alpha_flood", "beta_flood", "gamma_quake"}
    lines = (data / "train.tsv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "id\ttext\tlabel\tevent_id"
    assert len(lines) == 1 + 3 * 8


def test_build_vocab_artifact(ws):
    vocab = load_vocab(ws["vocab"])
    assert "yes" in vocab and "no" in vocab
    assert vocab.size > 20


def test_train_run_artifacts(ws):
    run = ws["run"]
    for name in ("checkpoint.castckpt", "history.csv", "report.json",
                 "manifest.json"):
        assert (run / name).exists(), name
    manifest = json.loads((run / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "train"
    assert len(manifest["run_id"]) == 12
    assert manifest["task_id"] == "alpha_flood->alpha_flood/postq"
    assert manifest["steps"]["final"] == manifest["steps"]["total"] == 2
    assert len(manifest["inputs"]) == 4  # train/test/registry/vocab digests
    report = json.loads((run / "report.json").read_text(encoding="utf-8"))
    assert 0.0 <= report["accuracy"] <= 1.0
    assert report["n"] == 4
    history = read_history(run / "history.csv")
    assert [h.step for h in history] == [0, 1]
    ckpt = load_checkpoint(run / "checkpoint.castckpt")
    assert ckpt.step == 2
    assert ckpt.adam_t == 2
    assert ckpt.extra["task_id"] == "alpha_flood->alpha_flood/postq"


def test_train_resume_continues_step_count(ws, tmp_path):
    config = dict(CONFIG)
    config["train"] = dict(CONFIG["train"], epochs=4)
    config_path = tmp_path / "longer.json"
    config_path.write_text(json.dumps(config), encoding="utf-8")
    out = tmp_path / "resumed"
    args = base_args(ws, "train", vocab=ws["vocab"], target_event="alpha_flood",
                     out=out, resume=ws["run"] / "checkpoint.castckpt")
    args[args.index(str(ws["config"]))] = str(config_path)
    assert cli.main(args) == 0
    history = read_history(out / "history.csv")
    assert [h.step for h in history] == [2, 3]  # continued, not restarted
    assert load_checkpoint(out / "checkpoint.castckpt").step == 4


def test_train_cross_domain_sources(ws, tmp_path):
    out = tmp_path / "cross"
    assert cli.main(base_args(ws, "train", vocab=ws["vocab"],
                              source_events="alpha_flood,beta_flood",
                              target_event="gamma_quake", out=out)) == 0
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["task_id"] == "alpha_flood+beta_flood->gamma_quake/postq"
    assert manifest["source_events"] == ["alpha_flood", "beta_flood"]


def test_evaluate_artifacts(ws, tmp_path):
    out = tmp_path / "eval"
    assert cli.main(["evaluate",
                     "--checkpoint", str(ws["run"] / "checkpoint.castckpt"),
                     "--vocab", str(ws["vocab"]),
                     "--test-file", str(ws["data"] / "test.tsv"),
                     "--registry", str(ws["data"] / "registry.json"),
                     "--scenario", "postq",
                     "--target-event", "beta_flood",
                     "--out", str(out)]) == 0
    report = json.loads((out / "report.json").read_text(encoding="utf-8"))
    assert report["n"] == 4
    assert 0.0 <= report["accuracy"] <= 1.0
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "evaluate"


def test_matrix_two_events_skips_correlation(ws, tmp_path, capsys):
    out = tmp_path / "matrix"
    assert cli.main(base_args(ws, "matrix", vocab=ws["vocab"],
                              events="alpha_flood,beta_flood", out=out)) == 0
    lines = (out / "matrix.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == "source\\target,alpha_flood,beta_flood"
    assert len(lines) == 3
    assert not (out / "correlation.csv").exists()
    assert "skipping row correlations" in capsys.readouterr().out
    prov = json.loads((out / "provenance.json").read_text(encoding="utf-8"))
    assert prov["complete"] is True
    assert set(prov["cells"]) == {
        "alpha_flood->alpha_flood", "alpha_flood->beta_flood",
        "beta_flood->alpha_flood", "beta_flood->beta_flood"}


@pytest.mark.filterwarnings("ignore:zero variance")
def test_matrix_three_events_writes_correlation(ws, tmp_path):
    out = tmp_path / "matrix3"
    assert cli.main(base_args(ws, "matrix", vocab=ws["vocab"], out=out)) == 0
    corr = (out / "correlation.csv").read_text(encoding="utf-8").splitlines()
    assert corr[0] == "row\\row,alpha_flood,beta_flood,gamma_quake"
    assert len(corr) == 4
    manifest = json.loads((out / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["artifacts"]["correlation"] == "correlation.csv"


def test_loo_artifacts(ws, tmp_path):
    out = tmp_path / "loo"
    assert cli.main(base_args(ws, "loo", vocab=ws["vocab"],
                              events="alpha_flood,beta_flood", out=out)) == 0
    doc = json.loads((out / "loo.json").read_text(encoding="utf-8"))
    assert [p["target_event"] for p in doc["plans"]] == [
        "alpha_flood", "beta_flood"]
    assert all(len(p["source_events"]) == 1 for p in doc["plans"])
    assert set(doc["per_target"]) == {"alpha_flood", "beta_flood"}
    assert doc["mean"]["targets"] == 2


def test_data_dir_env_resolves_relative_inputs(ws, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv(cli.ENV_DATA_DIR, str(ws["data"]))
    out = tmp_path / "vocab-env.txt"
    assert cli.main(["build-vocab",
                     "--train-file", "train.tsv",
                     "--registry", "registry.json",
                     "--scenario", "postq", "--min-freq", "1",
                     "--out", str(out)]) == 0
    assert load_vocab(out).size > 20


def test_bad_train_config_exits_2(ws, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"train": {"peak_lr": -1.0}}), encoding="utf-8")
    args = base_args(ws, "train", vocab=ws["vocab"],
                     target_event="alpha_flood", out=tmp_path / "x")
    args[args.index(str(ws["config"]))] = str(bad)
    assert cli.main(args) == 2
    assert "peak_lr" in capsys.readouterr().err


def test_malformed_config_exits_2(ws, tmp_path, capsys):
    bad = tmp_path / "broken.json"
    bad.write_text("{not json", encoding="utf-8")
    args = base_args(ws, "train", vocab=ws["vocab"],
                     target_event="alpha_flood", out=tmp_path / "x")
    args[args.index(str(ws["config"]))] = str(bad)
    assert cli.main(args) == 2
    assert "malformed" in capsys.readouterr().err


def test_unknown_config_section_exits_2(ws, tmp_path, capsys):
    bad = tmp_path / "extra.json"
    bad.write_text(json.dumps({"optimizer": {}}), encoding="utf-8")
    args = base_args(ws, "train", vocab=ws["vocab"],
                     target_event="alpha_flood", out=tmp_path / "x")
    args[args.index(str(ws["config"]))] = str(bad)
    assert cli.main(args) == 2


def test_missing_input_file_exits_3(ws, tmp_path, capsys):
    args = ["train",
            "--train-file", str(tmp_path / "nope.tsv"),
            "--test-file", str(ws["data"] / "test.tsv"),
            "--registry", str(ws["data"] / "registry.json"),
            "--vocab", str(ws["vocab"]),
            "--scenario", "postq",
            "--target-event", "alpha_flood",
            "--out", str(tmp_path / "x")]
    assert cli.main(args) == 3
    assert "not found" in capsys.readouterr().err


def test_missing_checkpoint_exits_3(ws, tmp_path):
    assert cli.main(["evaluate",
                     "--checkpoint", str(tmp_path / "ghost.castckpt"),
                     "--vocab", str(ws["vocab"]),
                     "--test-file", str(ws["data"] / "test.tsv"),
                     "--registry", str(ws["data"] / "registry.json"),
                     "--scenario", "postq",
                     "--target-event", "alpha_flood",
                     "--out", str(tmp_path / "x")]) == 3


def test_incomplete_experiment_exits_4(ws, tmp_path, monkeypatch, capsys):
    def explode(args):
        raise IncompleteExperimentError("matrix has unfilled cells: a->b")

    monkeypatch.setattr(cli, "cmd_matrix", explode)
    assert cli.main(base_args(ws, "matrix", vocab=ws["vocab"],
                              out=tmp_path / "x")) == 4
    assert "unfilled" in capsys.readouterr().err


def test_unknown_scenario_rejected_by_parser(ws, tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(base_args(ws, "train", vocab=ws["vocab"],
                           target_event="alpha_flood", out=tmp_path / "x",
                           scenario="mystery"))
    assert exc.value.code == 2


def test_unknown_target_event_exits_3(ws, tmp_path, capsys):
    assert cli.main(base_args(ws, "train", vocab=ws["vocab"],
                              target_event="zeta_storm",
                              out=tmp_path / "x")) == 3
