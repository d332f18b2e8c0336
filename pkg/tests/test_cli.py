import json

import pytest

from synthaudit import cli
from synthaudit.dataset import load_csv
from synthaudit.report import load_report
from synthaudit.toydata import correlated_toy, planted_synthetic

SMALL = {
    "replications": 1, "tune_budget": 0, "pfi_repeats": 2,
    "train": {"n_trees": 40},
    "effects": {"resolution": 9, "features": ["hours", "group"]},
    "shapley": {"n_coalitions": 60, "n_imputations": 4, "background": 15, "importance_rows": 100},
    "counterfactual": {"n_instances": 2, "mcce": {"n_samples": 500}},
}


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    real = correlated_toy(800, seed=0)
    real.to_csv(root / "real.csv")
    planted_synthetic(real, seed=0).to_csv(root / "synth.csv")
    (root / "config.json").write_text(json.dumps(SMALL))
    return root


def test_synthesize_writes_csv(files, tmp_path, capsys):
    out = tmp_path / "s.csv"
    code = cli.main(["synthesize", "--real", str(files / "real.csv"), "--mode", "independent", "-n", "1000",
                     "--out", str(out), "--chain-out", str(tmp_path / "chain.json")])
    assert code == 0
    s = load_csv(out)
    assert s.n == 1000 and s.names == load_csv(files / "real.csv").names
    assert (tmp_path / "chain.json").exists()
    assert "wrote 1000 rows" in capsys.readouterr().out


def test_audit_reflects_config_override(files, tmp_path):
    out = tmp_path / "audit"
    code = cli.main(["audit", str(files / "real.csv"), str(files / "synth.csv"), "--config",
                     str(files / "config.json"), "--out", str(out), "--seed", "3"])
    assert code == 0
    doc = load_report(out / "report.json")
    assert doc["metadata"]["seed"] == 3
    assert [e["feature"] for e in doc["effects"]] == ["hours", "group"]
    numeric = doc["effects"][0]
    assert len(numeric["grid"]["points"]) <= 9 and len(numeric["pdp"]) == len(numeric["grid"]["points"])
    assert doc["metadata"]["config"]["effects"]["resolution"] == 9

    code = cli.main(["report", str(out / "report.json"), "--out", str(tmp_path / "rendered")])
    assert code == 0
    assert (tmp_path / "rendered" / "summary.txt").read_text().startswith("status: complete")


def test_stage_subcommands(files, tmp_path):
    common = ["--real", str(files / "real.csv"), "--synthetic", str(files / "synth.csv"),
              "--config", str(files / "config.json")]
    assert cli.main(["train", *common, "--out", str(tmp_path)]) == 0
    model = str(tmp_path / "model.json")
    assert json.loads((tmp_path / "metrics.json").read_text())["test"]["auc"] > 0.5
    withmodel = [*common, "--model", model, "--out", str(tmp_path)]
    assert cli.main(["importance", *withmodel, "--repeats", "2"]) == 0
    assert cli.main(["effects", *withmodel, "--feature", "x1", "--resolution", "5"]) == 0
    effects = json.loads((tmp_path / "effects.json").read_text())
    assert effects[0]["feature"] == "x1" and len(effects[0]["pdp"]) <= 5
    assert cli.main(["shapley", *withmodel, "--engines", "tree,interactions"]) == 0
    assert json.loads((tmp_path / "shapley.json").read_text())[0]["interactions"] is not None
    assert cli.main(["counterfactual", *withmodel, "--n-samples", "300"]) == 0
    assert all(s["n_tried"] in (0, 300) for s in json.loads((tmp_path / "counterfactuals.json").read_text()))


def test_unknown_flag_exits_two_with_usage(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["audit", "--no-such-flag"])
    assert info.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_validation_errors_exit_two(files, tmp_path, capsys):
    code = cli.main(["audit", str(files / "real.csv"), str(tmp_path / "missing.csv"), "--out", str(tmp_path)])
    assert code == 2
    assert "ingest" in capsys.readouterr().err
    (tmp_path / "bad.json").write_text('{"replicates": 2}')
    code = cli.main(["synthesize", "--real", str(files / "real.csv"), "--config", str(tmp_path / "bad.json"),
                     "--out", str(tmp_path / "s.csv")])
    assert code == 2
    code = cli.main(["shapley", "--real", str(files / "real.csv"), "--synthetic", str(files / "synth.csv"),
                     "--model", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert code == 2


def test_internal_errors_exit_one(files, tmp_path, monkeypatch, capsys):
    def broken(*args, **kwargs):
        raise RuntimeError("boom")
    monkeypatch.setattr(cli, "baseline_synthesize", broken)
    code = cli.main(["synthesize", "--real", str(files / "real.csv"), "--out", str(tmp_path / "s.csv")])
    assert code == 1
    assert "internal error: RuntimeError: boom" in capsys.readouterr().err
