import json

import pytest

from embed_audit.cli import main

SMALL = {
    "gen-data": ["--set", "data.n=120"],
    "train-target": ["--set", "data.n=200", "--set", "target.epochs=2"],
    "attack-mia": ["--set", "data.n=200", "--set", "target.epochs=2", "--set", "attack.epochs=2"],
    "attack-pia": ["--set", "data.n=300", "--set", "target.epochs=2", "--set", "pia.epochs=2"],
    "invert": [
        "--set", "data.n=700", "--set", "inversion.n_target=400", "--set", "target.epochs=2",
        "--set", "inversion.docs=2", "--set", "inversion.steps=50", "--set", "inversion.mapping_epochs=2",
    ],
    "defend": [
        "--set", "data.n=700", "--set", "defense.n_target=400", "--set", "target.epochs=2",
        "--set", "defense.epochs=2", "--set", "defense.docs=2", "--set", "defense.inversion_steps=50",
        "--set", "defense.mapping_epochs=2",
    ],
    "run-finding": [
        "--finding", "F3", "--set", "finding.n_seeds=2", "--set", "finding.params.target.n=200",
        "--set", "finding.params.target.epochs=2", "--set", "finding.params.attack_epochs=2",
    ],
}


def run(*argv):
    return main([*argv, "--quiet"])


def snapshot(path):
    return {p.name: p.read_bytes() for p in sorted(path.iterdir())}


def test_depth_out_of_range_names_field(tmp_path, capsys):
    code = run("attack-mia", "--setting", "embedding", "--depth", "99", "--out", str(tmp_path))
    assert code == 1
    assert "depth" in capsys.readouterr().err


def test_unknown_subcommand(capsys):
    assert main(["frobnicate"]) == 1
    err = capsys.readouterr().err
    assert "usage" in err and "frobnicate" in err


def test_missing_subcommand(capsys):
    assert main([]) == 1
    assert "usage" in capsys.readouterr().err


def test_run_finding_writes_reports(tmp_path):
    out = tmp_path / "out"
    assert run("run-finding", "--seed", "42", "--out", str(out), *SMALL["run-finding"]) == 0
    for name in ("report.json", "report.md", "report.csv", "runs.jsonl", "effective-config.json"):
        assert (out / name).exists()
    cfg = json.loads((out / "effective-config.json").read_text())
    assert cfg["seed"] == 42 and cfg["finding"]["id"] == "F3" and cfg["command"] == "run-finding"


@pytest.mark.parametrize("command", sorted(SMALL))
def test_replay_is_bytewise_identical(tmp_path, command):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(command, "--seed", "5", "--out", str(a), *SMALL[command]) == 0
    assert run(command, "--seed", "5", "--out", str(b), *SMALL[command]) == 0
    assert snapshot(a) == snapshot(b)


@pytest.mark.parametrize("command", ["train-target", "invert"])
def test_effective_config_replays(tmp_path, command):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(command, "--seed", "9", "--out", str(a), *SMALL[command]) == 0
    assert run(command, "--config", str(a / "effective-config.json"), "--out", str(b)) == 0
    assert snapshot(a) == snapshot(b)


def test_flags_override_config_file(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 1, "data": {"n": 100}}))
    out = tmp_path / "o"
    assert run("gen-data", "--config", str(cfg), "--seed", "2", "--set", "data.n=50", "--out", str(out)) == 0
    eff = json.loads((out / "effective-config.json").read_text())
    assert eff["seed"] == 2 and eff["data"]["n"] == 50
    assert len((out / "data.csv").read_text().splitlines()) == 51


def test_gen_data_csv_feeds_training(tmp_path):
    assert run("gen-data", "--out", str(tmp_path / "d"), "--set", "data.n=120") == 0
    csv_path = tmp_path / "d" / "data.csv"
    out = tmp_path / "t"
    assert run("train-target", "--out", str(out), "--set", f'data.csv="{csv_path}"', "--set", "target.epochs=1") == 0
    assert (out / "target.eatm").exists()
    ck = out / "target.eatm"
    assert run("attack-mia", "--out", str(tmp_path / "m"), "--set", f'data.csv="{csv_path}"',
               "--set", f'target.checkpoint="{ck}"', "--set", "attack.epochs=1") == 0
    rec = json.loads((tmp_path / "m" / "mia.json").read_text())
    assert rec["setting"] == "loss" and 0 <= rec["auc"] <= 1


@pytest.mark.parametrize(
    "argv, field",
    [
        (["gen-data", "--set", "data.bogus=1"], "data.bogus"),
        (["gen-data", "--set", "data.n=\"many\""], "data.n"),
        (["gen-data", "--set", "data.flip_prob=0.7"], "flip_prob"),
        (["gen-data", "--depth", "2"], "depth"),
        (["attack-mia", "--setting", "gradient"], "setting"),
        (["invert", "--setup", "setup9"], "setup"),
        (["defend", "--sigma", "-1"], "sigma"),
        (["gen-data", "--seed", "-3"], "seed"),
        (["report"], "input"),
        (["gen-data", "--config", "/nonexistent/c.json"], "config"),
    ],
)
def test_validation_errors_exit_1(tmp_path, capsys, argv, field):
    assert run(*argv, "--out", str(tmp_path)) == 1
    assert field in capsys.readouterr().err


def test_bad_json_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    assert run("gen-data", "--config", str(cfg), "--out", str(tmp_path)) == 1
    assert "config" in capsys.readouterr().err


def test_config_for_other_command(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"command": "invert"}))
    assert run("gen-data", "--config", str(cfg), "--out", str(tmp_path)) == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit_2(tmp_path, capsys):
    code = run("train-target", "--out", str(tmp_path), "--set", "data.n=100", "--set", "target.learning_rate=1e308",
               "--set", "target.epochs=3")
    assert code == 2
    assert "runtime failure" in capsys.readouterr().err


def test_report_rerenders(tmp_path):
    src = tmp_path / "src"
    assert run("run-finding", "--out", str(src), *SMALL["run-finding"]) == 0
    dst = tmp_path / "dst"
    assert run("report", "--input", str(src / "report.json"), "--out", str(dst)) == 0
    for name in ("report.md", "report.csv", "report.json"):
        assert (dst / name).read_bytes() == (src / name).read_bytes()


def test_parallel_run_finding_matches_sequential(tmp_path, monkeypatch):
    monkeypatch.setenv("EMBED_AUDIT_THREADS", "1")
    assert run("run-finding", "--out", str(tmp_path / "s"), *SMALL["run-finding"]) == 0
    monkeypatch.setenv("EMBED_AUDIT_THREADS", "2")
    assert run("run-finding", "--out", str(tmp_path / "p"), *SMALL["run-finding"]) == 0
    assert snapshot(tmp_path / "s") == snapshot(tmp_path / "p")
