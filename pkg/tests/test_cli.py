import json
import subprocess
import sys

import pytest

from silkstage import stage, training
from silkstage.cli import EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_OK, EXIT_TRACE, EXIT_TRAINING, main
from silkstage.config import StageConfig, dump_config
from silkstage.errors import NumericDivergenceError


@pytest.fixture(scope="module")
def coop_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    assert main(["run", "--out", str(out), "--duration", "20"]) == EXIT_OK
    return out


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def test_run_writes_artifacts(coop_run):
    trace = (coop_run / "trace.jsonl").read_text().splitlines()
    assert len(trace) == 1 + 1000 + 1
    m = manifest(coop_run)["run"]
    assert m["exit_status"] == 0 and m["seed"] == 1
    assert m["config_hash"] == StageConfig(duration=20.0).config_hash()
    assert set(m["artifacts"]) == {"trace", "summary"}
    for rel in m["artifacts"].values():
        assert (coop_run / rel).stat().st_size > 0


def test_run_is_idempotent(tmp_path):
    args = ["run", "--out", str(tmp_path), "--duration", "4", "--seed", "3", "--policy-b", "scripted:rival"]
    files = ("trace.jsonl", "summary.csv", "manifest.json")
    assert main(args) == EXIT_OK
    first = [(tmp_path / f).read_bytes() for f in files]
    assert main(args) == EXIT_OK
    assert [(tmp_path / f).read_bytes() for f in files] == first


def test_missing_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "nope.json" in capsys.readouterr().err


def test_bad_config_names_field(tmp_path, capsys):
    (tmp_path / "c.json").write_text(json.dumps({"silk": {"stiffness": "stiff"}}))
    assert main(["run", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "silk.stiffness" in capsys.readouterr().err


def test_config_file_is_used(tmp_path):
    cfg = StageConfig(duration=1.0, seed=4)
    dump_config(cfg, tmp_path / "c.json")
    assert main(["run", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path)]) == EXIT_OK
    assert manifest(tmp_path)["run"]["config_hash"] == cfg.config_hash()


def test_bad_policy_spec(tmp_path):
    assert main(["run", "--policy-a", "scripted:dancer", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_zero_duration(tmp_path):
    assert main(["run", "--duration", "0", "--out", str(tmp_path)]) == EXIT_OK
    trace = stage.read_trace(tmp_path / "trace.jsonl")
    assert len(trace) == 0 and trace.header["format"] == "silkstage-trace/1"


def test_divergence_exit(tmp_path, monkeypatch):
    real = stage.silk.advance
    calls = {"n": 0}

    def flaky(*a):
        calls["n"] += 1
        if calls["n"] > 30:
            raise NumericDivergenceError(3, "forced")
        return real(*a)

    monkeypatch.setattr(stage.silk, "advance", flaky)
    assert main(["run", "--duration", "2", "--out", str(tmp_path)]) == EXIT_DIVERGENCE
    trace = stage.read_trace(tmp_path / "trace.jsonl")
    assert len(trace) == 30 and trace.error["kind"] == "numeric-divergence"


def test_train_small(tmp_path):
    args = ["train", "--cem-generations", "1", "--cem-population", "4", "--cem-episodes", "1",
            "--episode-duration", "2"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    curve = (tmp_path / "a" / "learning_curve.csv").read_text()
    assert len(curve.splitlines()) == 2
    assert curve == (tmp_path / "b" / "learning_curve.csv").read_text()
    assert (tmp_path / "a" / "policy.txt").read_text() == (tmp_path / "b" / "policy.txt").read_text()
    # the trained file plays back through the policy spec
    assert main(["evaluate", "--policy-a", f"file:{tmp_path / 'a' / 'policy.txt'}", "--duration", "2",
                 "--out", str(tmp_path / "a")]) == EXIT_OK


def test_train_failure_exit(tmp_path, monkeypatch):
    monkeypatch.setattr(training, "episode_reward", lambda *a, **k: float("nan"))
    assert main(["train", "--cem-generations", "1", "--cem-population", "4", "--cem-episodes", "1",
                 "--out", str(tmp_path)]) == EXIT_TRAINING
    assert manifest(tmp_path)["train"]["exit_status"] == EXIT_TRAINING


def test_train_bad_cem_config(tmp_path):
    assert main(["train", "--cem-population", "0", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_evaluate(tmp_path, capsys):
    assert main(["evaluate", "--duration", "5", "--out", str(tmp_path)]) == EXIT_OK
    assert "records:" in (tmp_path / "report.txt").read_text()


def test_replay(coop_run, tmp_path, capsys):
    assert main(["replay", str(coop_run / "trace.jsonl")]) == EXIT_OK
    assert "mismatches: 0" in capsys.readouterr().out


def tampered(coop_run, tmp_path):
    lines = (coop_run / "trace.jsonl").read_text().splitlines()
    rec = json.loads(lines[200])
    rec["preset"] = "LightningRain" if rec["preset"] != "LightningRain" else "ClearSun"
    lines[200] = json.dumps(rec)
    path = tmp_path / "bad.jsonl"
    path.write_text("\n".join(lines) + "\n")
    return path


def test_replay_tampered(coop_run, tmp_path, capsys):
    assert main(["replay", str(tampered(coop_run, tmp_path))]) == EXIT_TRACE
    assert "tick 199 preset" in capsys.readouterr().out


def test_replay_with_other_config(coop_run, tmp_path):
    dump_config(StageConfig(seed=9), tmp_path / "c.json")
    assert main(["replay", str(coop_run / "trace.jsonl"), "--config", str(tmp_path / "c.json")]) == EXIT_TRACE


def test_detect(coop_run, tmp_path, capsys):
    assert main(["detect", str(coop_run / "trace.jsonl"), "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    count = int(out.split("ClearAscent:")[1].split()[0])
    assert count >= 1
    assert (tmp_path / "episodes.csv").exists() and (tmp_path / "report.txt").exists()


def test_detect_tampered(coop_run, tmp_path):
    assert main(["detect", str(tampered(coop_run, tmp_path)), "--out", str(tmp_path)]) == EXIT_TRACE


def test_detect_corrupt_names_line(coop_run, tmp_path, capsys):
    lines = (coop_run / "trace.jsonl").read_text().splitlines()
    lines[41] = lines[41][:30]
    (tmp_path / "corrupt.jsonl").write_text("\n".join(lines) + "\n")
    assert main(["detect", str(tmp_path / "corrupt.jsonl"), "--out", str(tmp_path)]) == EXIT_TRACE
    assert "line 42" in capsys.readouterr().err


def test_detect_empty_trace(tmp_path, capsys):
    main(["run", "--duration", "0", "--out", str(tmp_path)])
    capsys.readouterr()
    assert main(["detect", str(tmp_path / "trace.jsonl"), "--out", str(tmp_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "ClearAscent: 0" in out and "violations: 0" in out


def test_plot(coop_run, tmp_path):
    assert main(["plot", str(coop_run / "trace.jsonl"), "--out", str(tmp_path)]) == EXIT_OK
    for name in ("height", "cue", "credit"):
        assert (tmp_path / "plots" / f"{name}.svg").stat().st_size > 0
    assert set(manifest(tmp_path)["plot"]["artifacts"]) == {"plot_height", "plot_cue", "plot_credit"}


def test_plot_corrupt(tmp_path):
    (tmp_path / "t.jsonl").write_text("not json\n")
    assert main(["plot", str(tmp_path / "t.jsonl"), "--out", str(tmp_path)]) == EXIT_TRACE


def test_manifest_keeps_each_command(coop_run, tmp_path):
    main(["run", "--duration", "1", "--out", str(tmp_path)])
    main(["detect", str(tmp_path / "trace.jsonl"), "--out", str(tmp_path)])
    assert set(manifest(tmp_path)) == {"run", "detect"}


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "silkstage", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("silkstage ")
