import csv
import json

import pytest

from himo.cli import main
from himo.environments import build_tower_of_hanoi
from himo.mdp import dump_model
from himo.optimizer import HimoConfig
from himo.outputs import MEASURES_HEADER, TRACE_HEADER, RunManifest


def header(path):
    with open(path, newline="") as fh:
        return tuple(next(csv.reader(fh)))


def test_run_writes_artifacts(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "--env", "builtin:toh3", "--lambda", "0.95", "--out-dir", str(out)]) == 0
    for name in ("run.json", "trace.csv", "measures.csv", "policy.csv"):
        assert (out / name).is_file()
    assert header(out / "trace.csv") == TRACE_HEADER == ("iter", "value", "grad_norm", "step_scale", "backtracks")
    assert header(out / "measures.csv") == MEASURES_HEADER
    run = json.loads((out / "run.json").read_text())
    assert run["reason"] == "value_tol" and run["config"]["lam"] == 0.95
    assert "value_tol" in capsys.readouterr().out


def test_wormhole_measures_include_wormhole_states(tmp_path):
    out = tmp_path / "w"
    assert main(["run", "--env", "builtin:rooms-wormhole", "--out-dir", str(out)]) == 0
    states = {row["state"] for row in csv.DictReader(open(out / "measures.csv"))}
    assert {"r3c3", "r9c7"} <= states


def test_plots(tmp_path):
    out = tmp_path / "p"
    assert main(["run", "--env", "builtin:toh2", "--out-dir", str(out), "--plots"]) == 0
    svgs = sorted(p.name for p in out.glob("*.svg"))
    assert svgs == sorted(f"{n}.svg" for n in ("pd", "cd", "pd_norm", "cd_norm", "pd_vel", "cd_vel"))


def test_manifest_rerun_reproduces_trace(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--env", "builtin:toh2", "--eta", "0.5", "--out-dir", str(a)]) == 0
    assert main(["run", "--manifest", str(a / "run.json"), "--out-dir", str(b)]) == 0
    assert (a / "trace.csv").read_bytes() == (b / "trace.csv").read_bytes()
    assert json.loads((b / "run.json").read_text())["config"]["step_scale"] == 0.5


def test_manifest_round_trip():
    m = RunManifest("builtin:toh1", HimoConfig(lam=0.9), "0.1.0", 1.5, "value_tol", 19.0, 4, 7, 1, "now")
    assert RunManifest.from_json(m.to_json()) == m


def test_missing_env_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["run"])
    assert info.value.code == 64


def test_bad_flag_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["run", "--env", "builtin:toh1", "--lambda", "1.5"])
    assert info.value.code == 64


def test_unreadable_model(tmp_path):
    assert main(["run", "--env", str(tmp_path / "missing.json"), "--out-dir", str(tmp_path)]) == 66
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["run", "--env", str(bad), "--out-dir", str(tmp_path)]) == 66


def test_model_file_run(tmp_path):
    model = tmp_path / "toh1.json"
    model.write_text(dump_model(build_tower_of_hanoi(1)))
    assert main(["run", "--env", str(model), "--out-dir", str(tmp_path / "o")]) == 0


def test_max_iters_exit_code(tmp_path):
    assert main(["run", "--env", "builtin:toh3", "--max-iters", "2", "--out-dir", str(tmp_path)]) == 2


def test_step_failure_exit_code(tmp_path, monkeypatch):
    from himo import cli
    from himo.optimizer import StepFailure, run_himo

    def fail(model, config):
        trace = run_himo(model, HimoConfig(max_iters=0))
        trace.reason = "step_failure"
        raise StepFailure(1.0, 60, trace=trace)

    monkeypatch.setattr(cli, "run_himo", fail)
    assert main(["run", "--env", "builtin:toh1", "--out-dir", str(tmp_path)]) == 3


def test_unwritable_out_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "--env", "builtin:toh1", "--out-dir", str(blocker / "sub")]) == 73


def test_gradcheck(capsys):
    assert main(["check", "gradcheck", "--trials", "100", "--seed", "7"]) == 0
    assert capsys.readouterr().out.startswith("max rel err ")


def test_moments(capsys):
    assert main(["check", "moments", "--env", "builtin:chain2", "--horizon", "25"]) == 0
    assert "max C deviation" in capsys.readouterr().out


def test_moments_guard(capsys):
    assert main(["check", "moments", "--env", "builtin:toh3"]) == 65
    assert "refusing" in capsys.readouterr().err


def test_compare_vi(capsys):
    assert main(["check", "compare-vi", "--env", "builtin:toh3"]) == 0
    assert "agreement: 100% on optimal path" in capsys.readouterr().out


def test_compare_vi_not_converged():
    assert main(["check", "compare-vi", "--env", "builtin:toh3", "--max-iters", "1"]) == 1
