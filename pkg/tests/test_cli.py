from __future__ import annotations

import json
import subprocess
import sys

import numpy as np
import pytest

from reliable_halfspaces.cli import apply_override, main
from reliable_halfspaces.errors import ArgumentError
from reliable_halfspaces.sampleio import read_samples

CLEAN = {"kind": "halfspace", "d": 5, "truth": {"axis": 0, "alpha": 0.3}, "policy": {"kind": "none"}}


def write_config(tmp_path, obj, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def last_json(out):
    return json.loads(out.strip().splitlines()[-1])


# --- overrides -------------------------------------------------------------------


def test_apply_override():
    cfg = {"learner": {"zeta": 0.2}}
    apply_override(cfg, "learner.zeta=0.3")
    apply_override(cfg, "instance.policy.kind=flip_prob")
    apply_override(cfg, "seeds=[1,2]")
    assert cfg == {"learner": {"zeta": 0.3}, "instance": {"policy": {"kind": "flip_prob"}}, "seeds": [1, 2]}
    with pytest.raises(ArgumentError):
        apply_override(cfg, "novalue")
    with pytest.raises(ArgumentError):
        apply_override(cfg, "learner.zeta.x=1")


# --- generate ----------------------------------------------------------------------


def test_generate_jsonl(tmp_path, capsys):
    cfg = write_config(tmp_path, {"instance": CLEAN, "n": 1000})
    out = tmp_path / "s.jsonl"
    code, stdout, _ = run(capsys, "generate", "--config", cfg, "--seed", "3", "--out", str(out))
    assert code == 0
    assert len(out.read_text().splitlines()) == 1000
    summary = last_json(stdout)
    assert summary["n"] == 1000 and summary["d"] == 5
    assert summary["negative_rate"] == pytest.approx(0.7, abs=0.05)


@pytest.mark.parametrize("fmt", ["jsonl", "bin"])
def test_generate_byte_identical(tmp_path, capsys, fmt):
    cfg = write_config(tmp_path, {"instance": CLEAN, "n": 500})
    a, b = tmp_path / f"a.{fmt}", tmp_path / f"b.{fmt}"
    for path in (a, b):
        assert run(capsys, "generate", "--config", cfg, "--seed", "9", "--out", str(path), "--format", fmt)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    X, y = read_samples(str(a), fmt)
    assert X.shape == (500, 5) and set(np.unique(y)) <= {-1, 1}


def test_generate_full_flip(tmp_path, capsys):
    cfg = write_config(tmp_path, {"instance": {**CLEAN, "policy": {"kind": "flip_prob", "rho": 1.0}}, "n": 2000})
    code, stdout, _ = run(capsys, "generate", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "s.jsonl"))
    assert code == 0 and last_json(stdout)["negative_rate"] == 0.0


def test_generate_errors(tmp_path, capsys):
    cfg = write_config(tmp_path, {"instance": CLEAN, "n": 10})
    assert run(capsys, "generate", "--config", cfg, "--out", str(tmp_path / "x"))[0] == 2  # no seed
    bad = write_config(tmp_path, {"instance": {**CLEAN, "kind": "mystery"}, "n": 10}, "bad.json")
    assert run(capsys, "generate", "--config", bad, "--seed", "1", "--out", str(tmp_path / "x"))[0] == 2
    code, stdout, err = run(capsys, "generate", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "no" / "dir" / "x"))
    assert code == 3 and stdout == "" and "error" in err
    assert run(capsys, "generate", "--config", str(tmp_path / "missing.json"), "--seed", "1")[0] == 3
    assert run(capsys, "frobnicate")[0] == 2


# --- learn -------------------------------------------------------------------------


def test_learn_clean(tmp_path, capsys):
    cfg = write_config(tmp_path, {"instance": CLEAN, "epsilon": 0.1, "learner": {"preset": "desk"}})
    out = tmp_path / "h.json"
    code, stdout, _ = run(capsys, "learn", "--config", cfg, "--seed", "0", "--out", str(out))
    assert code == 0
    h = json.loads(out.read_text())
    assert h["kind"] == "halfspace" and len(h["w"]) == 5
    assert last_json(stdout)["hypothesis"] == h
    trace = (tmp_path / "h.json.trace.jsonl").read_text().splitlines()
    assert trace and {"level", "lam", "r_plus"} <= set(json.loads(trace[0]))


def test_learn_independent_labels(tmp_path, capsys):
    inst = {"kind": "independent", "d": 4, "p_plus": 0.5}
    cfg = write_config(tmp_path, {"instance": inst, "epsilon": 0.1, "learner": {"preset": "desk", "max_walk_iterations": 5}})
    out = tmp_path / "h.json"
    code, _, _ = run(capsys, "learn", "--config", cfg, "--seed", "2", "--out", str(out))
    assert code in (0, 4)
    ev = write_config(tmp_path, {"instance": inst, "hypothesis": str(out), "n": 100000, "epsilon": 0.1}, "ev.json")
    code, stdout, _ = run(capsys, "eval", "--config", ev, "--seed", "5")
    assert code == 0 and last_json(stdout)["r_plus"] <= 0.1


def test_learn_zero_restarts_exits_4(tmp_path, capsys):
    cfg = write_config(tmp_path, {"instance": CLEAN, "epsilon": 0.1})
    out = tmp_path / "h.json"
    code, _, err = run(capsys, "learn", "--config", cfg, "--set", "learner.restart_budget=0", "--seed", "0", "--out", str(out))
    assert code == 4 and "budget" in err
    assert json.loads(out.read_text())["kind"] == "const_minus"


def test_learn_from_sample_file(tmp_path, capsys):
    gen = write_config(tmp_path, {"instance": {**CLEAN, "truth": {"axis": 0, "t": -0.5}}, "n": 50000})
    samples = tmp_path / "s.bin"
    assert run(capsys, "generate", "--config", gen, "--seed", "4", "--out", str(samples), "--format", "bin")[0] == 0
    cfg = write_config(tmp_path, {"samples": str(samples), "epsilon": 0.1, "learner": {"preset": "desk"}}, "l.json")
    code, stdout, _ = run(capsys, "learn", "--config", cfg, "--seed", "1", "--format", "bin")
    assert code == 0 and last_json(stdout)["path"] == ["easy:halfspace"]


def test_learn_deterministic(tmp_path, capsys):
    cfg = write_config(tmp_path, {"instance": CLEAN, "epsilon": 0.1, "learner": {"preset": "desk", "max_walk_iterations": 30}})
    outs = []
    for name in ("a.json", "b.json"):
        run(capsys, "learn", "--config", cfg, "--seed", "6", "--out", str(tmp_path / name))
        outs.append((tmp_path / name).read_bytes() + (tmp_path / (name + ".trace.jsonl")).read_bytes())
    assert outs[0] == outs[1]


# --- eval and sweep -------------------------------------------------------------------


def test_eval_inline_hypothesis(tmp_path, capsys):
    inst = {"kind": "halfspace", "d": 3, "truth": {"axis": 0, "t": 0.0}, "policy": {"kind": "flip_prob", "rho": 0.3}}
    hyp = {"kind": "halfspace", "w": [1, 0, 0], "t": 0.0}
    cfg = write_config(tmp_path, {"instance": inst, "hypothesis": hyp, "n": 200000, "epsilon": 0.1})
    code, stdout, _ = run(capsys, "eval", "--config", cfg, "--seed", "0")
    rep = last_json(stdout)
    assert code == 0 and rep["r_plus"] == 0.0 and rep["opt"] == pytest.approx(0.15) and rep["passed"]


def test_sweep_writes_rows(tmp_path, capsys):
    spec = {"dims": [3], "alphas": [0.04], "seeds": [1, 2], "n_eval": 1000}
    cfg = write_config(tmp_path, spec)
    out = tmp_path / "rows.csv"
    code, stdout, _ = run(capsys, "sweep", "--config", cfg, "--seed", "0", "--out", str(out))
    assert code == 0 and last_json(stdout)["cells"] == 2
    assert len(out.read_text().splitlines()) == 3


# --- hard-instance and verify ---------------------------------------------------------


def test_hard_instance_examples(tmp_path, capsys):
    code, stdout, _ = run(capsys, "hard-instance", "--set", "order=0")
    assert code == 0 and last_json(stdout)["c"] == pytest.approx(0.67449, abs=1e-5)
    out = tmp_path / "g1.json"
    code, stdout, _ = run(capsys, "hard-instance", "--set", "order=1", "--out", str(out))
    assert code == 0 and last_json(stdout)["max_residual"] <= 1e-8
    data = json.loads(out.read_text())
    assert {"nodes", "values", "c", "residuals", "chi2_plus", "chi2_minus"} <= set(data)
    code, _, err = run(capsys, "hard-instance", "--set", "order=20")
    assert code == 2 and err


def test_hard_instance_infeasible_exit(capsys):
    code, stdout, _ = run(capsys, "hard-instance", "--set", "order=0", "--set", "c=-1.0")
    assert code == 5 and "residuals" in last_json(stdout)
    code, _, _ = run(capsys, "hard-instance", "--set", "order=3", "--set", "nodes=15")
    assert code == 2  # rule does not reach [-10, 10]


def test_hard_instance_byte_identical(tmp_path, capsys):
    for name in ("a.json", "b.json"):
        assert run(capsys, "hard-instance", "--set", "order=2", "--out", str(tmp_path / name))[0] == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_verify(tmp_path, capsys):
    g = tmp_path / "g.json"
    run(capsys, "hard-instance", "--set", "order=1", "--out", str(g))
    code, stdout, _ = run(capsys, "verify", "--set", f"g={json.dumps(str(g))}", "--seed", "3")
    rep = last_json(stdout)
    assert code == 0 and rep["ok"] and rep["tail_violations"] == 0
    assert abs(rep["label_mean"]) <= 0.01
    data = json.loads(g.read_text())
    data["values"] = [1.0] * len(data["values"])
    g.write_text(json.dumps(data))
    assert run(capsys, "verify", "--set", f"g={json.dumps(str(g))}")[0] == 5
    assert run(capsys, "verify", "--set", "g=/nonexistent/g.json")[0] == 3


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "reliable_halfspaces", "hard-instance", "--set", "order=0"],
        capture_output=True,
        text=True,
        check=False,
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["c"] == pytest.approx(0.67449, abs=1e-5)
