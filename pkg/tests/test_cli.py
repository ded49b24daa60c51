import argparse
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from pcspline.cli import build_parser, main


def run(argv, capsys):
    code = main(argv)
    err = capsys.readouterr().err
    return code, (json.loads(err) if err.strip().startswith("{") else err)


def load(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


@pytest.fixture
def data_csv(tmp_path):
    rng = np.random.default_rng(0)
    x = np.linspace(0, 1, 60)
    y = np.sin(5 * x) + 0.2 * rng.standard_normal(60)
    path = tmp_path / "data.csv"
    np.savetxt(path, np.c_[x, y, x**2, np.cos(3 * x)], delimiter=",", header="x,y,z,w", comments="")
    return path


def test_help_documents_every_flag():
    parser = build_parser()
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    for name, sp in sub.choices.items():
        for action in sp._actions:
            assert action.help, f"{name} {action.option_strings} lacks help"


def test_basis(tmp_path, capsys):
    xf = tmp_path / "x.csv"
    xf.write_text("x\n-1\n0\n0.5\n1\n")
    out = tmp_path / "B.csv"
    assert main(["basis", "--domain", "-1,1", "--K", "8", "--x-file", str(xf), "--out", str(out)]) == 0
    header = out.read_text().splitlines()[0]
    assert header == ",".join(f"b{k}" for k in range(1, 9))
    B = load(out)
    np.testing.assert_allclose(B.sum(axis=1), 1.0, atol=1e-12)


def test_basis_out_of_domain(tmp_path, capsys):
    xf = tmp_path / "x.csv"
    xf.write_text("x\n0\n3\n")
    code, err = run(["basis", "--domain", "0,1", "--x-file", str(xf), "--out", str(tmp_path / "B.csv")],
                    capsys)
    assert code == 2 and "x[1]" in err["message"]


def test_dof_map(tmp_path, capsys):
    out = tmp_path / "m.csv"
    code = main(["dof-map", "--n", "50", "--K", "20", "--order", "2", "--out", str(out),
                 "--out-2d", str(tmp_path / "m2.csv"), "--eps-points", "3", "--dump-R", str(tmp_path / "R.csv")])
    assert code == 0
    m = load(out)
    assert m.shape == (2001, 2)
    assert np.all(np.diff(m[:, 1]) < 0)
    grid = load(tmp_path / "m2.csv")
    assert grid.shape == (3 * 2001, 3)
    R = load(tmp_path / "R.csv")
    assert R.shape == (20, 20) and np.all(R @ np.arange(20) == 0)


def trapezoid_tail(path, U):
    d, p = load(path).T
    keep = d >= U
    # add the sliver between U and the first grid point above it
    i = np.argmax(keep)
    p_u = np.interp(U, d, p)
    return np.trapezoid(p[keep], d[keep]) + 0.5 * (p_u + p[i]) * (d[i] - U), np.trapezoid(p, d)


def test_prior_density_tail(tmp_path, capsys):
    out = tmp_path / "pd.csv"
    assert main(["prior-density", "--kind", "pc", "--U", "5", "--alpha", "0.01", "--scale", "d",
                 "--n", "50", "--K", "20", "--out", str(out)]) == 0
    tail, total = trapezoid_tail(out, 5.0)
    assert tail == pytest.approx(0.01, abs=5e-3)
    assert total == pytest.approx(1.0, abs=5e-3)


def test_prior_density_logtau_gamma(tmp_path, capsys):
    out = tmp_path / "g.csv"
    assert main(["prior-density", "--kind", "gamma", "--a", "1", "--b", "5e-4", "--scale", "logtau",
                 "--n", "50", "--K", "20", "--out", str(out)]) == 0
    s, p = load(out).T
    assert np.trapezoid(p, s) == pytest.approx(1.0, abs=1e-3)


def test_prior_density_missing_params(tmp_path, capsys):
    code, err = run(["prior-density", "--kind", "gamma", "--n", "50", "--out", str(tmp_path / "x.csv")],
                    capsys)
    assert code == 8 and "--a" in err["message"]


def test_fit_outputs(tmp_path, data_csv, capsys):
    prefix = tmp_path / "out" / "run"
    prefix.parent.mkdir()
    argv = ["fit", "--data", str(data_csv), "--K", "15", "--U", "5", "--iters", "600",
            "--thin", "2", "--seed", "4", "--hyper", "gamma:1,5e-4", "--out-prefix", str(prefix)]
    assert main(argv) == 0
    assert sorted(p.name for p in prefix.parent.iterdir()) == ["run_beta.csv", "run_summary.json",
                                                               "run_trace.csv"]
    trace = load(f"{prefix}_trace.csv")
    assert trace.shape == (150, 5)
    assert np.all((trace[:, 4] > 2) & (trace[:, 4] < 15))
    beta = load(f"{prefix}_beta.csv")
    assert beta.shape == (150, 15)
    summary = json.loads(open(f"{prefix}_summary.json").read())
    assert summary["settings"]["seed"] == 4
    assert 0 <= summary["acceptance"]["hyper"] <= 1
    np.testing.assert_allclose(summary["beta_mean"], beta.mean(axis=0), rtol=1e-12)


def test_fit_rejects_unattainable_U(tmp_path, data_csv, capsys):
    code, err = run(["fit", "--data", str(data_csv), "--K", "20", "--U", "2", "--out-prefix",
                     str(tmp_path / "f")], capsys)
    assert code == 3
    assert "(2, 20)" in err["message"] and err["attainable_interval"] == [2, 20]
    assert list(tmp_path.iterdir()) == [data_csv]


def test_distinct_error_codes(tmp_path, data_csv, capsys):
    codes = {
        "usage": run(["fit", "--bogus"], capsys)[0],
        "file": run(["fit", "--data", str(tmp_path / "none.csv"), "--U", "5", "--out-prefix",
                     str(tmp_path / "f")], capsys)[0],
        "range": run(["fit", "--data", str(data_csv), "--U", "30", "--out-prefix", str(tmp_path / "f")],
                     capsys)[0],
        "args": run(["fit", "--data", str(data_csv), "--U", "5", "--T", "0.5", "--out-prefix",
                     str(tmp_path / "f")], capsys)[0],
        "singular": run(["fit", "--data", str(data_csv), "--K", "80", "--U", "5", "--out-prefix",
                         str(tmp_path / "f")], capsys)[0],
    }
    assert all(c != 0 for c in codes.values())
    assert len(set(codes.values())) == len(codes)


def test_unknown_subcommand_json(capsys):
    code, err = run(["frobnicate"], capsys)
    assert code == 8 and err["error"] == "UsageError"


def test_seed_env_fallback(tmp_path, data_csv, capsys, monkeypatch):
    base = ["fit", "--data", str(data_csv), "--K", "10", "--U", "4", "--iters", "200"]
    monkeypatch.setenv("PCSPLINE_SEED", "17")
    assert main(base + ["--out-prefix", str(tmp_path / "env")]) == 0
    monkeypatch.delenv("PCSPLINE_SEED")
    assert main(base + ["--seed", "17", "--out-prefix", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "env_trace.csv").read_bytes() == (tmp_path / "flag_trace.csv").read_bytes()
    monkeypatch.setenv("PCSPLINE_SEED", "oops")
    assert main(base + ["--out-prefix", str(tmp_path / "bad")]) == 2


@pytest.fixture
def additive_config(tmp_path, data_csv):
    cfg = {"data": data_csv.name, "response": "y",
           "smooths": [{"covariate": "x", "K": 12, "U": 4}, {"covariate": "w", "K": 10, "U": 3}],
           "fixed": ["z"], "iters": 400, "seed": 1}
    path = tmp_path / "model.json"
    path.write_text(json.dumps(cfg))
    return path


def test_fit_additive(tmp_path, additive_config, capsys):
    prefix = tmp_path / "add"
    assert main(["fit-additive", "--config", str(additive_config), "--out-prefix", str(prefix)]) == 0
    trace_header = open(f"{prefix}_trace.csv").readline().strip().split(",")
    assert trace_header[:4] == ["tau_eps", "gamma_intercept", "gamma_x", "gamma_w"]
    summary = json.loads(open(f"{prefix}_summary.json").read())
    for name in ("x", "w"):
        assert summary["smooths"][name]["max_abs_constraint"] <= 1e-8
        assert load(f"{prefix}_beta_{name}.csv").shape[0] == 200


def test_fit_additive_needs_prefix(additive_config, capsys):
    code, err = run(["fit-additive", "--config", str(additive_config)], capsys)
    assert code == 8


def test_simulate(tmp_path, capsys):
    study = {"scenarios": [{"truth": "f1", "n": 20, "K": 20, "tau_eps": 5}],
             "arms": ["pc:3", "gamma:1e-3,1e-3"], "replicates": 2, "seed": 5,
             "settings": {"n_iter": 400, "burn_in": 200}}
    sfile = tmp_path / "study.json"
    sfile.write_text(json.dumps(study))
    out = tmp_path / "res.csv"
    assert main(["simulate", "--study", str(sfile), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("scenario,truth,n,K,tau_eps,arm,replicate,mse")
    assert len(lines) == 5
    assert (tmp_path / "res_summary.csv").exists()
    meta = json.loads((tmp_path / "res_meta.json").read_text())
    assert meta["master_seed"] == 5 and "MCMC" in meta["fitting"]


def snapshot(folder):
    return {p.name: p.read_bytes() for p in sorted(folder.iterdir())}


@pytest.mark.parametrize("cmd", [
    ["basis", "--domain", "0,1", "--n", "30", "--K", "9", "--out", "{d}/o.csv"],
    ["dof-map", "--n", "40", "--K", "12", "--out", "{d}/o.csv", "--out-2d", "{d}/o2.csv"],
    ["prior-density", "--kind", "pc", "--U", "4", "--n", "40", "--K", "12", "--out", "{d}/o.csv"],
    ["fit", "--data", "{data}", "--K", "10", "--U", "4", "--iters", "300", "--seed", "2",
     "--out-prefix", "{d}/o"],
    ["fit-additive", "--config", "{config}", "--out-prefix", "{d}/o"],
])
def test_byte_identical_reruns(tmp_path, data_csv, additive_config, cmd, capsys):
    runs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        d.mkdir()
        argv = [a.format(d=d, data=data_csv, config=additive_config) for a in cmd]
        assert main(argv) == 0
        runs.append(snapshot(d))
    assert runs[0] == runs[1] and runs[0]


def test_console_script(tmp_path):
    env = dict(os.environ)
    res = subprocess.run([sys.executable, "-m", "pcspline.cli", "dof-map", "--n", "30", "--K", "10",
                          "--out", str(tmp_path / "m.csv")], capture_output=True, text=True, env=env)
    assert res.returncode == 0, res.stderr
    res = subprocess.run([sys.executable, "-m", "pcspline.cli", "fit", "--nope"], capture_output=True,
                         text=True)
    assert res.returncode == 8 and json.loads(res.stderr)["error"] == "UsageError"
