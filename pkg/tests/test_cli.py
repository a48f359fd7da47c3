import csv
import io
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from optmol import SystemParams, evaluate_point, steady_state
from optmol.cli import CSV_HEADER, SweepAxis, SweepConfig, UsageError, fmt, main, run_sweep


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def parse_csv(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], [[float(x) for x in r] for r in rows[1:]]


# --- steady -------------------------------------------------------------------


def test_steady_equilibrium_zero_coherence(capsys):
    code, out, _ = run(["steady", "--lambda", "0.1", "--gamma", "0.1", "--ta", "0.2", "--tb", "0.2"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["coherence_abs"] == 0.0
    assert all(c["pass"] for c in rep["checks"])
    assert {"name", "pass", "residual"} <= set(rep["checks"][0])


def test_steady_matches_api(capsys):
    code, out, _ = run(["steady", "--lambda", "0.1", "--gamma", "0.1", "--ta", "0.2", "--tb", "0.6"], capsys)
    assert code == 0
    rep = json.loads(out)
    p = SystemParams(lam=0.1, gamma=0.1, t_a=0.2, t_b=0.6)
    rec = evaluate_point(p).as_dict()
    ss = steady_state(p)
    for name in CSV_HEADER[2:]:
        assert rep[name] == rec[name], name
    assert rep["rho_ee"] == ss.rho_ee
    assert complex(rep["re_rho_ef"], rep["im_rho_ef"]) == ss.rho_ef


def test_steady_rejects_lambda_above_omega(capsys):
    code, out, err = run(["steady", "--lambda", "1.5"], capsys)
    assert code == 2
    assert out == ""
    assert len(err.strip().splitlines()) == 1
    assert "lambda < omega" in err


@pytest.mark.parametrize("flag,value", [("--gamma", "0"), ("--ta", "-1"), ("--tb", "nan")])
def test_steady_rejects_bad_params(capsys, flag, value):
    code, _, err = run(["steady", flag, value], capsys)
    assert code == 2 and err.startswith("optmol steady:")


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"lambda": 0.2, "tb": 0.5}))
    _, out, _ = run(["steady", "--config", str(cfg)], capsys)
    rep = json.loads(out)
    assert rep["lambda"] == 0.2 and rep["t_b"] == 0.5
    _, out, _ = run(["steady", "--config", str(cfg), "--tb", "0.7"], capsys)
    rep = json.loads(out)
    assert rep["lambda"] == 0.2 and rep["t_b"] == 0.7


def test_bad_config(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text("{not json")
    code, _, err = run(["steady", "--config", str(cfg)], capsys)
    assert code == 2 and "config" in err
    code, _, _ = run(["steady", "--config", str(tmp_path / "missing.json")], capsys)
    assert code == 2


# --- sweep --------------------------------------------------------------------


def test_sweep_preset_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["sweep", "--preset", "fig2a", "--out", str(a)], capsys)[0] == 0
    assert run(["sweep", "--preset", "fig2a", "--out", str(b), "--threads", "3"], capsys)[0] == 0
    assert a.read_bytes() == b.read_bytes()
    data = a.read_bytes()
    assert b"\r" not in data and b'"' not in data
    header, rows = parse_csv(data.decode())
    assert tuple(header) == CSV_HEADER
    assert len(rows) == 3 * 81
    # rows in grid order: lambda outer, delta_t inner; coherence grows along each line
    for k in range(3):
        line = rows[81 * k : 81 * (k + 1)]
        assert len({r[1] for r in line}) == 1
        coh = [r[2] for r in line]
        assert all(y - x > 1e-14 for x, y in zip(coh, coh[1:]))


def test_sweep_csv_roundtrip(capsys):
    code, out, err = run(["sweep", "--lambda", "0.2", "--axis", "delta_t=0.1:0.7:4"], capsys)
    assert code == 0
    assert "4 points" in err
    header, rows = parse_csv(out)
    for r in rows:
        p = SystemParams(lam=0.2, t_a=0.2, t_b=0.2 + r[0])
        rec = evaluate_point(p)
        for name, value in zip(header[2:], r[2:]):
            assert value == getattr(rec, name), name


def test_sweep_zero_gradient_rows(capsys):
    code, out, _ = run(["sweep", "--axis", "delta_t=0,0"], capsys)
    assert code == 0
    header, rows = parse_csv(out)
    assert len(rows) == 2
    for r in rows:
        vals = dict(zip(header, r))
        for name in ("coherence_abs", "j_curl", "j_a", "j_b", "j_a_p", "j_b_p", "j_a_c", "j_b_c", "epr"):
            assert abs(vals[name]) < 1e-15, name


def test_sweep_2d_coherence_current_sign(capsys):
    code, out, _ = run(
        ["sweep", "--axis", "delta_t=0.05:0.8:50", "--axis", "lambda=0.05:0.5:50", "--outputs", "j_a_c", "--threads", "2"],
        capsys,
    )
    assert code == 0
    header, rows = parse_csv(out)
    assert header == ["delta_t", "lambda", "j_a_c"]
    assert len(rows) == 2500
    assert all(r[2] >= 0 for r in rows)
    # first axis is the outer loop
    assert rows[0][0] == rows[49][0] != rows[50][0]


def test_sweep_nan_cells_and_summary(capsys):
    code, out, err = run(["sweep", "--axis", "lambda=1e-7,0.1", "--tb", "0.5"], capsys)
    assert code == 0
    header, rows = parse_csv(out)
    qfi = header.index("qfi")
    assert math.isnan(rows[0][qfi]) and not math.isnan(rows[1][qfi])
    assert ",nan," in out.splitlines()[1]
    assert err.strip().splitlines()[-1] == "optmol sweep: 2 points, 1 consistency failures"


@pytest.mark.parametrize(
    "axis",
    ["delta_t=0.5:0.1:5", "delta_t=0:1:1", "kappa=0:1:5", "lambda", "lambda=0.1:1.2:5", "lambda=a,b"],
)
def test_sweep_bad_axes(capsys, axis):
    code, out, err = run(["sweep", "--axis", axis], capsys)
    assert code == 2
    assert out == ""
    assert len(err.strip().splitlines()) == 1


def test_sweep_unknown_output(capsys):
    code, _, err = run(["sweep", "--axis", "delta_t=0:1:3", "--outputs", "bogus"], capsys)
    assert code == 2 and "bogus" in err


def test_sweep_config_object():
    cfg = SweepConfig(base=SystemParams(), axes=(SweepAxis.from_dict({"name": "lambda", "values": [0.1, 0.3]}),))
    buf = io.StringIO()
    assert run_sweep(cfg, buf) == []
    assert buf.getvalue().count("\n") == 3
    with pytest.raises(UsageError):
        SweepConfig(base=SystemParams(), axes=())


def test_fmt():
    for x in (0.1, 1 / 3, 6.9e-5, -1e-300, 0.0):
        assert float(fmt(x)) == x
    assert fmt(float("nan")) == "nan"


# --- dynamics ------------------------------------------------------------------


def test_dynamics_ground_equilibrium(capsys):
    code, out, _ = run(["dynamics", "--initial", "ground", "--t-final", "1000", "--stride", "10000"], capsys)
    assert code == 0
    header, rows = parse_csv(out)
    assert header[:4] == ["t", "rho_gg", "rho_ee", "rho_ff"]
    g = np.array([1.0, math.exp(-1.1 / 0.2), math.exp(-0.9 / 0.2)])
    g /= g.sum()
    assert np.max(np.abs(np.array(rows[-1][1:4]) - g)) < 1e-8
    assert rows[-1][0] == 1000.0


def test_dynamics_matches_steady(capsys):
    code, out, _ = run(["dynamics", "--initial", "mixed", "--tb", "0.6", "--stride", "100000"], capsys)
    assert code == 0
    _, rows = parse_csv(out)
    _, sout, _ = run(["steady", "--tb", "0.6"], capsys)
    rep = json.loads(sout)
    last = rows[-1]
    assert last[0] == 2000.0
    want = [rep["rho_gg"], rep["rho_ee"], rep["rho_ff"], rep["re_rho_ef"], rep["im_rho_ef"]]
    assert np.max(np.abs(np.array(last[1:6]) - want)) < 1e-8


def test_dynamics_custom_state(capsys):
    code, out, _ = run(
        ["dynamics", "--initial", "custom", "--populations", "0.5,0.25,0.25", "--coherence", "0.1,-0.05", "--t-final", "0.1"],
        capsys,
    )
    assert code == 0
    _, rows = parse_csv(out)
    assert rows[0][1:6] == [0.5, 0.25, 0.25, 0.1, -0.05]


@pytest.mark.parametrize(
    "extra",
    [
        ["--dt", "0.5"],
        ["--initial", "custom"],
        ["--initial", "custom", "--populations", "0.5,0.6,0.1"],
        ["--initial", "custom", "--populations", "0.5,0.25,0.25", "--coherence", "0.5,0"],
        ["--stride", "0"],
    ],
)
def test_dynamics_refusals(capsys, extra):
    code, out, err = run(["dynamics", "--t-final", "1"] + extra, capsys)
    assert code == 2
    assert out == ""
    assert len(err.strip().splitlines()) == 1


def test_dynamics_dt_message(capsys):
    _, _, err = run(["dynamics", "--dt", "0.5"], capsys)
    assert "stability bound" in err


# --- validate -------------------------------------------------------------------


def test_validate_default_grid(capsys):
    code, out, _ = run(["validate"], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["pass"] and rep["points"] == 400
    assert rep["checks_failed"] == 0
    assert rep["worst_residual"] < 1e-10
    names = {c["name"] for c in rep["checks"]}
    assert {"oracle_agreement", "heat_currents", "flux_equivalence", "second_law", "gibbs_limit"} <= names


def test_validate_fault_injection(capsys):
    code, out, err = run(["validate", "--axis", "lambda=0.1:0.4:3", "--axis", "delta_t=0:0.6:3", "--inject-fault"], capsys)
    assert code == 1
    rep = json.loads(out)
    failed = {c["name"] for c in rep["checks"] if not c["pass"]}
    assert failed == {"flux_equivalence"}
    assert "flux_equivalence" in err


def test_validate_fock(capsys):
    code, out, _ = run(["validate", "--axis", "lambda=0.1,0.2", "--axis", "delta_t=0,0.4", "--fock", "--nmax", "4"], capsys)
    assert code == 0
    rep = json.loads(out)
    assert rep["fock_t_b"] == 1.0 and rep["fock_n_max"] == 4
    assert 0 < rep["fock_leakage"] < 1
    assert rep["fock_deviation"] <= 5 * rep["fock_leakage"]


def test_validate_bad_nmax(capsys):
    assert run(["validate", "--axis", "lambda=0.1,0.2", "--fock", "--nmax", "9"], capsys)[0] == 2


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "optmol", "steady", "--lambda", "2"], capture_output=True, text=True
    )
    assert proc.returncode == 2
    assert "lambda < omega" in proc.stderr
