import csv
import io
import json

import pytest

from drawdown_tracking import cli
from drawdown_tracking.presets import FIG2
from drawdown_tracking.verify import CheckReport


def run(args, capsys):
    code = cli.main(args)
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_policy_eval_csv(capsys):
    code, out, _ = run(["policy-eval", "--preset", "fig2", "--x", "0", "10", "50"], capsys)
    assert code == 0
    r = rows(out)
    assert [x["region"] for x in r] == ["R1", "R2", "R5"]
    assert float(r[0]["c_star"]) == pytest.approx(4.0)
    assert out.splitlines()[0].startswith("x,z,m,m_eff,y,value,c_star,theta_star")
    # 17 significant digits
    assert r[1]["value"] == format(float(r[1]["value"]), ".17g")


def test_policy_eval_json(capsys):
    code, out, _ = run(["policy-eval", "--preset", "fig2", "--x", "5", "--format", "json"], capsys)
    assert code == 0
    data = json.loads(out)
    assert data[0]["x"] == 5.0


def test_config_file_and_env(tmp_path, capsys, monkeypatch):
    cfg = FIG2.to_dict() | {"state": {"x": 3.0, "z": 10.0, "m": 20.0}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    code, a, _ = run(["policy-eval", "--config", str(path)], capsys)
    assert code == 0
    monkeypatch.setenv("DT_CONFIG", str(path))
    code, b, _ = run(["policy-eval"], capsys)
    assert code == 0 and a == b


def test_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"market": {"d": 1}}')
    code, _, err = run(["policy-eval", "--config", str(bad), "--x", "1", "--z", "1", "--m", "1"], capsys)
    assert code == 2 and "config error" in err
    code, _, _ = run(["policy-eval", "--preset", "nope"], capsys)
    assert code == 2
    code, _, err = run(
        ["sensitivity", "--preset", "fig3", "--param", "rho", "--values", "2", "0.01", "--x", "1", "--paths", "0"],
        capsys,
    )
    assert code == 2 and "rho=0.01" in err


def test_sensitivity_deterministic_and_consistent(tmp_path, capsys):
    args = ["sensitivity", "--preset", "fig2", "--param", "lambda", "--values", "0", "0.5",
            "--x", "5", "60", "--paths", "50", "--dt", "0.05", "--seed", "3"]
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    assert cli.main(args + ["--out", str(a)]) == 0
    assert cli.main(args + ["--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()
    table = rows(a.read_text())
    assert len(table) == 4
    for r in table:
        cfg = FIG2.replace(lam=float(r["value"])).to_dict()
        p = tmp_path / "one.json"
        p.write_text(json.dumps(cfg))
        code, out, _ = run(["policy-eval", "--config", str(p), "--x", r["x"], "--z", "10", "--m", "20"], capsys)
        assert code == 0
        back = rows(out)[0]
        assert back["c_star"] == r["c_star"]
        assert back["theta_star"] == r["theta_star"]


def test_simulate_and_dump(tmp_path, capsys):
    out = tmp_path / "sim.csv"
    dump = tmp_path / "paths.csv"
    code = cli.main(["simulate", "--preset", "fig1", "--paths", "20", "--dt", "0.02", "--horizon", "1",
                     "--dump-paths", "2", "--dump-file", str(dump), "--out", str(out)])
    assert code == 0
    summary = rows(out.read_text())[0]
    assert float(summary["paths"]) == 20
    paths = rows(dump.read_text())
    assert {r["path"] for r in paths} == {"0", "1"}
    assert len(paths) == 2 * 51


def test_boundary_table(capsys):
    code, out, _ = run(["boundary-table", "--preset", "fig2", "--n", "5"], capsys)
    assert code == 0
    r = rows(out)
    assert float(r[0]["y_star"]) == pytest.approx(2.0)
    ys = [float(x["y_star"]) for x in r]
    assert all(a > b for a, b in zip(ys, ys[1:]))


def test_verify_exit_codes(tmp_path, capsys, monkeypatch):
    out = tmp_path / "rep.json"
    assert cli.main(["verify", "--preset", "fig2", "--suite", "analytic", "--out", str(out)]) == 0
    assert json.loads(out.read_text())["passed"] is True

    def failing(*a, **k):
        return [CheckReport("forced", "none", 1.0, 0.0, False)]

    monkeypatch.setattr(cli, "run_suite", failing)
    assert cli.main(["verify", "--preset", "fig2", "--out", str(out)]) == 3
