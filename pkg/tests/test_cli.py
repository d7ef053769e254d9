import csv
import json
import subprocess
import sys

import pytest

from switchlayer.cli import ConfigError, parse_config_text, run, serialize_config
from switchlayer.scenarios import catalog

CONFIG = """\
# hidden sliding example
name = demo
n = 2
h = x1
f = [2*lam^2 - 1, -lam]
x0 = [-0.5, 0]
t_span = [0, 2]
"""


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_simulate_csv_and_events(tmp_path):
    out = tmp_path / "run.csv"
    assert run(["simulate", "--scenario", "example1a", "--out", str(out)]) == 0
    data = rows(out)
    assert list(data[0]) == ["t", "x1", "x2", "lambda", "mode"]
    hit = next(i for i, r in enumerate(data) if r["mode"] == "sliding")
    assert all(r["mode"] == "free+" for r in data[:hit])
    assert all(r["mode"] == "sliding" for r in data[hit:])
    ev = rows(tmp_path / "run.events.csv")
    assert [e["kind"] for e in ev] == ["SurfaceHit", "SlideStart"]


def test_crossing_writes_one_cross_exit(tmp_path):
    out = tmp_path / "b.csv"
    assert run(["simulate", "--scenario", "example2b", "--out", str(out)]) == 0
    kinds = [e["kind"] for e in rows(tmp_path / "b.events.csv")]
    assert kinds.count("CrossExit") == 1
    t = float(next(e["t"] for e in rows(tmp_path / "b.events.csv") if e["kind"] == "CrossExit"))
    assert t == pytest.approx(0.5, abs=1e-9)


def test_simulate_json(capsys):
    assert run(["simulate", "--scenario", "example2a", "--format", "json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["meta"]["engine"] == "pws" and doc["meta"]["status"] == "horizon"
    assert doc["samples"]["mode"][-1] == "sliding"
    assert doc["samples"]["lambda"][-1] == pytest.approx(-2 ** -0.5, abs=1e-10)


def test_smooth_engine_csv(tmp_path):
    out = tmp_path / "s.csv"
    code = run(["simulate", "--scenario", "example2a", "--engine", "smooth", "--eps", "1e-3", "--step", "1e-4",
                "--out", str(out)])
    assert code == 0
    modes = {r["mode"] for r in rows(out)}
    assert modes <= {"free+", "free-", "transit"}


def test_analyze_layer(capsys):
    assert run(["analyze-layer", "--scenario", "example2a", "--x", "0,0"]) == 0
    rep = json.loads(capsys.readouterr().out)
    lams = [r["lam_star"] for r in rep["roots"]]
    assert lams == pytest.approx([-2 ** -0.5, 2 ** -0.5], abs=1e-12)
    assert rep["roots"][0]["stability"] == "attracting"
    assert rep["passage"]["from_minus"]["kind"] == "sliding"


def test_config_file_run(tmp_path, capsys):
    p = tmp_path / "demo.cfg"
    p.write_text(CONFIG)
    assert run(["decompose", "--config", str(p)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("fplus = [")
    assert out[2] == "g = [2.0, 0.0]"


def test_config_round_trip():
    for sc in catalog():
        text = serialize_config(sc.system, sc.x0, sc.t_span)
        s2, x0, span = parse_config_text(text)
        assert (s2.n, s2.h, s2.form, s2.name) == (sc.system.n, sc.system.h, sc.system.form, sc.system.name)
        assert x0 == sc.x0 and span == sc.t_span
        assert serialize_config(s2, x0, span) == text


@pytest.mark.parametrize("text,line,col,frag", [
    ("n = 2\nh = x1\ng = [0, 0]\nx0 = [0, 0]\nt_span = [0, 1]\n", 3, 1, "fplus"),
    ("n = 2\nh = x1 + t\nf = [1, 1]\nx0 = [0, 0]\nt_span = [0, 1]\n", 2, 5, "must not depend on t"),
    ("n = 2\nh = x1\nf = [1, x1 + foo]\nx0 = [0, 0]\nt_span = [0, 1]\n", 3, 14, "foo"),
    ("n = 2\nh = x1\nf = [1, 1]\nx0 = [0, zero]\nt_span = [0, 1]\n", 4, 10, "not a number"),
    ("n = 2\nh = x1\nf = [1, 1]\nx0 = [0, 0]\nt_span = [1, 0]\n", 5, 10, "t_span"),
    ("n = 2\nbogus = 1\n", 2, 1, "unknown key"),
])
def test_config_errors(text, line, col, frag):
    with pytest.raises(ConfigError) as info:
        parse_config_text(text, "c.cfg")
    e = info.value
    assert (e.line, e.col) == (line, col)
    assert frag in str(e) and str(e).startswith(f"c.cfg:{line}:{col}:")


def test_exit_codes(tmp_path, capsys):
    assert run([]) == 1
    assert run(["simulate"]) == 1
    assert run(["simulate", "--scenario", "nope"]) == 1
    assert run(["simulate", "--scenario", "example1a", "--engine", "smooth"]) == 1
    assert run(["sweep", "--scenario", "example2a", "--engine", "stochastic", "--eps", "1e-3", "--step", "1e-4",
                "--kappas", ""]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("n = 1\nh = x1\nf = [x1^2 + 0*lam]\nx0 = [1]\nt_span = [0, 5]\n")
    assert run(["simulate", "--config", str(bad), "--engine", "smooth", "--eps", "0.1", "--step", "1e-3"]) == 2
    blow = tmp_path / "blow.cfg"
    blow.write_text("n = 1\nh = x1 - 100\nf = [log(x1)]\nx0 = [0]\nt_span = [0, 1]\n")
    assert run(["simulate", "--config", str(blow)]) == 2
    err = capsys.readouterr().err
    assert "switchlayer: error:" in err and "numerical failure" in err


def test_washout_sweep(tmp_path):
    out = tmp_path / "w.csv"
    code = run(["sweep", "--scenario", "example2a", "--engine", "stochastic", "--eps", "1e-3", "--step", "1e-4",
                "--t-end", "1.5", "--kappas", "0,1", "--runs", "10", "--seed", "3", "--out", str(out)])
    assert code == 0
    data = rows(out)
    assert [float(r["stick_fraction"]) for r in data] == [1.0, 0.0]
    assert float(data[0]["r_eps"]) == pytest.approx(0.01203, abs=1e-5)


def test_step_sweep(tmp_path):
    out = tmp_path / "s.csv"
    code = run(["sweep", "--scenario", "example2b", "--engine", "smooth", "--eps", "1e-2",
                "--steps", "1e-3,1e-4", "--out", str(out)])
    assert code == 0
    data = rows(out)
    assert len(data) == 2 and float(data[1]["sup_diff"]) < 1e-2
    assert data[0]["transits"] == "1"


def test_list_scenarios(capsys):
    assert run(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    for sc in catalog():
        assert sc.name in out


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "switchlayer", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == "0.1.0"
