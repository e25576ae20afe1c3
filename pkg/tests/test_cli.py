import csv
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from rcpsolve import cli
from rcpsolve.model import check_structural


def test_k33_file():
    pf = cli.parse_problem(cli.builtin_text("k33"))
    assert len(pf.points) == 6 and len(pf.constraints) == 9
    assert len(pf.rcp) == 5 and pf.removed == ["a9"] and pf.driving == ["k"]


def test_dodecagon_file():
    pf = cli.parse_problem(cli.builtin_text("dodecagon"))
    assert len(pf.constraints) == 21 and len(pf.targets) == 21
    assert pf.targets["a1"] == 3.0
    assert check_structural(pf.pdsp()).ok


@pytest.mark.parametrize("text, line", [
    ("dim 2\npoint p1\npoint p2\ndist a1 p1\n", 4),
    ("dim 2\npoint p1\nsketch p1 0\n", 3),
    ("dim 2\nbogus 1\n", 2),
    ("dim 5\n", 1),
    ("dim 2\nconfig speed 3\n", 2),
    ("dim 2\npoint p1\nrcp intercc p2 p1 a1\n", 3),
    ("dim 2\ntarget a1 x\n", 2),
    ("point p1\n", 0),
])
def test_parse_errors_carry_line(text, line):
    with pytest.raises(cli.ParseError) as info:
        cli.parse_problem(text)
    assert info.value.line == line


@pytest.mark.parametrize("name", cli.BUILTINS)
def test_builtins_round_trip(name):
    pf = cli.parse_problem(cli.builtin_text(name))
    assert cli.parse_problem(cli.serialize_problem(pf)) == pf
    assert check_structural(pf.pdsp()).ok



@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=2, max_size=5, unique=True),
       st.floats(0.1, 10), st.sampled_from(["measure", "scale:1.5"]))
def test_round_trip_random_files(coords, alpha, default):
    pf = cli.ProblemFile(dim=2)
    pf.points = [f"p{k}" for k in range(len(coords))]
    pf.constraints = [(f"a{k}", pf.points[k], pf.points[k + 1]) for k in range(len(coords) - 1)]
    pf.sketch = {p: c for p, c in zip(pf.points, coords)}
    pf.targets = {"a0": 1.25}
    pf.default_target = default
    pf.config = {"alpha": alpha, "max_newton": 7}
    assert cli.parse_problem(cli.serialize_problem(pf)) == pf


def test_run_dodecagon(tmp_path, capsys):
    trace = tmp_path / "t.csv"
    sols = tmp_path / "s.txt"
    assert cli.main(["run", "dodecagon", "--trace", str(trace), "--solutions", str(sols)]) == 0
    out = capsys.readouterr().out
    assert "solutions      2" in out and "loop closed    True" in out
    rows = list(csv.reader(trace.open()))
    assert rows[0] == ["iter", "t", "delta", "gamma", "d"]
    its = [int(r[0]) for r in rows[1:]]
    assert all(b > a for a, b in zip(its, its[1:]))
    text = sols.read_text()
    assert text.count("# solution") == 2 and text.count("\np12 ") == 2


def test_trace_gamma_above_alpha_except_change_rows(tmp_path):
    pb = cli.load_problem("k33")
    trace = tmp_path / "t.csv"
    with trace.open("w", newline="") as fh:
        res = cli.run_problem(pb, trace=fh)
    changed = {ev.iteration for ev in res.events}
    for r in list(csv.DictReader(trace.open())):
        if float(r["gamma"]) <= 0.1:
            assert int(r["iter"]) in changed


def test_run_baseline(capsys):
    assert cli.main(["run", "dodecagon", "--baseline"]) == 0
    assert "solutions      2" in capsys.readouterr().out


def test_check_assumptions_exit(capsys):
    assert cli.main(["run", "k33", "--check-assumptions"]) == 0
    out = capsys.readouterr().out
    for h in ("h2", "h3", "h4", "h5", "h6", "plan", "boundary"):
        assert f"{h}: ok" in out
    assert "h1: not checkable" in out


def test_check_assumptions_failure(tmp_path, capsys):
    f = tmp_path / "flex.pdsp"
    f.write_text("dim 2\npoint p1\npoint p2\npoint p3\npoint p4\ndist a1 p1 p2\ndist a2 p2 p3\n"
                 "dist a3 p3 p4\ndist a4 p4 p1\nsketch p1 0 0\nsketch p2 1 0\nsketch p3 1.2 1\n"
                 "sketch p4 0.1 0.9\ntarget * measure\n")
    assert cli.main(["run", str(f), "--check-assumptions"]) == cli.EXIT_ASSUMPTIONS


def test_usage_errors(tmp_path, capsys):
    assert cli.main(["run", "no-such-problem"]) == cli.EXIT_USAGE
    f = tmp_path / "bad.pdsp"
    f.write_text("dim 2\npoint p1\ndist a1 p1\n")
    assert cli.main(["run", str(f)]) == cli.EXIT_USAGE
    assert "line 3" in capsys.readouterr().err


def test_tracker_failure_exit_code(tmp_path, capsys):
    f = tmp_path / "k.pdsp"
    f.write_text(cli.builtin_text("k33") + "config max_iterations 3\n")
    assert cli.main(["run", str(f)]) == cli.EXIT_CODES[cli.tracker.IterationBudgetExceeded]
    assert "IterationBudgetExceeded" in capsys.readouterr().err


def test_bench_small_suite(capsys):
    rows = cli.bench(["triangle", "k33"], runs=1)
    assert [(r.problem, r.mode) for r in rows] == [("triangle", "rcp"), ("triangle", "full"),
                                                   ("k33", "rcp"), ("k33", "full")]
    assert all(r.closed and r.solutions is not None and not r.error for r in rows)
    table = cli.format_bench(rows)
    assert "speed ratio k33" in table
    assert cli.main(["bench", "triangle", "--runs", "1", "--json", "--rcp-only"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data[0]["problem"] == "triangle" and data[0]["solutions"] == 2


def test_bench_reports_failures_and_continues(monkeypatch):
    def boom(*a, **k):
        raise cli.tracker.StuckStep("forced")

    real = cli.run_problem
    monkeypatch.setattr(cli, "run_problem", lambda pb, baseline=False, **k:
                        boom() if pb.name == "triangle" else real(pb, baseline, **k))
    rows = cli.bench(["triangle", "k33"], runs=1, modes=("rcp",))
    assert rows[0].error.startswith("StuckStep") and rows[0].solutions is None
    assert rows[1].solutions == 4


def test_bench_threads(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "2")
    rows = cli.bench(["triangle"], runs=1)
    assert len(rows) == 2 and all(r.solutions == 2 for r in rows)


def test_show(capsys):
    assert cli.main(["show", "triangle"]) == 0
    assert capsys.readouterr().out == cli.builtin_text("triangle")
