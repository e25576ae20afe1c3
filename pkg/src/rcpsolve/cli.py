"""Problem files, the ``rcpsolve`` command and the built-in benchmark corpus.

Problem files are line oriented; ``#`` starts a comment::

    dim 2
    point p1
    dist a1 p1 p2
    sketch p1 0 0
    target a1 3.0            # or: measure, scale:<factor>; "target *" sets the default
    rcp intercc p3 p2 a2 p1' k
    remove a9
    drive k
    ref p1' 0.5 -1.2         # optional, placed from the sketch otherwise
    config alpha 0.1
"""

from __future__ import annotations

import argparse
import io
import json
import os
import statistics
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import cplan, homotopy, tracker
from .model import Constraint, DegenerateSketch, ModelError, Pdsp, check_structural, measure_params, residual_vector

KIND_NAMES = {k.lower(): k for k in cplan.KINDS + (cplan.INTER_SSS,)}

CONFIG_KEYS = {
    "alpha": float, "delta_max": float, "delta_min": float, "newton_tol": float,
    "max_newton": int, "max_iterations": int, "loop_tol": float, "dedup_tol": float,
    "c": float, "quadratic": str,
}
TRACKER_KEYS = ("alpha", "delta_max", "delta_min", "newton_tol", "max_newton", "max_iterations",
                "loop_tol", "dedup_tol")

BUILTINS = ("triangle", "k33", "dodecagon", "octahedron", "disulfide", "icosahedron")
DEFAULT_SUITE = ("dodecagon", "icosahedron", "octahedron", "disulfide", "k33")
THREADS_ENV = "RCPSOLVE_THREADS"

EXIT_OK = 0
EXIT_ASSUMPTIONS = 1
EXIT_USAGE = 2
EXIT_CODES = {
    tracker.StuckStep: 3,
    tracker.SingularTangent: 4,
    tracker.IterationBudgetExceeded: 5,
    tracker.RefinementDiverged: 6,
    tracker.ZeroImage: 7,
    tracker.CannotEscapeBoundary: 8,
}
EXIT_PLAN = 9


class ParseError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


@dataclass
class ProblemFile:
    dim: int = 0
    points: List[str] = field(default_factory=list)
    constraints: List[Tuple[str, str, str]] = field(default_factory=list)
    sketch: Dict[str, Tuple[float, ...]] = field(default_factory=dict)
    targets: Dict[str, object] = field(default_factory=dict)  # float, "measure" or "scale:<f>"
    default_target: Optional[str] = None
    rcp: List[cplan.Instruction] = field(default_factory=list)
    removed: List[str] = field(default_factory=list)
    driving: List[str] = field(default_factory=list)
    refs: Dict[str, Tuple[float, ...]] = field(default_factory=dict)
    config: Dict[str, object] = field(default_factory=dict)

    def pdsp(self) -> Pdsp:
        return Pdsp(self.dim, list(self.points), [Constraint(a, p, q) for a, p, q in self.constraints])


def _float(tok: str, line: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise ParseError(line, f"expected a number, got {tok!r}") from None


def _target_spec(tok: str, line: int):
    if tok == "measure":
        return tok
    if tok.startswith("scale:"):
        _float(tok[6:], line)
        return tok
    return _float(tok, line)


def parse_problem(text: str) -> ProblemFile:
    """Parse a problem file; raises :class:`ParseError` with the line number."""
    pf = ProblemFile()
    seen_dim = False
    for no, raw in enumerate(text.splitlines(), 1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        key, args = toks[0], toks[1:]

        def arity(n):
            if len(args) != n:
                raise ParseError(no, f"{key} takes {n} arguments, got {len(args)}")

        if key == "dim":
            arity(1)
            if args[0] not in ("2", "3"):
                raise ParseError(no, "dimension must be 2 or 3")
            pf.dim = int(args[0])
            seen_dim = True
        elif key == "point":
            arity(1)
            if args[0] in pf.points:
                raise ParseError(no, f"duplicate point {args[0]}")
            pf.points.append(args[0])
        elif key == "dist":
            arity(3)
            if any(args[0] == c[0] for c in pf.constraints):
                raise ParseError(no, f"duplicate parameter {args[0]}")
            pf.constraints.append((args[0], args[1], args[2]))
        elif key == "sketch":
            if not seen_dim:
                raise ParseError(no, "sketch before dim")
            arity(1 + pf.dim)
            pf.sketch[args[0]] = tuple(_float(a, no) for a in args[1:])
        elif key == "target":
            arity(2)
            spec = _target_spec(args[1], no)
            if args[0] == "*":
                if isinstance(spec, float):
                    raise ParseError(no, "the default target must be measure or scale:<f>")
                pf.default_target = spec
            else:
                pf.targets[args[0]] = spec
        elif key == "rcp":
            if len(args) < 2 or args[0].lower() not in KIND_NAMES:
                raise ParseError(no, f"unknown instruction {args[0] if args else ''!r}")
            try:
                pf.rcp.append(cplan.Instruction(KIND_NAMES[args[0].lower()], args[1], tuple(args[2:])))
            except ValueError as err:
                raise ParseError(no, str(err)) from None
        elif key == "remove":
            arity(1)
            pf.removed.append(args[0])
        elif key == "drive":
            arity(1)
            pf.driving.append(args[0])
        elif key == "ref":
            if not seen_dim:
                raise ParseError(no, "ref before dim")
            arity(1 + pf.dim)
            pf.refs[args[0]] = tuple(_float(a, no) for a in args[1:])
        elif key == "config":
            arity(2)
            if args[0] not in CONFIG_KEYS:
                raise ParseError(no, f"unknown config key {args[0]!r}")
            try:
                pf.config[args[0]] = CONFIG_KEYS[args[0]](args[1])
            except ValueError:
                raise ParseError(no, f"bad value for {args[0]}: {args[1]!r}") from None
        else:
            raise ParseError(no, f"unknown key {key!r}")
    if not seen_dim:
        raise ParseError(0, "missing dim")
    return pf


def _num(x: float) -> str:
    r = repr(float(x))
    return r[:-2] if r.endswith(".0") else r


def serialize_problem(pf: ProblemFile) -> str:
    out = [f"dim {pf.dim}"]
    out += [f"point {p}" for p in pf.points]
    out += [f"dist {a} {p} {q}" for a, p, q in pf.constraints]
    out += [f"sketch {p} " + " ".join(_num(v) for v in xs) for p, xs in pf.sketch.items()]
    if pf.default_target is not None:
        out.append(f"target * {pf.default_target}")
    out += [f"target {a} {_num(v) if isinstance(v, float) else v}" for a, v in pf.targets.items()]
    inv = {v: k for k, v in KIND_NAMES.items()}
    out += [f"rcp {inv[i.kind]} {i.out} " + " ".join(i.args) for i in pf.rcp]
    out += [f"remove {a}" for a in pf.removed]
    out += [f"drive {k}" for k in pf.driving]
    out += [f"ref {r} " + " ".join(_num(v) for v in xs) for r, xs in pf.refs.items()]
    out += [f"config {k} {v!r}" if isinstance(v, float) else f"config {k} {v}" for k, v in pf.config.items()]
    return "\n".join(out) + "\n"


# -- turning a file into solver inputs ---------------------------------------


@dataclass
class Problem:
    name: str
    pdsp: Pdsp
    sketch: Dict[str, Tuple[float, ...]]
    targets: Dict[str, float]
    interp: homotopy.Interpolation
    file: ProblemFile

    def rcp(self) -> cplan.Rcp:
        """Fresh plan: the file's own if present, else a greedy one."""
        if not self.file.rcp:
            return cplan.derive_rcp_greedy(self.pdsp, self.sketch)
        from .model import fix_reference
        ref = fix_reference(self.pdsp, self.sketch)
        removed = [self.pdsp.constraint(a) for a in self.file.removed]
        rcp = cplan.Rcp(self.pdsp, ref, self.file.rcp, removed, self.file.driving, self.file.refs)
        cplan.place_references(rcp, self.sketch)
        cplan.validate_rcp(rcp)
        return rcp

    def tracker_config(self, **overrides) -> tracker.TrackerConfig:
        kw = {k: v for k, v in self.file.config.items() if k in TRACKER_KEYS}
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return tracker.TrackerConfig(**kw)


def build_problem(pf: ProblemFile, name: str = "problem") -> Problem:
    pdsp = pf.pdsp()
    missing = [p for p in pdsp.points if p not in pf.sketch]
    if missing:
        raise ModelError(f"no sketch coordinates for {missing}")
    measured = measure_params(pdsp, pf.sketch)
    targets = {}
    for a in pdsp.params:
        spec = pf.targets.get(a, pf.default_target)
        if spec is None:
            raise ModelError(f"no target for {a}")
        if spec == "measure":
            targets[a] = measured[a]
        elif isinstance(spec, str):
            targets[a] = float(spec[6:]) * measured[a]
        else:
            targets[a] = float(spec)
    interp = homotopy.make_interpolation(pdsp.params, measured, targets, c=float(pf.config.get("c", 2.0)),
                                         quadratic=pf.config.get("quadratic"))
    return Problem(name, pdsp, dict(pf.sketch), targets, interp, pf)


def builtin_text(name: str) -> str:
    return resources.files("rcpsolve").joinpath("data", f"{name}.pdsp").read_text()


def load_problem(spec: str) -> Problem:
    """A path to a problem file or the name of a built-in problem."""
    path = Path(spec)
    if path.exists():
        return build_problem(parse_problem(path.read_text()), path.stem)
    if spec in BUILTINS:
        return build_problem(parse_problem(builtin_text(spec)), spec)
    raise FileNotFoundError(f"no such problem file or built-in problem: {spec}")


# -- reports ---------------------------------------------------------------


def solution_residuals(problem: Problem, result: tracker.SolveResult) -> List[float]:
    return [float(np.max(np.abs(residual_vector(problem.pdsp, f, problem.targets)), initial=0.0))
            for f in result.solutions]


def format_report(problem: Problem, result: tracker.SolveResult, mode: str) -> str:
    res = solution_residuals(problem, result)
    lines = [
        f"problem        {problem.name} ({mode})",
        f"solutions      {len(result.solutions)} (t=1 crossings {result.raw_solutions})",
        f"loop closed    {result.loop_closed}",
        f"iterations     {result.iterations} accepted / {result.attempts} attempted",
        f"time           {result.elapsed:.3f} s ({1e3 * result.elapsed / max(result.iterations, 1):.3f} ms/it)",
        f"smallest step  {result.min_delta:.3g}",
    ]
    if mode == "rcp":
        lines += [f"plan changes   {result.rcp_changes}",
                  f"driving params avg {result.avg_d:.2f}, max {result.max_d}"]
    if res:
        lines.append(f"max residual   {max(res):.3g}")
    return "\n".join(lines)


def write_solutions(path: str, problem: Problem, result: tracker.SolveResult) -> None:
    with open(path, "w") as fh:
        for k, (fig, r) in enumerate(zip(result.solutions, solution_residuals(problem, result)), 1):
            fh.write(f"# solution {k} residual {r:.3e}\n")
            for p in problem.pdsp.points:
                fh.write(f"{p} " + " ".join(repr(float(v)) for v in fig[p]) + "\n")


def run_problem(problem: Problem, baseline: bool = False, trace=None, **overrides) -> tracker.SolveResult:
    cfg = problem.tracker_config(**overrides)
    if baseline:
        return tracker.track_full_space(problem.pdsp, problem.sketch, problem.interp, cfg, trace)
    return tracker.solve(problem.pdsp, problem.rcp(), problem.sketch, problem.interp, cfg, trace)


def cmd_run(ns) -> int:
    try:
        problem = load_problem(ns.problem)
    except (ParseError, ModelError, FileNotFoundError, homotopy.NotPositiveOnUnit) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    if ns.check_assumptions:
        try:
            rcp = problem.rcp()
        except cplan.PlanError as err:
            print(f"plan: {err}")
            rcp = None
        rep = homotopy.check_assumptions(problem.pdsp, problem.sketch, problem.interp, rcp,
                                         ns.alpha if ns.alpha is not None else problem.tracker_config().alpha)
        print("\n".join(rep.lines()))
        return EXIT_OK if rep.ok else EXIT_ASSUMPTIONS
    trace = open(ns.trace, "w", newline="") if ns.trace else None
    mode = "full" if ns.baseline else "rcp"
    try:
        result = run_problem(problem, ns.baseline, trace, alpha=ns.alpha, delta_max=ns.delta_max,
                             delta_min=ns.delta_min)
    except tracker.TrackingError as err:
        print(f"tracking failed: {type(err).__name__}: {err}", file=sys.stderr)
        if err.partial is not None:
            print(format_report(problem, err.partial, mode))
        return EXIT_CODES.get(type(err), EXIT_PLAN)
    except (cplan.PlanError, ModelError, DegenerateSketch) as err:
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_PLAN
    finally:
        if trace:
            trace.close()
    print(format_report(problem, result, mode))
    if ns.solutions:
        write_solutions(ns.solutions, problem, result)
    return EXIT_OK


# -- benchmark ---------------------------------------------------------------


@dataclass
class BenchRow:
    problem: str
    mode: str
    m: int
    solutions: int | None
    time: float
    iterations: int
    changes: int
    avg_d: float
    max_d: int
    closed: bool
    error: str = ""

    @property
    def time_per_iteration(self) -> float:
        return self.time / self.iterations if self.iterations else float("nan")


def bench_one(name: str, mode: str, runs: int) -> BenchRow:
    problem = load_problem(name)
    times, result, error = [], None, ""
    for _ in range(runs):
        try:
            result = run_problem(problem, baseline=(mode == "full"))
        except (tracker.TrackingError, cplan.PlanError) as err:
            error = f"{type(err).__name__}: {err}"
            result = getattr(err, "partial", None)
            break
        times.append(result.elapsed)
    m = problem.pdsp.m
    if result is None:
        return BenchRow(name, mode, m, None, float("nan"), 0, 0, 0.0, 0, False, error)
    return BenchRow(name, mode, m, None if error else len(result.solutions),
                    statistics.median(times) if times else result.elapsed, result.iterations,
                    result.rcp_changes, result.avg_d, result.max_d, result.loop_closed, error)


def _bench_job(args):
    return bench_one(*args)


def bench(names: Sequence[str], runs: int = 5, modes: Sequence[str] = ("rcp", "full"),
          threads: int | None = None) -> List[BenchRow]:
    jobs = [(n, m, runs) for n in names for m in modes]
    threads = threads or int(os.environ.get(THREADS_ENV, "1"))
    if threads > 1:
        with ProcessPoolExecutor(threads) as ex:
            return list(ex.map(_bench_job, jobs))
    return [_bench_job(j) for j in jobs]


def format_bench(rows: Sequence[BenchRow]) -> str:
    head = f"{'problem':<12} {'mode':<5} {'m':>3} {'sols':>5} {'time s':>9} {'its':>7} {'ms/it':>7} " \
           f"{'changes':>7} {'avg d':>6} {'max d':>5} closed"
    out = [head, "-" * len(head)]
    for r in rows:
        sols = "-" if r.solutions is None else str(r.solutions)
        out.append(f"{r.problem:<12} {r.mode:<5} {r.m:>3} {sols:>5} {r.time:>9.3f} {r.iterations:>7} "
                   f"{1e3 * r.time_per_iteration:>7.3f} {r.changes:>7} {r.avg_d:>6.2f} {r.max_d:>5} {r.closed}"
                   + (f"  [{r.error}]" if r.error else ""))
    by = {(r.problem, r.mode): r for r in rows}
    for n in dict.fromkeys(r.problem for r in rows):
        a, b = by.get((n, "rcp")), by.get((n, "full"))
        if a and b and a.time > 0 and not (a.error or b.error):
            out.append(f"speed ratio {n}: {b.time / a.time:.2f}")
    return "\n".join(out)


def cmd_bench(ns) -> int:
    names = ns.problems or list(DEFAULT_SUITE)
    modes = ("rcp",) if ns.rcp_only else ("rcp", "full")
    rows = bench(names, ns.runs, modes)
    if ns.json:
        print(json.dumps([r.__dict__ for r in rows], indent=1))
    else:
        print(format_bench(rows))
    return EXIT_OK


def cmd_show(ns) -> int:
    print(builtin_text(ns.name), end="")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="rcpsolve", description="Real solutions of distance constraint systems "
                                 "by homotopy tracking over reparameterized construction plans.")
    sub = ap.add_subparsers(dest="cmd", required=True)
    r = sub.add_parser("run", help="solve one problem")
    r.add_argument("problem", help="problem file or built-in name: " + ", ".join(BUILTINS))
    r.add_argument("--baseline", action="store_true", help="track in full coordinate space")
    r.add_argument("--alpha", type=float)
    r.add_argument("--delta-max", type=float)
    r.add_argument("--delta-min", type=float)
    r.add_argument("--trace", metavar="CSV")
    r.add_argument("--solutions", metavar="TXT")
    r.add_argument("--check-assumptions", action="store_true", help="report the standing hypotheses and exit")
    r.set_defaults(func=cmd_run)
    b = sub.add_parser("bench", help=f"benchmark table (parallel jobs from ${THREADS_ENV})")
    b.add_argument("problems", nargs="*")
    b.add_argument("--runs", type=int, default=5)
    b.add_argument("--rcp-only", action="store_true")
    b.add_argument("--json", action="store_true")
    b.set_defaults(func=cmd_bench)
    s = sub.add_parser("show", help="print a built-in problem file")
    s.add_argument("name", choices=BUILTINS)
    s.set_defaults(func=cmd_show)
    ns = ap.parse_args(argv)
    return ns.func(ns)


if __name__ == "__main__":
    sys.exit(main())
