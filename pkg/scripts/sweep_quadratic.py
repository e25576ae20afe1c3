"""Solutions on the sketch's path as the quadratic component moves.

    python scripts/sweep_quadratic.py icosahedron [--c 2.0] [--budget N]

The path through the sketch depends on which length carries the quadratic
term; this prints, for each choice, the solution count of the full-space
tracker and whether the loop closed within the budget.
"""

import argparse

from rcpsolve import cli, homotopy, tracker
from rcpsolve.model import measure_params


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("problem")
    ap.add_argument("--c", type=float, default=2.0)
    ap.add_argument("--budget", type=int, default=40000)
    ns = ap.parse_args()
    pb = cli.load_problem(ns.problem)
    sk_vals = measure_params(pb.pdsp, pb.sketch)
    for a in pb.pdsp.params:
        it = homotopy.make_interpolation(pb.pdsp.params, sk_vals, pb.targets, c=ns.c, quadratic=a)
        cfg = tracker.TrackerConfig(max_iterations=ns.budget)
        try:
            r = tracker.track_full_space(pb.pdsp, pb.sketch, it, cfg)
            closed = r.loop_closed
        except tracker.TrackingError as err:
            r, closed = err.partial, False
        print(f"{a:<5} solutions {len(r.solutions):>4}  iterations {r.iterations:>6}  closed {closed}", flush=True)


if __name__ == "__main__":
    main()
