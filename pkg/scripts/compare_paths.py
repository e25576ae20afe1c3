"""Track one problem in both modes and compare what each run found.

    python scripts/compare_paths.py icosahedron

Reports solution counts, raw t = 1 crossings (a path traversed twice shows
twice as many crossings as distinct solutions), how many solutions the two
modes share, and the order in which shared solutions were met.
"""

import argparse

from rcpsolve import cli
from rcpsolve.model import max_point_distance


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("problem")
    ap.add_argument("--tol", type=float, default=1e-5)
    ns = ap.parse_args()
    pb = cli.load_problem(ns.problem)
    red = cli.run_problem(pb)
    full = cli.run_problem(pb, baseline=True)
    for label, r in (("rcp", red), ("full", full)):
        print(f"{label:<5} solutions {len(r.solutions):>4}  crossings {r.raw_solutions:>4}  "
              f"iterations {r.iterations:>6}  changes {r.rcp_changes:>5}  {r.elapsed:.1f} s")
    order = []
    for f in red.solutions:
        hits = [j for j, g in enumerate(full.solutions) if max_point_distance(f, g) < ns.tol]
        order.append(hits[0] if hits else None)
    shared = sum(o is not None for o in order)
    print(f"shared {shared}; rcp order as full indices: {order}")


if __name__ == "__main__":
    main()
