"""Benchmark table for the built-in corpus in both tracking modes.

    python scripts/run_benchmarks.py [--runs N] [problem ...]

Writes the aligned table to stdout and the rows as JSON next to it when
``--json PATH`` is given.  Parallel jobs follow ``RCPSOLVE_THREADS``.
"""

import argparse
import json

from rcpsolve import cli


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("problems", nargs="*", default=list(cli.DEFAULT_SUITE))
    ap.add_argument("--runs", type=int, default=5)
    ap.add_argument("--json")
    ns = ap.parse_args()
    rows = cli.bench(ns.problems, ns.runs)
    print(cli.format_bench(rows))
    if ns.json:
        with open(ns.json, "w") as fh:
            json.dump([r.__dict__ for r in rows], fh, indent=1)


if __name__ == "__main__":
    main()
