"""Boundary distance before and after shifting the reference of a
near-tangent circle/circle step, on random cases.

    python scripts/shift_property.py [--cases N] [--alpha A]

Prints the smallest distance reached after the shift (it stays above
1/sqrt(2) for tangent inputs) and the worst error of the identity
v'^2 / a^2 = 1/2 + v / (2 a).
"""

import argparse
import math

import numpy as np

from rcpsolve import cplan, geometry as geo


def case(rng, alpha):
    c1 = rng.uniform(-3, 3, 2)
    ang = rng.uniform(0, 2 * math.pi)
    e = np.array([math.cos(ang), math.sin(ang)])
    n = np.array([-e[1], e[0]])
    along = rng.uniform(0.2, 3.0) * rng.choice([-1, 1])
    off = rng.uniform(0.0, alpha)
    a = abs(along) / math.sqrt(1 - off * off)
    p = c1 + along * e + rng.choice([-1, 1]) * off * a * n
    c3 = c1 + rng.uniform(0.3, 4.0) * rng.choice([-1, 1]) * e
    return tuple(p), tuple(c1), a, tuple(c3)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--cases", type=int, default=10000)
    ap.add_argument("--alpha", type=float, default=0.1)
    ap.add_argument("--seed", type=int, default=0)
    ns = ap.parse_args()
    rng = np.random.default_rng(ns.seed)
    before, after, err = [], [], 0.0
    while len(after) < ns.cases:
        p, c1, a, c3 = case(rng, ns.alpha)
        if math.dist(p, c3) < 1e-3:
            continue
        g0 = geo.gamma_cc(p, c1, c3)
        if g0 > ns.alpha:
            continue
        c3n, _ = cplan.shift_reference(p, c1, a, c3, math.dist(p, c3))
        v, vn = geo.point_line_distance(p, c1, c3), geo.point_line_distance(p, c1, c3n)
        err = max(err, abs(vn ** 2 / a ** 2 - 0.5 - v / (2 * a)))
        before.append(g0)
        after.append(geo.gamma_cc(p, c1, c3n))
    print(f"cases {len(after)}  gamma before: max {max(before):.4f}")
    print(f"gamma after: min {min(after):.6f} (1/sqrt(2) = {1 / math.sqrt(2):.6f}), median {np.median(after):.4f}")
    print(f"worst identity error {err:.2e}")


if __name__ == "__main__":
    main()
