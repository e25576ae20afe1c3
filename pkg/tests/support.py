"""Shared fixtures data for the test modules."""

import functools
import random

from rcpsolve import cli, cplan
from rcpsolve.model import max_point_distance


@functools.lru_cache(maxsize=None)
def problem(name):
    return cli.load_problem(name)


def fresh_rcp(name):
    return problem(name).rcp()


def sketch(name):
    return problem(name).sketch


def random_state(rng: random.Random, name, spread=0.05):
    """Perturbed driving values and a time near the sketch, with the plan."""
    pb = problem(name)
    rcp = pb.rcp()
    aplus, _ = cplan.phi_prime(pb.sketch, 0.0, rcp)
    t = rng.uniform(0.0, 0.3)
    vals = pb.interp.values(t)
    vals.update({k: v * (1 + rng.uniform(-spread, spread)) for k, v in zip(rcp.driving, aplus)})
    return pb, rcp, vals, t


def same_figure(f, g, tol):
    return max_point_distance(f, g) <= tol
