import io
import math

import numpy as np
import pytest

from rcpsolve import cplan, tracker
from rcpsolve.homotopy import ReducedHomotopy
from rcpsolve.tracker import TrackerConfig

from support import problem


def circle(y):
    # unit circle in (x, t) centered at t = 0.5
    return np.array([y[0] ** 2 + (y[1] - 0.5) ** 2 - 1.0])


def circle_jac(y):
    return np.array([[2 * y[0], 2 * (y[1] - 0.5)]])


def test_tangent_is_unit_kernel_with_positive_t():
    jac = circle_jac(np.array([1.0, 0.5]))
    tau = tracker.tangent(jac)
    assert np.linalg.norm(tau) == pytest.approx(1.0)
    assert jac @ tau == pytest.approx([0.0])
    assert tau[-1] > 0


def test_tangent_follows_orientation():
    jac = circle_jac(np.array([1.0, 0.5]))
    assert tracker.tangent(jac, np.array([0.0, -1.0]))[-1] < 0


def test_tangent_singular():
    with pytest.raises(tracker.SingularTangent):
        tracker.tangent(np.zeros((1, 2)))


def test_step_stays_on_circle():
    cfg = TrackerConfig()
    y = np.array([1.0, 0.5])
    tau = tracker.tangent(circle_jac(y))
    z, tz = tracker.step(circle, circle_jac, y, tau, 0.1, cfg)
    assert abs(circle(z)[0]) < 1e-10
    assert tau @ (z - (y + 0.1 * tau)) == pytest.approx(0.0, abs=1e-12)
    assert tz @ tau > 0.9


def test_step_rejects_large_turn():
    cfg = TrackerConfig()
    y = np.array([1.0, 0.5])
    tau = tracker.tangent(circle_jac(y))
    # a step of one radian turns the tangent by more than acos(0.9)
    assert tracker.step(circle, circle_jac, y, tau, 1.0, cfg) is None


def test_corrector_budget():
    cfg = TrackerConfig(max_newton=0)
    y = np.array([1.0, 0.5])
    assert tracker.correct(circle, circle_jac, y + 0.05, tracker.tangent(circle_jac(y)), cfg) is None


def test_corrector_rejects_slow_contraction():
    # a triple root: Newton updates shrink by 2/3 only
    calls = []

    def f(y):
        calls.append(1)
        return np.array([y[0] ** 3])

    def jac(y):
        return np.array([[3 * y[0] ** 2, 0.0]])

    tau = np.array([0.0, 1.0])
    assert tracker.correct(f, jac, np.array([1.0, 0.0]), tau, TrackerConfig()) is None
    assert len(calls) == 2
    calls.clear()
    tracker.correct(f, jac, np.array([1.0, 0.0]), tau, TrackerConfig(max_contraction=1.0))
    assert len(calls) > 10


def test_polish_keeps_t_and_reduces_residual():
    y = np.array([math.sqrt(0.75) + 1e-6, 1.0])
    z = tracker.polish(circle, circle_jac, y)
    assert z[-1] == 1.0
    assert abs(circle(z)[0]) < 1e-15 < abs(circle(y)[0])


def test_crossing_rule():
    assert tracker.crosses(0.9, 1.1, 1.0) and tracker.crosses(1.1, 0.9, 1.0)
    assert tracker.crosses(0.9, 1.0, 1.0) and not tracker.crosses(1.0, 1.1, 1.0)
    assert not tracker.crosses(0.2, 0.8, 1.0)


def test_detect_crossing_refines_on_target():
    cfg = TrackerConfig()
    a = np.array([math.sqrt(1 - 0.3 ** 2), 0.8])
    b = np.array([math.sqrt(1 - 0.6 ** 2), 1.1])
    w = tracker.detect_crossing(circle, circle_jac, a, b, 1.0, cfg)
    assert w[-1] == 1.0 and w[0] == pytest.approx(math.sqrt(0.75), abs=1e-10)
    assert tracker.detect_crossing(circle, circle_jac, a, a, 1.0, cfg) is None


def test_detect_crossing_failure():
    cfg = TrackerConfig()

    def f(y):  # no root at t = 1
        return np.array([y[0] ** 2 + 1.0 + 0 * y[1]])

    with pytest.raises(tracker.RefinementDiverged):
        tracker.detect_crossing(f, lambda y: np.array([[2 * y[0], 0.0]]), np.array([0.3, 0.9]),
                                np.array([0.4, 1.1]), 1.0, cfg)


def test_dedup_and_orbits():
    pb = problem("triangle")
    rcp = pb.rcp()
    f = dict(pb.sketch)
    g = tracker.mirror(f, rcp.reference)
    assert len(tracker.dedup([f, dict(f), g])) == 2
    assert len(tracker.orbit_distinct([f, g], rcp.reference)) == 1
    # the reflection fixes the reference points and is an involution
    assert g["p1"] == pytest.approx(f["p1"]) and g["p2"] == pytest.approx(f["p2"])
    back = tracker.mirror(g, rcp.reference)
    assert all(back[p] == pytest.approx(f[p]) for p in f)


def _solve(name, **kw):
    pb = problem(name)
    return tracker.solve(pb.pdsp, pb.rcp(), pb.sketch, pb.interp, TrackerConfig(**kw))


def _full(name, **kw):
    pb = problem(name)
    return tracker.track_full_space(pb.pdsp, pb.sketch, pb.interp, TrackerConfig(**kw))


@pytest.mark.parametrize("name, count", [("triangle", 2), ("k33", 4)])
def test_solve_and_full_space_agree(name, count):
    pb = problem(name)
    a, b = _solve(name), _full(name)
    assert a.loop_closed and b.loop_closed
    assert len(a.solutions) == len(b.solutions) == count
    for f in a.solutions:
        assert min(max(math.dist(f[p], g[p]) for p in f) for g in b.solutions) < 1e-6
        res = [abs(math.dist(f[c.p], f[c.q]) - pb.targets[c.param]) for c in pb.pdsp.constraints]
        assert max(res) < 1e-8


def test_triangle_solutions_are_mirror_images():
    pb = problem("triangle")
    res = _solve("triangle")
    assert len(tracker.orbit_distinct(res.solutions, res.rcp.reference)) == 1


def test_change_events_satisfy_invariants():
    res = _solve("k33")
    assert res.rcp_changes > 0
    for ev in res.events:
        assert ev.gamma_after > 0.1 and not ev.sc1_after and ev.figure_error < 1e-9
    cplan.validate_rcp(res.rcp)


def test_trace_rows():
    pb = problem("k33")
    buf = io.StringIO()
    res = tracker.solve(pb.pdsp, pb.rcp(), pb.sketch, pb.interp, trace=buf)
    rows = buf.getvalue().splitlines()
    assert rows[0] == "iter,t,delta,gamma,d"
    its = [int(r.split(",")[0]) for r in rows[1:]]
    assert its == list(range(1, res.iterations + 1))


def test_iteration_budget():
    with pytest.raises(tracker.IterationBudgetExceeded) as info:
        _solve("k33", max_iterations=5)
    assert info.value.partial.attempts == 5


def test_stuck_step():
    with pytest.raises(tracker.StuckStep) as info:
        _full("triangle", max_newton=0)
    assert info.value.partial is not None


def test_circle_loop_closes_with_two_crossings():
    cfg = TrackerConfig(delta_max=0.2)
    y = np.array([1.0, 0.5])
    tau = tracker.tangent(circle_jac(y))
    delta, hits, arc = cfg.delta_max, [], 0.0
    for _ in range(500):
        out = tracker.step(circle, circle_jac, y, tau, delta, cfg)
        if out is None:
            delta /= 2.0
            continue
        z, tz = out
        w = tracker.detect_crossing(circle, circle_jac, y, z, 1.0, cfg) if tracker.crosses(y[-1], z[-1], 1.0) else None
        if w is not None:
            hits.append(w[0])
        arc += np.linalg.norm(z - y)
        y, tau = z, tz
        delta = min(2.0 * delta, cfg.delta_max)
        if arc > 3.0 and np.linalg.norm(y - [1.0, 0.5]) < delta:
            break
    assert arc == pytest.approx(2 * math.pi, abs=0.25)
    assert sorted(hits) == pytest.approx([-math.sqrt(0.75), math.sqrt(0.75)], abs=1e-10)



def test_orientation_transfer_secant_and_probe_agree():
    pb = problem("k33")
    rcp = pb.rcp()
    aplus, _ = cplan.phi_prime(pb.sketch, 0.0, rcp)
    vals = pb.interp.values(0.0)
    vals.update(zip(rcp.driving, aplus.tolist()))
    hr = ReducedHomotopy(rcp, pb.interp, cplan.identify_branch(rcp, vals, pb.sketch))
    cfg = TrackerConfig()
    y0 = np.append(aplus, 0.0)
    tau0 = tracker.tangent(hr.jacobian(y0))
    y1, tau1 = tracker.step(hr, hr.jacobian, y0, tau0, 0.01, cfg)
    old = ReducedHomotopy(rcp.copy(), pb.interp, hr.branch)
    fig = hr.figure(y1)
    _, actions = cplan.change_rcp(rcp, fig, pb.interp.values(float(y1[-1])), 0.45)
    assert actions
    secant = tracker.transfer_orientation(old, rcp, y1, tau1, y_prev=y0)
    probe = tracker.transfer_orientation(old, rcp, y1, tau1)
    assert secant @ probe > 0.99
    # the figure keeps moving the same way after the change
    aplus_new, _ = cplan.phi_prime(fig, float(y1[-1]), rcp)
    vals = pb.interp.values(float(y1[-1]))
    vals.update(zip(rcp.driving, aplus_new.tolist()))
    new = ReducedHomotopy(rcp, pb.interp, cplan.identify_branch(rcp, vals, fig))
    z = np.append(aplus_new, y1[-1])
    tz = tracker.tangent(new.jacobian(z), secant)
    pts = pb.pdsp.points
    flat = lambda f: np.array([c for p in pts for c in f[p]])
    h = 1e-6
    v_old = flat(old.figure(y1 + h * tau1)) - flat(old.figure(y1))
    v_new = flat(new.figure(z + h * tz)) - flat(new.figure(z))
    assert v_old @ v_new > 0.9 * np.linalg.norm(v_old) * np.linalg.norm(v_new)
