import math
import random

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from rcpsolve import cplan
from rcpsolve import geometry as geo
from rcpsolve.cplan import Instruction
from rcpsolve.model import max_point_distance, measure_params

from support import fresh_rcp, problem, sketch


def test_k33_plan_is_valid():
    rcp = fresh_rcp("k33")
    cplan.validate_rcp(rcp)
    assert rcp.d == 1 and rcp.driving == ["k"]
    assert [c.param for c in rcp.removed] == ["a9"]
    assert rcp.driving_index() == {"k": 1}
    assert rcp.added_constraints() == [("k", "p3", "p1'")]


def test_sss_is_decomposed():
    ss, cs = cplan.decompose_sss(Instruction(cplan.INTER_SSS, "p4", ("p1", "a", "p2", "b", "p3", "c")))
    assert ss.kind == cplan.INTER_SS and ss.out == "p4.circle"
    assert cs.kind == cplan.INTER_CS and cs.args == ("p4.circle", "p3", "c")


def test_instruction_arity():
    with pytest.raises(ValueError):
        Instruction(cplan.INTER_CC, "p3", ("p1", "a1"))
    with pytest.raises(ValueError):
        Instruction("InterXX", "p3", ())


def test_equivalent_ignores_support_order():
    i1 = Instruction(cplan.INTER_CC, "p3", ("p1", "a1", "p2", "a2"))
    assert i1.equivalent(i1.flipped()) and not i1.equivalent(i1.with_moving("r", "k"))


def _sketch_values(name, rcp):
    pb = problem(name)
    vals = measure_params(pb.pdsp, pb.sketch)
    vals.update(zip(rcp.driving, cplan.phi_prime(pb.sketch, 0.0, rcp)[0]))
    return vals


@pytest.mark.parametrize("name", ["k33", "dodecagon", "octahedron", "disulfide", "icosahedron"])
def test_sketch_is_reconstructed(name):
    rcp = fresh_rcp(name)
    cplan.validate_rcp(rcp)
    vals = _sketch_values(name, rcp)
    br = cplan.identify_branch(rcp, vals, sketch(name))
    fig = cplan.evaluate(rcp, vals, br)
    assert max_point_distance(fig, sketch(name)) < 1e-9


def test_swap_and_restore_round_trip():
    rcp = fresh_rcp("k33")
    sk = sketch("k33")
    old = rcp.instructions[3]
    assert old.out == "p5"
    ref_id, k = rcp.fresh_ids()
    swap_to = old.with_moving(ref_id, k)
    cplan.swap_instruction(rcp, 3, swap_to, sk["p4"])
    cplan.validate_rcp(rcp)
    assert rcp.d == 2 and rcp.table[3] == old and "a4" in [c.param for c in rcp.removed]
    cplan.swap_instruction(rcp, 3, old)
    cplan.validate_rcp(rcp)
    assert rcp.d == 1 and rcp.table[3] is None and rcp.instructions[3] == old


def test_first_instruction_is_never_swapped():
    rcp = fresh_rcp("k33")
    with pytest.raises(cplan.InvariantViolation):
        cplan.swap_instruction(rcp, 0, rcp.instructions[0])


def test_condition_i_violation():
    rcp = fresh_rcp("k33")
    # the driving parameter may not be the kept radius
    rcp.instructions[1] = Instruction(cplan.INTER_CC, "p3", ("p1'", "k", "p2", "a2"))
    with pytest.raises(cplan.InvariantViolation, match=r"condition \(i\)"):
        cplan.validate_rcp(rcp)


def test_condition_ii_violation():
    rcp = fresh_rcp("k33")
    # the reference point p1' reused by a later instruction
    rcp.instructions[2] = Instruction(cplan.INTER_CC, "p4", ("p1'", "a7", "p3", "a3"))
    with pytest.raises(cplan.InvariantViolation, match=r"condition \(ii\)"):
        cplan.validate_rcp(rcp)


def test_removed_must_complement_constructed():
    rcp = fresh_rcp("k33")
    rcp.removed = []
    with pytest.raises(cplan.InvariantViolation, match="C minus C_I"):
        cplan.validate_rcp(rcp)


def test_use_before_definition():
    rcp = fresh_rcp("k33")
    rcp.instructions[2], rcp.instructions[3] = rcp.instructions[3], rcp.instructions[2]
    with pytest.raises(cplan.InvariantViolation, match="before it is defined"):
        cplan.validate_rcp(rcp)


def test_fresh_ids_do_not_collide():
    rcp = fresh_rcp("dodecagon")
    taken = set(rcp.driving) | set(rcp.ref_points)
    r, k = rcp.fresh_ids()
    assert r not in taken and k not in taken


def test_gamma_vanishes_on_tangency():
    rcp = fresh_rcp("k33")
    sk = dict(sketch("k33"))
    # put p4 on the line p1 p3
    sk["p4"] = geo.add(sk["p1"], geo.scale(-0.5, geo.sub(sk["p3"], sk["p1"])))
    assert cplan.gamma_instruction(rcp, 2, sk) == pytest.approx(0.0, abs=1e-12)
    assert cplan.gamma_I(rcp, sk) == pytest.approx(0.0, abs=1e-12)


# -- reference shifting --------------------------------------------------

coord = st.floats(-3, 3)


def near_boundary_case(data):
    """Circle/circle construction with the new point close to the line of centers."""
    c1 = (data.draw(coord), data.draw(coord))
    ang = data.draw(st.floats(0, 2 * math.pi))
    e = (math.cos(ang), math.sin(ang))
    along = data.draw(st.floats(0.2, 3.0)) * data.draw(st.sampled_from([-1, 1]))
    off = data.draw(st.floats(0.0, 0.09))
    a = abs(along) / math.sqrt(1 - off * off)  # gamma of the original plan ~ off
    n = (-e[1], e[0])
    p_new = geo.add(c1, geo.add(geo.scale(along, e), geo.scale(off * a * data.draw(st.sampled_from([-1, 1])), n)))
    c3 = geo.add(c1, geo.scale(data.draw(st.floats(0.3, 4.0)) * data.draw(st.sampled_from([-1, 1])), e))
    return p_new, c1, geo.dist(p_new, c1), c3


@given(st.data())
def test_shift_reference_escapes_boundary(data):
    p_new, c1, a, c3 = near_boundary_case(data)
    assume(geo.dist(c3, c1) > 1e-3 and geo.dist(p_new, c3) > 1e-3)
    assume(geo.gamma_cc(p_new, c1, c3) <= 0.1)
    c3_new, a_new = cplan.shift_reference(p_new, c1, a, c3, geo.dist(p_new, c3))
    assert a_new == a and geo.dist(c3_new, p_new) == pytest.approx(a)
    v = geo.point_line_distance(p_new, c1, c3)
    v_new = geo.point_line_distance(p_new, c1, c3_new)
    assert v_new ** 2 / a ** 2 == pytest.approx(0.5 + v / (2 * a), abs=1e-9)
    assert geo.gamma_cc(p_new, c1, c3_new) > 0.1


def test_shift_reference_on_the_line_uses_left_normal():
    c3_new, _ = cplan.shift_reference((1.0, 0.0), (0.0, 0.0), 1.0, (3.0, 0.0), 2.0)
    assert c3_new == pytest.approx((1.0, 1.0))


def test_shift_reference_zero_radius():
    with pytest.raises(cplan.ZeroRadius):
        cplan.shift_reference((1.0, 0.0), (1.0, 0.0), 0.0, (3.0, 0.0), 2.0)


def test_shift_reference_cs_escapes():
    circ = geo.CircleRef((0.0, 0.0, 0.0), 1.0, (0.0, 0.0, 1.0))
    p = (1.0, 0.0, 0.0)
    s = (1.8, 0.02, 0.4)  # nearly tangent sphere
    assert geo.gamma_cs(p, circ, s) < 0.1
    new, m = cplan.shift_reference_cs(p, circ, s, geo.dist(p, s))
    assert m == pytest.approx(1.0) and abs(new[2]) < 1e-12
    assert geo.gamma_cs(p, circ, new) > 0.5


# -- change_rcp ----------------------------------------------------------


def _tangent_k33():
    """K33 sketch with p4 moved close to tangency for instruction 2."""
    sk = dict(sketch("k33"))
    d = geo.sub(sk["p3"], sk["p1"])
    n = geo.perpendicular(d)
    sk["p4"] = geo.add(sk["p1"], geo.add(geo.scale(-0.4, d), geo.scale(0.01, n)))
    return sk


def test_change_rcp_swaps_and_keeps_figure():
    rcp = fresh_rcp("k33")
    sk = _tangent_k33()
    pb = problem("k33")
    avals = measure_params(pb.pdsp, sk)
    assert cplan.gamma_instruction(rcp, 2, sk) < 0.1
    new_vals, actions = cplan.change_rcp(rcp, sk, avals, 0.1)
    cplan.validate_rcp(rcp)
    assert cplan.gamma_I(rcp, sk) > 0.1
    assert not cplan.check_sc1(rcp, avals)
    assert any(a.index == 2 and a.action == "swap" for a in actions)
    vals = dict(avals)
    vals.update(zip(rcp.driving, new_vals))
    br = cplan.identify_branch(rcp, vals, sk)
    assert max_point_distance(cplan.evaluate(rcp, vals, br), sk) < 1e-9


def test_change_rcp_restores_when_original_is_safe():
    rcp = fresh_rcp("k33")
    sk = _tangent_k33()
    avals = measure_params(problem("k33").pdsp, sk)
    cplan.change_rcp(rcp, sk, avals, 0.1)
    d_swapped = rcp.d
    back = dict(sketch("k33"))
    _, actions = cplan.change_rcp(rcp, back, measure_params(problem("k33").pdsp, back), 0.1)
    assert any(a.action == "restore" for a in actions)
    assert rcp.d == d_swapped - 1
    cplan.validate_rcp(rcp)


def test_sc1_detects_overtaking_length():
    rcp = fresh_rcp("k33")
    sk = _tangent_k33()
    avals = measure_params(problem("k33").pdsp, sk)
    cplan.change_rcp(rcp, sk, avals, 0.1)
    i = next(i for i, o in enumerate(rcp.table) if o is not None and o.kind in cplan.CC_LIKE)
    kept, removed = rcp.instructions[i].args[1], rcp.table[i].args[3]
    bumped = dict(avals)
    bumped[removed] = bumped[kept] + 1.0
    assert cplan.check_sc1(rcp, bumped)
    bumped[removed] = bumped[kept] - 1e-3
    assert not cplan.check_sc1(rcp, bumped)


def test_greedy_plans_clear_alpha_at_sketch():
    for name in ("triangle", "dodecagon", "octahedron", "disulfide", "icosahedron"):
        rcp = cplan.derive_rcp_greedy(problem(name).pdsp, sketch(name))
        cplan.validate_rcp(rcp)
        assert cplan.gamma_I(rcp, sketch(name)) > 0.1, name


def test_identify_branch_rejects_foreign_figure():
    rcp = fresh_rcp("k33")
    vals = _sketch_values("k33", rcp)
    wrong = {p: geo.add(x, (0.3, 0.0)) for p, x in sketch("k33").items()}
    with pytest.raises(cplan.NoBranchMatches):
        cplan.identify_branch(rcp, vals, wrong)


def test_round_trip_random_states():
    rng = random.Random(3)
    rcp = fresh_rcp("k33")
    base = _sketch_values("k33", rcp)
    done = 0
    for _ in range(200):
        vals = {k: v * (1 + rng.uniform(-0.1, 0.1)) for k, v in base.items()}
        br = [rng.choice((-1, 1)) for _ in rcp.instructions]
        try:
            fig = cplan.evaluate(rcp, vals, br)
        except cplan.OutsideDomain:
            continue
        if cplan.gamma_I(rcp, fig) < 1e-3:
            continue
        aplus, _ = cplan.phi_prime(fig, 0.0, rcp)
        vals2 = dict(vals)
        vals2.update(zip(rcp.driving, aplus))
        br2 = cplan.identify_branch(rcp, vals2, fig)
        assert max_point_distance(cplan.evaluate(rcp, vals2, br2), fig) < 1e-9
        done += 1
    assert done > 20


def test_outside_domain_reports_instruction():
    rcp = fresh_rcp("k33")
    vals = _sketch_values("k33", rcp)
    vals["k"] = 50.0
    with pytest.raises(cplan.OutsideDomain) as info:
        cplan.evaluate(rcp, vals, [1] * len(rcp.instructions))
    assert info.value.index == 1
