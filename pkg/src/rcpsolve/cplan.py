"""Reparameterized construction plans (RCP) and their on-the-fly mutation.

An RCP is a triangular list of intersection instructions.  Some instructions
use a *driving parameter* (an unknown length) measured from a dedicated
*reference point* instead of an original constraint; the original
constraints dropped that way are the *removed constraints*.  Tracking
happens in the space of driving parameters, and the plan is rewritten
whenever the constructed figure gets close to a tangency.

Instruction indices are 0-based: ``instructions[0]`` builds the second point
on the reference line and is never rewritten.
"""

from __future__ import annotations

import copy
import itertools
import math
import re
from dataclasses import dataclass, replace
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import geometry as geo
from .geometry import GeometryError, Point
from .model import Constraint, Figure, Pdsp, Reference, diameter, fix_reference, measure_params

INTER_CL = "InterCL"
INTER_CC = "InterCC"
INTER_SL = "InterSL"
INTER_SSP = "InterSSP"
INTER_SS = "InterSS"
INTER_CS = "InterCS"
INTER_SSS = "InterSSS"

#: kinds built from two centered supports, the second of which may be driven
CC_LIKE = (INTER_CC, INTER_SSP, INTER_SS)
LINE_KINDS = (INTER_CL, INTER_SL)
KINDS = (INTER_CL, INTER_CC, INTER_SL, INTER_SSP, INTER_SS, INTER_CS)

LINE_ID = "l1"
PLANE_ID = "pl1"


class PlanError(Exception):
    pass


class OutsideDomain(PlanError):
    """The plan cannot be evaluated: some intersection is empty or infinite."""

    def __init__(self, index: int, error: GeometryError):
        super().__init__(f"instruction {index}: {type(error).__name__}: {error}")
        self.index = index
        self.error = error


class NoBranchMatches(PlanError):
    def __init__(self, index: int, mismatch: float):
        super().__init__(f"no branch reproduces the target at instruction {index} "
                         f"(best mismatch {mismatch:.3g})")
        self.index = index
        self.mismatch = mismatch


class InvariantViolation(PlanError):
    pass


class CannotEscape(PlanError):
    pass


class CannotTriangularize(PlanError):
    pass


class ZeroRadius(PlanError):
    pass


@dataclass(frozen=True)
class Instruction:
    """``out = kind(*args)``.

    Argument layouts:

    * ``InterCL``/``InterSL``: ``(center, radius, line)``
    * ``InterCC``/``InterSS``: ``(center1, radius1, center2, radius2)``
    * ``InterSSP``: ``(center1, radius1, center2, radius2, plane)``
    * ``InterCS``: ``(circle, center, radius)``
    * ``InterSSS``: three ``(center, radius)`` pairs; only an input form,
      see :func:`decompose_sss`.
    """

    kind: str
    out: str
    args: Tuple[str, ...]

    def __post_init__(self):
        arity = {INTER_CL: 3, INTER_SL: 3, INTER_CC: 4, INTER_SS: 4, INTER_SSP: 5,
                 INTER_CS: 3, INTER_SSS: 6}
        if self.kind not in arity:
            raise ValueError(f"unknown instruction kind {self.kind!r}")
        if len(self.args) != arity[self.kind]:
            raise ValueError(f"{self.kind} takes {arity[self.kind]} arguments, got {len(self.args)}")

    @property
    def moving(self) -> Tuple[str, str]:
        """The support that may be replaced by a reference point and a driving length."""
        if self.kind in CC_LIKE:
            return self.args[2], self.args[3]
        if self.kind == INTER_CS:
            return self.args[1], self.args[2]
        raise InvariantViolation(f"{self.kind} has no swappable support")

    @property
    def kept(self) -> Tuple[str, ...]:
        if self.kind in CC_LIKE:
            return self.args[:2]
        if self.kind == INTER_CS:
            return self.args[:1]
        raise InvariantViolation(f"{self.kind} has no swappable support")

    def with_moving(self, center: str, radius: str) -> "Instruction":
        a = list(self.args)
        if self.kind in CC_LIKE:
            a[2], a[3] = center, radius
        else:
            a[1], a[2] = center, radius
        return replace(self, args=tuple(a))

    def flipped(self) -> "Instruction":
        """Same construction with both supports exchanged (CC-like kinds)."""
        a = list(self.args)
        a[0], a[1], a[2], a[3] = a[2], a[3], a[0], a[1]
        return replace(self, args=tuple(a))

    def supports(self) -> frozenset:
        if self.kind in CC_LIKE:
            return frozenset([(self.args[0], self.args[1]), (self.args[2], self.args[3])])
        return frozenset([self.args])

    def equivalent(self, other: Optional["Instruction"]) -> bool:
        """Equal up to the order of the two supports of a CC-like kind."""
        if other is None or self.kind != other.kind or self.out != other.out:
            return False
        if self.kind in CC_LIKE:
            return self.supports() == other.supports() and self.args[4:] == other.args[4:]
        return self.args == other.args


def circle_id(point: str) -> str:
    return f"{point}.circle"


def decompose_sss(instr: Instruction) -> Tuple[Instruction, Instruction]:
    """Split a three-sphere intersection into sphere/sphere then circle/sphere."""
    if instr.kind != INTER_SSS:
        raise ValueError("not an InterSSS instruction")
    c1, r1, c2, r2, c3, r3 = instr.args
    cid = circle_id(instr.out)
    return (Instruction(INTER_SS, cid, (c1, r1, c2, r2)),
            Instruction(INTER_CS, instr.out, (cid, c3, r3)))


_FRESH = re.compile(r"^[kr]\.(\d+)$")


class Rcp:
    """A construction plan with its removed constraints, driving parameters
    and reference values.  Mutated in place by :func:`change_rcp`."""

    def __init__(self, pdsp: Pdsp, reference: Reference, instructions: Sequence[Instruction],
                 removed: Sequence[Constraint], driving: Sequence[str],
                 ref_points: Mapping[str, Sequence[float]]):
        self.pdsp = pdsp
        self.reference = reference
        expanded: List[Instruction] = []
        for ins in instructions:
            expanded.extend(decompose_sss(ins) if ins.kind == INTER_SSS else (ins,))
        self.instructions = expanded
        self.removed = list(removed)
        self.driving = list(driving)
        self.ref_points: Dict[str, Point] = {k: geo.as_point(v) for k, v in ref_points.items()}
        self.ref_points.setdefault(reference.point_ids[0], reference.origin)
        self.original = tuple(expanded)
        self.table: List[Optional[Instruction]] = [None] * len(expanded)
        used = [int(m.group(1)) for name in itertools.chain(self.driving, self.ref_points)
                if (m := _FRESH.match(name))]
        self._fresh = itertools.count(max(used, default=0) + 1)
        self.instruction_evals = 0
        self._line = reference.line
        self._plane = reference.plane
        self._params = set(pdsp.params)

    # -- bookkeeping -------------------------------------------------------

    def copy(self) -> "Rcp":
        new = copy.copy(self)
        new.instructions = list(self.instructions)
        new.removed = list(self.removed)
        new.driving = list(self.driving)
        new.ref_points = dict(self.ref_points)
        new.table = list(self.table)
        new._fresh = copy.copy(self._fresh)
        return new

    @property
    def d(self) -> int:
        return len(self.driving)

    def fresh_ids(self) -> Tuple[str, str]:
        n = next(self._fresh)
        return f"r.{n}", f"k.{n}"

    def point_of(self, i: int) -> str:
        """Point constructed by instruction ``i`` (the circle's point for InterSS)."""
        ins = self.instructions[i]
        if ins.kind == INTER_SS:
            return self.instructions[i + 1].out
        return ins.out

    def driving_index(self) -> Dict[str, int]:
        """Instruction index that first uses each driving parameter."""
        out = {}
        for i, ins in enumerate(self.instructions):
            for a in ins.args:
                if a in self.driving and a not in out:
                    out[a] = i
        return out

    def added_constraints(self) -> List[Tuple[str, str, str]]:
        """``(driving param, constructed point, reference point)`` per driving param."""
        where = self.driving_index()
        out = []
        for k in self.driving:
            i = where[k]
            center, _ = self.instructions[i].moving
            out.append((k, self.point_of(i), center))
        return out

    def position(self, ident: str, fig: Mapping[str, Point]) -> Point:
        if ident in self.ref_points:
            return self.ref_points[ident]
        return fig[ident]

    def first_instruction_param(self) -> str:
        return self.instructions[0].args[1]

    # -- evaluation --------------------------------------------------------

    def run(self, values: Mapping[str, float], branch: Sequence[int], objs: Dict[str, object],
            start: int = 0, stop: int | None = None) -> Dict[str, object]:
        """Evaluate instructions ``start..stop`` into ``objs`` (which must already
        hold the outputs of earlier instructions and the reference points)."""
        ins_list = self.instructions
        stop = len(ins_list) if stop is None else stop
        i = start
        try:
            for i in range(start, stop):
                ins = ins_list[i]
                kind, a = ins.kind, ins.args
                if kind == INTER_CC:
                    val = geo.inter_circle_circle(objs[a[0]], values[a[1]], objs[a[2]], values[a[3]], branch[i])
                elif kind == INTER_CS:
                    val = geo.inter_circle_sphere(objs[a[0]], objs[a[1]], values[a[2]], branch[i])
                elif kind == INTER_SS:
                    val = geo.inter_sphere_sphere(objs[a[0]], values[a[1]], objs[a[2]], values[a[3]])
                elif kind == INTER_SSP:
                    val = geo.inter_circle_circle_in_plane(objs[a[0]], values[a[1]], objs[a[2]], values[a[3]],
                                                           self._plane, branch[i])
                else:
                    val = geo.inter_circle_line(objs[a[0]], values[a[1]], self._line, branch[i])
                objs[ins.out] = val
        except GeometryError as err:
            self.instruction_evals += i - start + 1
            raise OutsideDomain(i, err) from None
        self.instruction_evals += stop - start
        return objs

    def evaluate_objects(self, values: Mapping[str, float], branch: Sequence[int]) -> Dict[str, object]:
        return self.run(values, branch, dict(self.ref_points))

    def figure_from(self, objs: Mapping[str, object]) -> Figure:
        return {p: objs[p] for p in self.pdsp.points}


def evaluate(rcp: Rcp, values: Mapping[str, float], branch: Sequence[int]) -> Figure:
    """Construct the figure on ``branch``; raises :class:`OutsideDomain`."""
    return rcp.figure_from(rcp.evaluate_objects(values, branch))


def identify_branch(rcp: Rcp, values: Mapping[str, float], target: Mapping[str, Point],
                    tol: float | None = None) -> List[int]:
    """Branch whose evaluation reproduces ``target``, instruction by instruction.

    When both signs match (tangent intersection) ``+1`` is kept.
    """
    if tol is None:
        tol = 1e-6 * max(diameter(target), 1e-300)
    objs: Dict[str, object] = dict(rcp.ref_points)
    branch = [1] * len(rcp.instructions)
    for i, ins in enumerate(rcp.instructions):
        if ins.kind == INTER_SS:
            _run_one(rcp, values, branch, objs, i)
            continue
        best = None
        for sign in (1, -1):
            branch[i] = sign
            trial = dict(objs)
            try:
                _run_one(rcp, values, branch, trial, i)
            except OutsideDomain:
                continue
            err = geo.dist(trial[ins.out], target[ins.out])
            if best is None or err < best[0] - tol:
                best = (err, sign, trial[ins.out])
        if best is None:
            raise NoBranchMatches(i, math.inf)
        if best[0] > tol:
            raise NoBranchMatches(i, best[0])
        branch[i] = best[1]
        objs[ins.out] = best[2]
    return branch


def _run_one(rcp: Rcp, values, branch, objs, i) -> None:
    rcp.run(values, branch, objs, start=i, stop=i + 1)


def phi_prime(fig: Mapping[str, Point], t: float, rcp: Rcp) -> Tuple[np.ndarray, float]:
    """Driving-parameter coordinates of a figure: the added constraints' lengths."""
    vals = np.array([geo.dist(fig[p], rcp.ref_points[r]) for _, p, r in rcp.added_constraints()])
    return vals, t


# -- distance to boundary configurations ----------------------------------


def gamma_instruction(rcp: Rcp, i: int, fig: Mapping[str, Point],
                      instr: Instruction | None = None) -> float:
    """Distance of instruction ``i`` (or ``instr`` in its place) to a
    degenerate configuration at ``fig``.

    Smaller of the tangency distance and the normalized center offset; the
    latter vanishes for concentric supports, where the constructed point is
    hypersensitive to the lengths even though no tangency occurs.
    """
    ins = rcp.instructions[i] if instr is None else instr
    p = fig[rcp.point_of(i)]
    if ins.kind in CC_LIKE:
        c1, c2 = rcp.position(ins.args[0], fig), rcp.position(ins.args[2], fig)
        if geo.dist(c1, c2) == 0.0:
            return 0.0
        return min(geo.gamma_cc(p, c1, c2), geo.center_offset_cc(p, c1, c2))
    if ins.kind == INTER_CS:
        ss = rcp.instructions[i - 1]
        circle = geo.circle_through(p, rcp.position(ss.args[0], fig), rcp.position(ss.args[2], fig))
        s_center = rcp.position(ins.args[1], fig)
        off = geo.center_offset_cs(p, circle, s_center)
        if off == 0.0:
            return 0.0
        return min(geo.gamma_cs(p, circle, s_center), off)
    raise ValueError(f"no boundary distance for {ins.kind}")


def tangency_distance(rcp: Rcp, i: int, fig: Mapping[str, Point]) -> float:
    """Tangency part of :func:`gamma_instruction` only."""
    ins = rcp.instructions[i]
    p = fig[rcp.point_of(i)]
    if ins.kind in CC_LIKE:
        return geo.gamma_cc(p, rcp.position(ins.args[0], fig), rcp.position(ins.args[2], fig))
    ss = rcp.instructions[i - 1]
    circle = geo.circle_through(p, rcp.position(ss.args[0], fig), rcp.position(ss.args[2], fig))
    return geo.gamma_cs(p, circle, rcp.position(ins.args[1], fig))


def gamma_I(rcp: Rcp, fig: Mapping[str, Point]) -> float:
    """Minimum boundary distance over every instruction but the first."""
    return min((gamma_instruction(rcp, i, fig) for i, ins in enumerate(rcp.instructions)
                if ins.kind not in LINE_KINDS), default=1.0)


def gammas(rcp: Rcp, fig: Mapping[str, Point]) -> List[float]:
    return [math.nan if ins.kind in LINE_KINDS else gamma_instruction(rcp, i, fig)
            for i, ins in enumerate(rcp.instructions)]


# -- reference shifting ---------------------------------------------------


def shift_reference(p_new: Sequence[float], p_i1: Sequence[float], a_i2: float,
                    p_i3: Sequence[float], a_i4: float,
                    normal: Sequence[float] | None = None) -> Tuple[Point, float]:
    """New reference point and driving length pushing a circle/circle
    construction away from tangency.

    The reference moves to distance ``a_i2`` from ``p_new`` towards the line
    ``(p_i1, p_i3)``.  When ``p_new`` lies on that line the direction is the
    left normal of ``p_i3 - p_i1`` (``normal x (p_i3 - p_i1)`` in a plane).
    """
    if not a_i2 > 0:
        raise ZeroRadius(f"kept radius {a_i2!r} is not positive")
    e = geo.sub(p_i3, p_i1)
    if len(e) == 2 or normal is not None:
        # towards the line along its exact normal; the side is the sign of
        # the offset, so tiny offsets do not tilt the direction
        u = geo.perpendicular(e, normal)
        side = geo.dot(geo.sub(p_new, p_i1), u)
        if side > 0.0:
            u = geo.scale(-1.0, u)
    else:
        p = geo.project_point_line(p_new, p_i1, p_i3)
        w = geo.sub(p, p_new)
        v = geo.norm(w)
        u = geo.perpendicular(e) if v <= 1e-14 * a_i2 else geo.scale(1.0 / v, w)
    return geo.add(p_new, geo.scale(a_i2, u)), a_i2


def shift_reference_cs(p_new: Sequence[float], circle: geo.CircleRef, p_i5: Sequence[float],
                       a_i6: float) -> Tuple[Point, float]:
    """Circle/sphere counterpart of :func:`shift_reference`.

    The new center lies in the circle plane at distance
    ``m = max(circle.radius, a_i6)`` from ``p_new``.
    """
    n = circle.normal
    w = geo.sub(p_i5, circle.center)
    p_in = geo.sub(p_i5, geo.scale(geo.dot(w, n), n))
    m = max(circle.radius, a_i6)
    if not m > 0:
        raise ZeroRadius("circle and sphere radii vanish")
    if geo.dist(p_in, circle.center) == 0.0:
        p = circle.center
    else:
        p = geo.project_point_line(p_new, circle.center, p_in)
    dvec = geo.sub(p, p_new)
    v = geo.norm(dvec)
    if v <= 1e-14 * m:
        u = geo.unit(geo.cross3(n, geo.sub(circle.center, p_new)))
    else:
        u = geo.scale(1.0 / v, dvec)
    return geo.add(p_new, geo.scale(m, u)), m


# -- validation -----------------------------------------------------------


def realized_constraints(rcp: Rcp) -> List[Constraint]:
    """Original constraints ``C_I`` enforced by construction."""
    out = []
    pd = rcp.pdsp
    for i, ins in enumerate(rcp.instructions):
        pt = rcp.point_of(i)
        if ins.kind in LINE_KINDS:
            pairs = [(ins.args[0], ins.args[1])]
        elif ins.kind in CC_LIKE:
            pairs = [(ins.args[0], ins.args[1]), (ins.args[2], ins.args[3])]
        else:
            pairs = [(ins.args[1], ins.args[2])]
        for center, r in pairs:
            if r in rcp.driving:
                continue
            c = pd.constraint(r)
            if {c.p, c.q} != {center, pt}:
                raise InvariantViolation(f"instruction {i} uses {r} between {center} and {pt}, "
                                         f"but {r} constrains {c.p}-{c.q}")
            out.append(c)
    return out


def validate_rcp(rcp: Rcp) -> None:
    """Check triangularity, conditions (i)/(ii), C- = C minus C_I and the table."""
    problems = []
    known = set(rcp.ref_points) | {LINE_ID, PLANE_ID}
    params = set(rcp.pdsp.params) | set(rcp.driving)
    built = set()
    for i, ins in enumerate(rcp.instructions):
        if ins.kind not in KINDS:
            problems.append(f"instruction {i} has kind {ins.kind}")
        objects = [a for a in ins.args if a not in params]
        for a in objects:
            if a not in known:
                problems.append(f"instruction {i} uses {a} before it is defined")
        if ins.out in known:
            problems.append(f"{ins.out} is constructed twice")
        known.add(ins.out)
        if ins.kind != INTER_SS:
            built.add(ins.out)
        if i == 0 and ins.kind not in LINE_KINDS:
            problems.append("first instruction must intersect the reference line")
        if ins.kind in CC_LIKE and ins.args[1] in rcp.driving:
            problems.append(f"condition (i) fails at instruction {i}")
        if ins.kind == INTER_CS and rcp.instructions[i - 1].out != ins.args[0]:
            problems.append(f"InterCS at {i} does not follow its InterSS")
        if ins.kind in CC_LIKE + (INTER_CS,):
            center, r = ins.moving
            if r in rcp.driving:
                users = [j for j, o in enumerate(rcp.instructions) if center in o.args]
                if center not in rcp.ref_points or users != [i] or center == rcp.reference.point_ids[0]:
                    problems.append(f"condition (ii) fails at instruction {i}")
    missing = set(rcp.pdsp.points) - built - {rcp.reference.point_ids[0]}
    if missing:
        problems.append(f"points never constructed: {sorted(missing)}")
    try:
        c_i = realized_constraints(rcp)
    except InvariantViolation as err:
        problems.append(str(err))
        c_i = []
    all_c = set(rcp.pdsp.constraints)
    if set(c_i) & set(rcp.removed):
        problems.append("a removed constraint is also constructed")
    if set(c_i) | set(rcp.removed) != all_c or len(c_i) + len(rcp.removed) != len(all_c):
        problems.append("removed constraints are not C minus C_I")
    if len(rcp.driving) != len(rcp.removed):
        problems.append(f"d = {len(rcp.driving)} driving parameters for {len(rcp.removed)} removed constraints")
    if set(rcp.driving) & set(rcp.pdsp.params):
        problems.append("a driving parameter shadows an original one")
    for i, (ins, orig, t) in enumerate(zip(rcp.instructions, rcp.original, rcp.table)):
        if (t is None) != ins.equivalent(orig):
            problems.append(f"table entry {i} inconsistent with the current instruction")
    if problems:
        raise InvariantViolation("; ".join(problems))


# -- plan mutation ---------------------------------------------------------


def _original_of(rcp: Rcp, old: Instruction, new: Instruction) -> Instruction:
    for ins in (old, new):
        if ins.moving[1] in rcp.pdsp.params:
            return ins
    raise InvariantViolation("neither instruction uses an original parameter")


def swap_instruction(rcp: Rcp, i: int, new_instr: Instruction,
                     ref_value: Sequence[float] | None = None) -> None:
    """Exchange instruction ``i`` with ``new_instr``.

    If the original constraint of the pair is not removed yet, the new
    driving parameter and reference point are introduced and the old
    instruction is stored in the table; otherwise the original instruction is
    restored and the driving parameter disappears.
    """
    if i <= 0 or i >= len(rcp.instructions):
        raise InvariantViolation("the first instruction is never changed")
    old = rcp.instructions[i]
    if old.kind not in CC_LIKE + (INTER_CS,) or new_instr.kind != old.kind:
        raise InvariantViolation(f"cannot swap {old.kind} with {new_instr.kind}")
    if new_instr.out != old.out or new_instr.kept != old.kept:
        raise InvariantViolation("swapped instructions must share output and kept support")
    orig = _original_of(rcp, old, new_instr)
    c = rcp.pdsp.constraint(orig.moving[1])
    if c not in rcp.removed:
        center, k = new_instr.moving
        if k in rcp.driving or k in rcp.pdsp.params:
            raise InvariantViolation(f"driving parameter {k} already exists")
        if ref_value is None:
            raise InvariantViolation("a new reference point needs a value")
        rcp.driving.append(k)
        rcp.ref_points[center] = geo.as_point(ref_value)
        rcp.instructions[i] = new_instr
        rcp.removed.append(c)
        rcp.table[i] = old
    else:
        center, k = old.moving
        if k not in rcp.driving:
            raise InvariantViolation(f"{k} is not a driving parameter")
        rcp.driving.remove(k)
        del rcp.ref_points[center]
        rcp.instructions[i] = new_instr
        rcp.removed.remove(c)
        rcp.table[i] = None


def check_sc1(rcp: Rcp, avals: Mapping[str, float]) -> bool:
    """True when a swapped instruction's removed length overtakes its kept one."""
    for i, orig in enumerate(rcp.table):
        if orig is None or orig.kind not in CC_LIKE:
            continue
        kept = rcp.instructions[i].args[1]
        removed = orig.args[3]
        if avals[removed] > avals[kept]:
            return True
    return False


@dataclass
class ChangeAction:
    index: int
    action: str  # "swap", "shift", "restore" or "redrive"


def _shift(rcp: Rcp, i: int, fig: Mapping[str, Point], values: Mapping[str, float],
           alpha: float) -> None:
    """Move the reference point of instruction ``i`` away from degeneracy.

    The standard placement is tried first.  If it leaves the instruction
    within ``alpha`` (a circle/sphere step whose sphere is much larger than
    the circle, or nearly concentric supports) the sphere radius is reset to
    the kept radius, then the center is put perpendicular to the kept radius.
    """
    ins = rcp.instructions[i]
    p = fig[rcp.point_of(i)]
    center, k = ins.moving
    if ins.kind in CC_LIKE:
        normal = rcp.reference.plane.normal if ins.kind == INTER_SSP else None
        kept = rcp.position(ins.args[0], fig)
        new_pos, m = shift_reference(p, kept, values[ins.args[1]], rcp.position(center, fig), values[k], normal)
        candidates = [new_pos]
    else:
        ss = rcp.instructions[i - 1]
        circle = geo.circle_through(p, rcp.position(ss.args[0], fig), rcp.position(ss.args[2], fig))
        kept, normal = circle.center, circle.normal
        new_pos, _ = shift_reference_cs(p, circle, rcp.position(center, fig), values[k])
        m = circle.radius
        candidates = [new_pos]
        if m > 0:
            candidates.append(shift_reference_cs(p, circle, rcp.position(center, fig), 0.0)[0])
    if m > 0:
        candidates.append(geo.add(p, geo.scale(m, geo.perpendicular(geo.sub(kept, p), normal))))
    for pos in candidates:
        rcp.ref_points[center] = pos
        try:
            if gamma_instruction(rcp, i, fig) > alpha:
                return
        except GeometryError:
            continue


def change_rcp(rcp: Rcp, fig: Mapping[str, Point], avals: Mapping[str, float], alpha: float,
               aplus: Mapping[str, float] | None = None) -> Tuple[np.ndarray, List[ChangeAction]]:
    """Rewrite the plan in place so that ``fig`` is farther than ``alpha``
    from every boundary configuration.

    ``avals`` holds the interpolated original lengths, ``aplus`` the current
    driving values (read on ``fig`` when omitted).  Returns the new driving
    values (ordered as ``rcp.driving``) and the actions taken.
    """
    values: Dict[str, float] = dict(avals)
    if aplus is None:
        aplus = dict(zip(rcp.driving, phi_prime(fig, 0.0, rcp)[0]))
    values.update(aplus)
    actions: List[ChangeAction] = []
    for i in range(1, len(rcp.instructions)):
        for _ in range(3):
            ins = rcp.instructions[i]
            gamma = gamma_instruction(rcp, i, fig)
            orig = rcp.table[i]
            if orig is None:
                if gamma > alpha:
                    break
                center, r = ins.moving
                if r in rcp.driving:
                    _shift(rcp, i, fig, values, alpha)
                    actions.append(ChangeAction(i, "shift"))
                    break
                if ins.kind in CC_LIKE and values[ins.args[1]] < values[r]:
                    ins = ins.flipped()
                    rcp.instructions[i] = ins
                    center, r = ins.moving
                ref_id, k = rcp.fresh_ids()
                values[k] = values[r]
                swap_instruction(rcp, i, ins.with_moving(ref_id, k), rcp.position(center, fig))
                _shift(rcp, i, fig, values, alpha)
                actions.append(ChangeAction(i, "swap"))
                break
            if gamma_instruction(rcp, i, fig, orig) > alpha:
                swap_instruction(rcp, i, orig)
                actions.append(ChangeAction(i, "restore"))
                break
            if ins.kind in CC_LIKE and values[ins.args[1]] < values[orig.moving[1]]:
                swap_instruction(rcp, i, orig)
                actions.append(ChangeAction(i, "redrive"))
                continue
            if gamma <= alpha:
                _shift(rcp, i, fig, values, alpha)
                actions.append(ChangeAction(i, "shift"))
            break
        else:
            raise CannotEscape(f"instruction {i} keeps changing its driving parameter")
    new_vals, _ = phi_prime(fig, 0.0, rcp)
    g = gamma_I(rcp, fig)
    if not g > alpha:
        raise CannotEscape(f"boundary distance {g:.3g} still below alpha={alpha}")
    if check_sc1(rcp, avals):
        raise CannotEscape("stopping condition (sc1) still holds after the change")
    return new_vals, actions


# -- greedy plan derivation -------------------------------------------------


def _place_cc_reference(p: Point, q: Point, normal=None) -> Tuple[Point, float]:
    a = geo.dist(p, q)
    u = geo.perpendicular(geo.sub(q, p), normal)
    return geo.add(p, geo.scale(a, u)), a


def _place_cs_reference(p: Point, circle: geo.CircleRef) -> Point:
    u = geo.unit(geo.cross3(circle.normal, geo.sub(circle.center, p)))
    return geo.add(p, geo.scale(circle.radius, u))


def derive_rcp_greedy(pdsp: Pdsp, sketch: Mapping[str, Sequence[float]],
                      reference: Reference | None = None, alpha: float | None = 0.1) -> Rcp:
    """Build a plan by adding, at each step, the point with the most already
    constructed neighbours.  Missing supports become driving parameters
    measured from fresh reference points placed on the sketch.

    Unless ``alpha`` is None, the plan is then changed on the sketch until
    every instruction is farther than ``alpha`` from tangency.
    """
    ref = reference or fix_reference(pdsp, sketch)
    sk = {p: geo.as_point(sketch[p]) for p in pdsp.points}
    counter = itertools.count(1)
    refs: Dict[str, Point] = {}
    driving: List[str] = []
    instrs: List[Instruction] = []
    used = set()

    def fresh():
        n = next(counter)
        return f"r.{n}", f"k.{n}"

    p1, p2 = pdsp.points[:2]
    c12 = pdsp.find_constraint(p1, p2)
    if c12 is None:
        raise CannotTriangularize(f"no constraint between {p1} and {p2}")
    instrs.append(Instruction(INTER_CL if pdsp.dim == 2 else INTER_SL, p2, (p1, c12.param, LINE_ID)))
    used.add(c12)
    built = [p1, p2]

    def known_neighbors(p):
        return [(q, c) for q, c in pdsp.neighbors(p) if q in built and c not in used]

    def cc_support(p, nbs, kind, extra=(), normal=None):
        if len(nbs) >= 2:
            (q1, c1), (q2, c2) = max(itertools.combinations(nbs, 2),
                                     key=lambda pair: _safe_gamma(sk[p], sk[pair[0][0]], sk[pair[1][0]]))
            used.update((c1, c2))
            return Instruction(kind, p if kind != INTER_SS else circle_id(p),
                               (q1, c1.param, q2, c2.param) + extra)
        if not nbs:
            raise CannotTriangularize(f"{p} has no constructed neighbour")
        (q, c), = nbs[:1]
        used.add(c)
        rid, k = fresh()
        refs[rid], _ = _place_cc_reference(sk[p], sk[q], normal)
        driving.append(k)
        return Instruction(kind, p if kind != INTER_SS else circle_id(p), (q, c.param, rid, k) + extra)

    if pdsp.dim == 3:
        p3 = pdsp.points[2]
        instrs.append(cc_support(p3, known_neighbors(p3), INTER_SSP, (PLANE_ID,), ref.plane.normal))
        built.append(p3)

    remaining = [p for p in pdsp.points if p not in built]
    while remaining:
        p = max(remaining, key=lambda q: (len(known_neighbors(q)), -remaining.index(q)))
        nbs = known_neighbors(p)
        if pdsp.dim == 2:
            instrs.append(cc_support(p, nbs, INTER_CC))
        else:
            if len(nbs) >= 3:
                best = max(itertools.combinations(nbs, 3),
                           key=lambda tr: _sss_quality(sk, p, tr))
                ordered = [best[0], best[1], best[2]]
                ss = Instruction(INTER_SS, circle_id(p),
                                 (ordered[0][0], ordered[0][1].param, ordered[1][0], ordered[1][1].param))
                cs = Instruction(INTER_CS, p, (circle_id(p), ordered[2][0], ordered[2][1].param))
                used.update(c for _, c in ordered)
            else:
                ss = cc_support(p, nbs, INTER_SS)
                pos = {**sk, **refs}
                circle = geo.circle_through(sk[p], pos[ss.args[0]], pos[ss.args[2]])
                rest = [(q, c) for q, c in nbs if c not in used]
                if rest:
                    q, c = rest[0]
                    used.add(c)
                    cs = Instruction(INTER_CS, p, (circle_id(p), q, c.param))
                else:
                    rid, k = fresh()
                    refs[rid] = _place_cs_reference(sk[p], circle)
                    driving.append(k)
                    cs = Instruction(INTER_CS, p, (circle_id(p), rid, k))
            instrs.extend((ss, cs))
        built.append(p)
        remaining.remove(p)

    removed = [c for c in pdsp.constraints if c not in used]
    if len(removed) != len(driving):
        raise CannotTriangularize(f"{len(removed)} removed constraints for {len(driving)} driving parameters")
    rcp = Rcp(pdsp, ref, instrs, removed, driving, refs)
    validate_rcp(rcp)
    if alpha is not None and gamma_I(rcp, sk) <= alpha:
        change_rcp(rcp, sk, measure_params(pdsp, sk), alpha)
        validate_rcp(rcp)
    return rcp


def _safe_gamma(p, q1, q2) -> float:
    try:
        return geo.gamma_cc(p, q1, q2)
    except GeometryError:
        return -1.0


def _sss_quality(sk, p, triple) -> float:
    (q1, _), (q2, _), (q3, _) = triple
    try:
        g1 = geo.gamma_cc(sk[p], sk[q1], sk[q2])
        circle = geo.circle_through(sk[p], sk[q1], sk[q2])
        g2 = geo.gamma_cs(sk[p], circle, sk[q3])
    except GeometryError:
        return -1.0
    return min(g1, g2)


def place_references(rcp: Rcp, sketch: Mapping[str, Sequence[float]]) -> None:
    """Give a sketch-based value to every reference point without one."""
    sk = {p: geo.as_point(sketch[p]) for p in rcp.pdsp.points}
    pos = {**sk, **rcp.ref_points}
    for i, ins in enumerate(rcp.instructions):
        if ins.kind in LINE_KINDS:
            continue
        center, r = ins.moving
        if r not in rcp.driving or center in rcp.ref_points:
            continue
        p = sk[rcp.point_of(i)]
        if ins.kind in CC_LIKE:
            normal = rcp.reference.plane.normal if ins.kind == INTER_SSP else None
            rcp.ref_points[center], _ = _place_cc_reference(p, pos[ins.args[0]], normal)
        else:
            ss = rcp.instructions[i - 1]
            circle = geo.circle_through(p, pos[ss.args[0]], pos[ss.args[2]])
            rcp.ref_points[center] = _place_cs_reference(p, circle)
        pos[center] = rcp.ref_points[center]
