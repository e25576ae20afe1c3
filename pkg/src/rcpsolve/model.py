"""Point distance satisfaction problems: constraint graph, figures, residuals.

A figure maps point ids to coordinate tuples.  Solutions are sought up to
rigid motions, so a :class:`Reference` pins the first point, the direction
of the second one (and in 3D the plane of the third); the remaining
coordinates, expressed in the reference frame, form the free vector ``X``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .geometry import LineRef, PlaneRef, Point, as_point, cross3, dist, dot, perpendicular, scale, sub, unit

Figure = Dict[str, Point]
ParamValues = Dict[str, float]


class ModelError(ValueError):
    pass


class MissingPoint(ModelError, KeyError):
    pass


class MissingParam(ModelError, KeyError):
    pass


class DegenerateSketch(ModelError):
    pass


@dataclass(frozen=True)
class Constraint:
    """``distance(p, q) = param``."""

    param: str
    p: str
    q: str

    def __post_init__(self):
        if self.p == self.q:
            raise ModelError(f"constraint {self.param} joins {self.p} to itself")


@dataclass
class Pdsp:
    dim: int
    points: List[str]
    constraints: List[Constraint]

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ModelError(f"dimension must be 2 or 3, got {self.dim}")
        if len(set(self.points)) != len(self.points):
            raise ModelError("duplicate point ids")
        known = set(self.points)
        seen = set()
        for c in self.constraints:
            if c.p not in known or c.q not in known:
                raise MissingPoint(f"constraint {c.param} references an unknown point")
            if c.param in seen:
                raise ModelError(f"parameter {c.param} used by two constraints")
            seen.add(c.param)
        self._by_param = {c.param: c for c in self.constraints}

    @property
    def params(self) -> List[str]:
        return [c.param for c in self.constraints]

    @property
    def n_reference_coords(self) -> int:
        return 3 if self.dim == 2 else 6

    @property
    def m(self) -> int:
        """Number of free coordinates once the reference is fixed."""
        return self.dim * len(self.points) - self.n_reference_coords

    def constraint(self, param: str) -> Constraint:
        try:
            return self._by_param[param]
        except KeyError:
            raise MissingParam(param) from None

    def find_constraint(self, p: str, q: str) -> Constraint | None:
        for c in self.constraints:
            if {c.p, c.q} == {p, q}:
                return c
        return None

    def neighbors(self, p: str) -> List[Tuple[str, Constraint]]:
        out = []
        for c in self.constraints:
            if c.p == p:
                out.append((c.q, c))
            elif c.q == p:
                out.append((c.p, c))
        return out


def _point(fig: Mapping[str, Sequence[float]], pid: str) -> Sequence[float]:
    try:
        return fig[pid]
    except KeyError:
        raise MissingPoint(pid) from None


def residual(c: Constraint, fig: Mapping[str, Sequence[float]], vals: Mapping[str, float]) -> float:
    """Distance between the constrained points minus the parameter value."""
    try:
        a = vals[c.param]
    except KeyError:
        raise MissingParam(c.param) from None
    return dist(_point(fig, c.p), _point(fig, c.q)) - a


def residual_vector(pdsp: Pdsp, fig: Mapping[str, Sequence[float]], vals: Mapping[str, float]) -> np.ndarray:
    return np.array([residual(c, fig, vals) for c in pdsp.constraints])


def measure_params(pdsp: Pdsp, sketch: Mapping[str, Sequence[float]]) -> ParamValues:
    out = {}
    for c in pdsp.constraints:
        d = dist(_point(sketch, c.p), _point(sketch, c.q))
        if d == 0.0:
            raise DegenerateSketch(f"points {c.p} and {c.q} coincide in the sketch")
        out[c.param] = d
    return out


def diameter(fig: Mapping[str, Sequence[float]]) -> float:
    pts = list(fig.values())
    return max((dist(p, q) for i, p in enumerate(pts) for q in pts[i + 1:]), default=0.0)


def max_point_distance(f1: Mapping[str, Sequence[float]], f2: Mapping[str, Sequence[float]]) -> float:
    return max(dist(f1[k], f2[k]) for k in f1)


# -- structural check -----------------------------------------------------


@dataclass
class StructuralReport:
    ok: bool
    n_free: int
    n_constraints: int
    matching_size: int
    unmatched: List[str] = field(default_factory=list)

    @property
    def missing(self) -> int:
        """Constraints lacking to match every free coordinate."""
        return max(0, self.n_free - self.n_constraints)

    @property
    def excess(self) -> int:
        return max(0, self.n_constraints - self.n_free)


def free_coordinate_slots(pdsp: Pdsp) -> List[Tuple[str, int]]:
    """Free coordinates ``(point, local axis)`` in deterministic order."""
    slots = []
    for k, p in enumerate(pdsp.points):
        if k == 0:
            axes = []
        elif k == 1:
            axes = [0]
        elif k == 2 and pdsp.dim == 3:
            axes = [0, 1]
        else:
            axes = list(range(pdsp.dim))
        slots.extend((p, a) for a in axes)
    return slots


def check_structural(pdsp: Pdsp) -> StructuralReport:
    """Cardinality check plus a perfect matching constraints <-> free coordinates."""
    slots = free_coordinate_slots(pdsp)
    rows, cols = [], []
    for i, c in enumerate(pdsp.constraints):
        for j, (p, _) in enumerate(slots):
            if p in (c.p, c.q):
                rows.append(i)
                cols.append(j)
    n_c, n_x = len(pdsp.constraints), len(slots)
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_c, n_x))
    match = maximum_bipartite_matching(graph, perm_type="column") if n_c and n_x else np.full(n_c, -1)
    unmatched = [pdsp.constraints[i].param for i in range(n_c) if match[i] < 0]
    size = n_c - len(unmatched)
    ok = n_c == n_x and size == n_x
    return StructuralReport(ok, n_x, n_c, size, unmatched)


# -- reference ------------------------------------------------------------


@dataclass(frozen=True)
class Reference:
    """Rigid frame read on the sketch.

    ``basis`` holds orthonormal row vectors; local coordinates of a point are
    its components in that frame relative to ``origin``.
    """

    dim: int
    point_ids: Tuple[str, ...]
    origin: Point
    basis: Tuple[Point, ...]
    slots: Tuple[Tuple[str, int], ...]

    @property
    def m(self) -> int:
        return len(self.slots)

    @property
    def line(self) -> LineRef:
        return LineRef(self.origin, self.basis[0])

    @property
    def plane(self) -> PlaneRef | None:
        if self.dim == 2:
            return None
        return PlaneRef(self.origin, self.basis[0], self.basis[1])

    def local(self, p: Sequence[float]) -> Point:
        w = sub(p, self.origin)
        return tuple(dot(w, e) for e in self.basis)

    def world(self, q: Sequence[float]) -> Point:
        out = list(self.origin)
        for x, e in zip(q, self.basis):
            for k in range(self.dim):
                out[k] += x * e[k]
        return tuple(out)

    def to_vector(self, fig: Mapping[str, Sequence[float]]) -> np.ndarray:
        cache: Dict[str, Point] = {}
        out = np.empty(len(self.slots))
        for j, (p, a) in enumerate(self.slots):
            if p not in cache:
                cache[p] = self.local(_point(fig, p))
            out[j] = cache[p][a]
        return out

    def to_figure(self, x: Sequence[float], points: Sequence[str]) -> Figure:
        loc = {p: [0.0] * self.dim for p in points}
        for (p, a), v in zip(self.slots, x):
            loc[p][a] = float(v)
        return {p: self.world(loc[p]) for p in points}


def fix_reference(pdsp: Pdsp, sketch: Mapping[str, Sequence[float]]) -> Reference:
    """Reference built on the first two (three in 3D) points of ``pdsp``."""
    need = 2 if pdsp.dim == 2 else 3
    if len(pdsp.points) < need:
        raise DegenerateSketch("not enough points to fix a reference")
    ids = tuple(pdsp.points[:need])
    pts = [as_point(_point(sketch, p)) for p in ids]
    if any(len(p) != pdsp.dim for p in pts):
        raise DegenerateSketch("sketch coordinates do not match the dimension")
    p1, p2 = pts[0], pts[1]
    if dist(p1, p2) == 0.0:
        raise DegenerateSketch(f"{ids[0]} and {ids[1]} coincide")
    e1 = unit(sub(p2, p1))
    if pdsp.dim == 2:
        basis = (e1, perpendicular(e1))
    else:
        w = sub(pts[2], p1)
        w = sub(w, scale(dot(w, e1), e1))
        nw = math.sqrt(dot(w, w))
        if nw <= 1e-12 * dist(p1, p2):
            raise DegenerateSketch(f"{ids[0]}, {ids[1]}, {ids[2]} are collinear")
        e2 = scale(1.0 / nw, w)
        basis = (e1, e2, cross3(e1, e2))
    return Reference(pdsp.dim, ids, p1, basis, tuple(free_coordinate_slots(pdsp)))
