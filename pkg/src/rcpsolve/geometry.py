"""Closed-form intersection primitives for ruler-and-compass constructions.

Points are plain tuples of floats (length 2 or 3).  Every intersection that
has two solutions takes a branch sign ``b`` in {+1, -1}; the indexing is
continuous away from tangency:

* circle/circle (2D): ``b`` is the sign of ``(c2 - c1) x (p - c1)``;
* circle/sphere (3D): ``b`` is the sign of ``((p' - c) x (p - c)) . n`` where
  ``p'`` is the sphere center projected on the circle plane, ``c`` the circle
  center and ``n`` its normal.

Intersections go through the radical line/plane followed by Pythagoras.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Tuple

Point = Tuple[float, ...]

#: circles are tangent when ``h**2`` is within this fraction of ``(r1 + r2)**2``
TANGENCY_TOL = 1e-12
_UNIT_TOL = 1e-12


class GeometryError(ArithmeticError):
    """Base class for intersections that are undefined."""


class NonPositiveRadius(GeometryError):
    pass


class CenterOffLine(GeometryError):
    pass


class Disjoint(GeometryError):
    pass


class Contained(GeometryError):
    pass


class Coincident(GeometryError):
    """Identical circles with positive radius: infinitely many intersections."""


class DoublyDegenerate(GeometryError):
    """Concentric circles of radius zero."""


class DegenerateGamma(GeometryError):
    pass


class DegenerateLine(GeometryError):
    pass


# -- small vector helpers on tuples ---------------------------------------


def sub(p: Sequence[float], q: Sequence[float]) -> Point:
    if len(p) == 3:
        return (p[0] - q[0], p[1] - q[1], p[2] - q[2])
    if len(p) == 2:
        return (p[0] - q[0], p[1] - q[1])
    return tuple(a - b for a, b in zip(p, q))


def add(p: Sequence[float], q: Sequence[float]) -> Point:
    if len(p) == 3:
        return (p[0] + q[0], p[1] + q[1], p[2] + q[2])
    return tuple(a + b for a, b in zip(p, q))


def scale(s: float, p: Sequence[float]) -> Point:
    if len(p) == 3:
        return (s * p[0], s * p[1], s * p[2])
    return tuple(s * a for a in p)


def dot(p: Sequence[float], q: Sequence[float]) -> float:
    if len(p) == 3:
        return p[0] * q[0] + p[1] * q[1] + p[2] * q[2]
    return sum(a * b for a, b in zip(p, q))


def norm(p: Sequence[float]) -> float:
    if len(p) == 3:
        return math.sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2])
    return math.sqrt(sum(a * a for a in p))


def dist(p: Sequence[float], q: Sequence[float]) -> float:
    if len(p) == 3:
        return math.sqrt((p[0] - q[0]) ** 2 + (p[1] - q[1]) ** 2 + (p[2] - q[2]) ** 2)
    if len(p) == 2:
        return math.hypot(p[0] - q[0], p[1] - q[1])
    return math.sqrt(sum((a - b) ** 2 for a, b in zip(p, q)))


def cross3(p: Sequence[float], q: Sequence[float]) -> Point:
    return (
        p[1] * q[2] - p[2] * q[1],
        p[2] * q[0] - p[0] * q[2],
        p[0] * q[1] - p[1] * q[0],
    )


def unit(p: Sequence[float]) -> Point:
    n = norm(p)
    if n == 0.0:
        raise DegenerateLine("zero-length direction")
    return tuple(a / n for a in p)


def as_point(p: Sequence[float]) -> Point:
    pt = tuple(float(a) for a in p)
    if len(pt) not in (2, 3) or not all(math.isfinite(a) for a in pt):
        raise ValueError(f"invalid point {p!r}")
    return pt


# -- reference objects ----------------------------------------------------


@dataclass(frozen=True)
class LineRef:
    origin: Point
    direction: Point

    def __post_init__(self):
        if abs(norm(self.direction) - 1.0) > _UNIT_TOL:
            raise ValueError("line direction must be a unit vector")


@dataclass(frozen=True)
class PlaneRef:
    """Plane through ``origin`` spanned by the orthonormal pair ``u``, ``v``."""

    origin: Point
    u: Point
    v: Point

    @property
    def normal(self) -> Point:
        return cross3(self.u, self.v)

    def local(self, p: Sequence[float]) -> Tuple[float, float]:
        w = sub(p, self.origin)
        return dot(w, self.u), dot(w, self.v)

    def world(self, x: float, y: float) -> Point:
        o, u, v = self.origin, self.u, self.v
        return (o[0] + x * u[0] + y * v[0],
                o[1] + x * u[1] + y * v[1],
                o[2] + x * u[2] + y * v[2])


@dataclass(frozen=True)
class CircleRef:
    """Circle in 3D space (used for sphere/sphere intersections)."""

    center: Point
    radius: float
    normal: Point
    tangent: bool = False

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("circle radius must be nonnegative")
        if abs(dot(self.normal, self.normal) - 1.0) > 2 * _UNIT_TOL:
            raise ValueError("circle normal must be a unit vector")


_setattr = object.__setattr__


def _circle(center: Point, radius: float, normal: Point, tangent: bool) -> CircleRef:
    """CircleRef without the checks, for values built from a unit normal."""
    c = object.__new__(CircleRef)
    _setattr(c, "center", center)
    _setattr(c, "radius", radius)
    _setattr(c, "normal", normal)
    _setattr(c, "tangent", tangent)
    return c


# -- intersections --------------------------------------------------------


def inter_circle_line(center: Sequence[float], radius: float, line: LineRef, b: int) -> Point:
    """Intersection of ``line`` with a circle (or sphere) centered on it."""
    if not radius > 0:
        raise NonPositiveRadius(f"radius {radius!r} is not positive")
    w = sub(center, line.origin)
    along = dot(w, line.direction)
    off = dist(w, scale(along, line.direction))
    if off > 1e-9 * radius:
        raise CenterOffLine(f"center is {off:g} away from the line")
    return tuple(c + b * radius * d for c, d in zip(center, line.direction))


def _radical(d: float, r1: float, r2: float) -> Tuple[float, float, bool]:
    """Return ``(a, h, tangent)``: offset of the radical line from ``c1`` and
    half chord length for two circles whose centers are ``d`` apart."""
    a = (d * d + r1 * r1 - r2 * r2) / (2.0 * d)
    h2 = r1 * r1 - a * a
    tol = TANGENCY_TOL * (r1 + r2) ** 2
    if h2 < -tol:
        if d > r1 + r2:
            raise Disjoint(f"centers {d:g} apart, radii {r1:g} and {r2:g}")
        raise Contained(f"centers {d:g} apart, radii {r1:g} and {r2:g}")
    if h2 <= tol:
        return a, 0.0, True
    return a, math.sqrt(h2), False


def _check_concentric(d: float, r1: float, r2: float) -> None:
    if d == 0.0:
        if r1 == 0.0 and r2 == 0.0:
            raise DoublyDegenerate("concentric circles of radius zero")
        if r1 == r2:
            raise Coincident("identical circles")
        raise Contained("concentric circles")


def _check_radii(r1: float, r2: float) -> None:
    if r1 < 0 or r2 < 0:
        raise NonPositiveRadius(f"negative radius ({r1!r}, {r2!r})")


def inter_circle_circle(c1: Sequence[float], r1: float, c2: Sequence[float], r2: float,
                        b: int) -> Point:
    """Planar circle/circle intersection on branch ``b``."""
    _check_radii(r1, r2)
    ex, ey = c2[0] - c1[0], c2[1] - c1[1]
    d = math.hypot(ex, ey)
    _check_concentric(d, r1, r2)
    a, h, _ = _radical(d, r1, r2)
    ux, uy = ex / d, ey / d
    bh = b * h
    return (c1[0] + a * ux - bh * uy, c1[1] + a * uy + bh * ux)


def inter_circle_circle_in_plane(c1: Sequence[float], r1: float, c2: Sequence[float], r2: float,
                                 plane: PlaneRef, b: int) -> Point:
    """Intersection of two spheres with a plane containing both centers.

    The branch sign is the planar convention in the plane's ``(u, v)`` frame.
    """
    q1 = plane.local(c1)
    q2 = plane.local(c2)
    x, y = inter_circle_circle(q1, r1, q2, r2, b)
    return plane.world(x, y)


def inter_sphere_sphere(c1: Sequence[float], r1: float, c2: Sequence[float], r2: float) -> CircleRef:
    """Circle where two spheres meet; the normal points from ``c1`` to ``c2``."""
    _check_radii(r1, r2)
    ex, ey, ez = c2[0] - c1[0], c2[1] - c1[1], c2[2] - c1[2]
    d = math.sqrt(ex * ex + ey * ey + ez * ez)
    _check_concentric(d, r1, r2)
    a, h, tangent = _radical(d, r1, r2)
    n = (ex / d, ey / d, ez / d)
    return _circle((c1[0] + a * n[0], c1[1] + a * n[1], c1[2] + a * n[2]), h, n, tangent)


def _in_plane_basis(n: Sequence[float], hint: Sequence[float]) -> Tuple[Point, Point]:
    """Unit ``u`` along ``hint`` (made orthogonal to ``n``) and ``w = n x u``."""
    u = sub(hint, scale(dot(hint, n), n))
    u = unit(u)
    return u, cross3(n, u)


def inter_circle_sphere(circle: CircleRef, center: Sequence[float], r: float, b: int) -> Point:
    """Intersection of a 3D circle with a sphere on branch ``b``."""
    if not circle.radius > 0:
        raise NonPositiveRadius("circle radius is zero")
    if r < 0:
        raise NonPositiveRadius(f"negative sphere radius {r!r}")
    nx, ny, nz = circle.normal
    cx, cy, cz = circle.center
    wx, wy, wz = center[0] - cx, center[1] - cy, center[2] - cz
    height = wx * nx + wy * ny + wz * nz
    rho2 = r * r - height * height
    tol = TANGENCY_TOL * (r + circle.radius) ** 2
    if rho2 < -tol:
        raise Disjoint("sphere does not reach the circle plane")
    rho = math.sqrt(rho2) if rho2 > 0 else 0.0
    ix, iy, iz = wx - height * nx, wy - height * ny, wz - height * nz
    d = math.sqrt(ix * ix + iy * iy + iz * iz)
    if d == 0.0:
        if rho == circle.radius:
            raise Coincident("sphere contains the whole circle")
        raise Contained("sphere center projects on the circle center")
    a, h, _ = _radical(d, circle.radius, rho)
    ux, uy, uz = ix / d, iy / d, iz / d
    # v = n x u
    vx, vy, vz = ny * uz - nz * uy, nz * ux - nx * uz, nx * uy - ny * ux
    bh = b * h
    return (cx + a * ux + bh * vx, cy + a * uy + bh * vy, cz + a * uz + bh * vz)


# -- projections and distances to boundary configurations -----------------


def project_point_line(p: Sequence[float], a: Sequence[float], b: Sequence[float]) -> Point:
    """Orthogonal projection of ``p`` on the line through ``a`` and ``b``."""
    e = sub(b, a)
    ee = dot(e, e)
    if ee == 0.0:
        raise DegenerateLine("line through two coincident points")
    s = dot(sub(p, a), e) / ee
    return tuple(ai + s * ei for ai, ei in zip(a, e))


def point_line_distance(p: Sequence[float], a: Sequence[float], b: Sequence[float]) -> float:
    e = sub(b, a)
    w = sub(p, a)
    if len(e) == 2:
        c = abs(e[0] * w[1] - e[1] * w[0])
    else:
        c = norm(cross3(e, w))
    ne = norm(e)
    if ne == 0.0:
        raise DegenerateLine("line through two coincident points")
    return c / ne


def gamma_cc(p_new: Sequence[float], c1: Sequence[float], c2: Sequence[float]) -> float:
    """Distance of a circle/circle construction to tangency, in [0, 1].

    Ratio of the distance from ``p_new`` to the line ``(c1, c2)`` over the
    larger of the two radii.  Zero exactly when the three points are collinear.
    """
    r1 = dist(p_new, c1)
    r2 = dist(p_new, c2)
    if r1 == 0.0 or r2 == 0.0 or dist(c1, c2) == 0.0:
        raise DegenerateGamma("coincident points")
    return min(1.0, point_line_distance(p_new, c1, c2) / max(r1, r2))


def gamma_cs(p_new: Sequence[float], circle: CircleRef, s_center: Sequence[float]) -> float:
    """Distance of a circle/sphere construction to tangency, in [0, 1]."""
    n = circle.normal
    w = sub(s_center, circle.center)
    p_proj = sub(s_center, scale(dot(w, n), n))
    denom = max(dist(p_new, circle.center), dist(p_new, s_center))
    if denom == 0.0 or dist(p_proj, circle.center) == 0.0:
        raise DegenerateGamma("projection line is undefined")
    return min(1.0, point_line_distance(p_new, circle.center, p_proj) / denom)


def center_offset_cc(p_new: Sequence[float], c1: Sequence[float], c2: Sequence[float]) -> float:
    """Distance between the two centers over the larger radius, in [0, 1].

    Small values mean nearly concentric circles, where the intersection is
    hypersensitive to the radii.
    """
    denom = max(dist(p_new, c1), dist(p_new, c2))
    if denom == 0.0:
        raise DegenerateGamma("coincident points")
    return min(1.0, dist(c1, c2) / denom)


def center_offset_cs(p_new: Sequence[float], circle: CircleRef, s_center: Sequence[float]) -> float:
    """In-plane offset between circle center and projected sphere center,
    over the same denominator as :func:`gamma_cs`."""
    n = circle.normal
    w = sub(s_center, circle.center)
    p_proj = sub(s_center, scale(dot(w, n), n))
    denom = max(dist(p_new, circle.center), dist(p_new, s_center))
    if denom == 0.0:
        raise DegenerateGamma("coincident points")
    return min(1.0, dist(p_proj, circle.center) / denom)


def circle_through(p_new: Sequence[float], c1: Sequence[float], c2: Sequence[float]) -> CircleRef:
    """Circle of axis ``(c1, c2)`` passing through ``p_new``."""
    n = unit(sub(c2, c1))
    center = add(c1, scale(dot(sub(p_new, c1), n), n))
    return CircleRef(center, dist(p_new, center), n)


def perpendicular(e: Sequence[float], normal: Sequence[float] | None = None) -> Point:
    """Unit vector orthogonal to ``e``: the left normal in 2D, ``normal x e``
    in 3D when a plane normal is given, and a deterministic choice otherwise."""
    if len(e) == 2:
        u = unit(e)
        return (-u[1], u[0])
    if normal is not None:
        return unit(cross3(normal, e))
    u = unit(e)
    k = min(range(3), key=lambda i: abs(u[i]))
    axis = tuple(1.0 if i == k else 0.0 for i in range(3))
    return unit(cross3(u, axis))
