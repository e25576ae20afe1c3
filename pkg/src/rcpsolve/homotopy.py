"""Parameter homotopies between a sketch and the target lengths.

The lengths move from their sketch values to their target values along
``a(t)``: every component is linear in ``t`` except one, which receives a
quadratic bump so that it is not proportional to the others.  Two systems
are derived from it:

* :class:`FullHomotopy` in the free coordinates of every point;
* :class:`ReducedHomotopy` in the driving parameters of a plan, whose
  residuals are the removed constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Sequence, Tuple

import numpy as np

from . import cplan
from .cplan import OutsideDomain, Rcp
from .model import Figure, Pdsp, Reference, check_structural, measure_params

FD_REL_STEP = 1e-7


class NotPositiveOnUnit(ValueError):
    def __init__(self, param: str, t: float):
        super().__init__(f"{param}(t) is not positive at t={t:.6g}")
        self.param = param
        self.t = t


class Unbounded(ValueError):
    """The positive support is not compact (no component bounds it)."""

    def __init__(self, lo: float, hi: float):
        super().__init__(f"positive support [{lo:.6g}, {hi:.6g}] is unbounded")
        self.lo, self.hi = lo, hi


@dataclass
class Interpolation:
    """``a_i(t) = q2_i t**2 + q1_i t + q0_i`` for each parameter."""

    params: List[str]
    sketch: np.ndarray
    target: np.ndarray
    quadratic: int | None = None
    c: float = 2.0

    def __post_init__(self):
        self.sketch = np.asarray(self.sketch, float)
        self.target = np.asarray(self.target, float)
        self.q0 = self.sketch.copy()
        self.q1 = self.target - self.sketch
        self.q2 = np.zeros_like(self.q0)
        if self.quadratic is not None:
            k = self.quadratic
            self.q2[k] = -self.c
            self.q1[k] += self.c
        self._index = {p: i for i, p in enumerate(self.params)}

    def __call__(self, t: float) -> np.ndarray:
        return (self.q2 * t + self.q1) * t + self.q0

    def derivative(self, t: float) -> np.ndarray:
        return 2.0 * self.q2 * t + self.q1

    def values(self, t: float) -> Dict[str, float]:
        return dict(zip(self.params, self(t).tolist()))

    def coeffs(self, param: str) -> Tuple[float, float, float]:
        i = self._index[param]
        return float(self.q2[i]), float(self.q1[i]), float(self.q0[i])


def make_interpolation(params: Sequence[str], sketch_vals: Mapping[str, float],
                       target_vals: Mapping[str, float], c: float = 2.0,
                       quadratic: str | None = None) -> Interpolation:
    """Interpolation with the quadratic term on ``quadratic`` (default: last
    parameter); fails if some length is not positive on ``[0, 1]``."""
    params = list(params)
    q = params[-1] if quadratic is None else quadratic
    interp = Interpolation(params, [sketch_vals[p] for p in params],
                           [target_vals[p] for p in params], params.index(q), c)
    for p in params:
        if not sketch_vals[p] > 0:
            raise NotPositiveOnUnit(p, 0.0)
        if not target_vals[p] > 0:
            raise NotPositiveOnUnit(p, 1.0)
        q2, q1, q0 = interp.coeffs(p)
        # a concave or linear component is smallest at an end point
        if q2 > 0.0:
            tv = -q1 / (2.0 * q2)
            if 0.0 < tv < 1.0 and not (q2 * tv + q1) * tv + q0 > 0:
                raise NotPositiveOnUnit(p, tv)
    return interp


def positive_support(interp: Interpolation) -> Tuple[float, float]:
    """Largest interval containing ``[0, 1]`` on which every length is >= 0."""
    lo, hi = -math.inf, math.inf
    for name, q2, q1, q0 in zip(interp.params, interp.q2, interp.q1, interp.q0):
        roots = np.roots([q2, q1, q0]) if q2 != 0.0 else (np.array([-q0 / q1]) if q1 != 0.0 else [])
        for r in np.atleast_1d(roots):
            if abs(np.imag(r)) > 1e-14:
                continue
            r = float(np.real(r))
            if r < 0.0:
                lo = max(lo, r)
            elif r > 1.0:
                hi = min(hi, r)
            else:
                raise NotPositiveOnUnit(name, r)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise Unbounded(lo, hi)
    return lo, hi


# -- full space -----------------------------------------------------------


class FullHomotopy:
    """Residuals ``|p q| - a(t)`` over the free coordinates of every point."""

    def __init__(self, pdsp: Pdsp, reference: Reference, interp: Interpolation):
        if list(interp.params) != pdsp.params:
            raise ValueError("interpolation parameters must follow the constraint order")
        self.pdsp = pdsp
        self.reference = reference
        self.interp = interp
        idx = {p: k for k, p in enumerate(pdsp.points)}
        self._i = np.array([idx[c.p] for c in pdsp.constraints])
        self._j = np.array([idx[c.q] for c in pdsp.constraints])
        self._rows = np.array([idx[p] for p, _ in reference.slots])
        self._cols = np.array([a for _, a in reference.slots])
        self._origin = np.array(reference.origin)
        self._basis = np.array(reference.basis)
        self.n = len(reference.slots)
        self.evals = 0

    def local_points(self, x: np.ndarray) -> np.ndarray:
        loc = np.zeros((len(self.pdsp.points), self.pdsp.dim))
        loc[self._rows, self._cols] = x
        return loc

    def world_points(self, x: np.ndarray) -> np.ndarray:
        return self._origin + self.local_points(x) @ self._basis

    def __call__(self, y: np.ndarray) -> np.ndarray:
        self.evals += 1
        w = self.world_points(y[:-1])
        return np.linalg.norm(w[self._i] - w[self._j], axis=1) - self.interp(y[-1])

    def figure(self, y: np.ndarray) -> Figure:
        w = self.world_points(y[:-1])
        return {p: tuple(w[k].tolist()) for k, p in enumerate(self.pdsp.points)}

    def start(self, sketch: Mapping[str, Sequence[float]]) -> np.ndarray:
        return np.append(self.reference.to_vector(sketch), 0.0)

    def jacobian(self, y: np.ndarray) -> np.ndarray:
        return jacobian_fd(self, y)


# -- reduced space --------------------------------------------------------


class ReducedHomotopy:
    """Removed-constraint residuals of the plan evaluated at ``a(t)`` plus the
    driving values.  Variables are ``y = (driving values..., t)``."""

    def __init__(self, rcp: Rcp, interp: Interpolation, branch: Sequence[int]):
        self.rcp = rcp
        self.interp = interp
        self.branch = list(branch)
        self.driving = list(rcp.driving)
        self._removed = [(c.p, c.q, interp.params.index(c.param)) for c in rcp.removed]
        self._first_use = rcp.driving_index()
        self.n = len(self.driving)
        self.evals = 0

    def values(self, y: Sequence[float]) -> Dict[str, float]:
        vals = dict(zip(self.interp.params, self.interp(float(y[-1])).tolist()))
        vals.update(zip(self.driving, (float(v) for v in y[:-1])))
        return vals

    def objects(self, y: Sequence[float]) -> Dict[str, object]:
        return self.rcp.evaluate_objects(self.values(y), self.branch)

    def figure(self, y: Sequence[float]) -> Figure:
        return self.rcp.figure_from(self.objects(y))

    def _residual(self, objs: Mapping[str, object], avec: np.ndarray) -> np.ndarray:
        out = np.empty(len(self._removed))
        for r, (p, q, k) in enumerate(self._removed):
            pp, qq = objs[p], objs[q]
            out[r] = math.sqrt(sum((u - v) ** 2 for u, v in zip(pp, qq))) - avec[k]
        return out

    def __call__(self, y: Sequence[float]) -> np.ndarray:
        self.evals += 1
        avec = self.interp(float(y[-1]))
        vals = dict(zip(self.interp.params, avec.tolist()))
        vals.update(zip(self.driving, (float(v) for v in y[:-1])))
        objs = self.rcp.evaluate_objects(vals, self.branch)
        return self._residual(objs, avec)

    def start(self, sketch: Mapping[str, Sequence[float]]) -> np.ndarray:
        vals, t = cplan.phi_prime(sketch, 0.0, self.rcp)
        return np.append(vals, t)

    def jacobian(self, y: np.ndarray) -> np.ndarray:
        return jacobian_rcp_optimized(self, y)


# -- Jacobians ------------------------------------------------------------


def fd_step(v: float) -> float:
    return FD_REL_STEP * max(1.0, abs(v))


def jacobian_fd(f: Callable[[np.ndarray], np.ndarray], y: np.ndarray,
                f0: np.ndarray | None = None) -> np.ndarray:
    """Forward differences column by column; a column whose forward probe
    leaves the domain is taken backward instead."""
    y = np.asarray(y, float)
    if f0 is None:
        f0 = f(y)
    jac = np.empty((len(f0), len(y)))
    for j in range(len(y)):
        h = fd_step(y[j])
        probe = y.copy()
        probe[j] = y[j] + h
        try:
            jac[:, j] = (f(probe) - f0) / h
        except OutsideDomain:
            probe[j] = y[j] - h
            jac[:, j] = (f0 - f(probe)) / h
    return jac


def jacobian_rcp_optimized(hr: ReducedHomotopy, y: np.ndarray) -> np.ndarray:
    """Same columns as :func:`jacobian_fd` applied to ``hr``, but each
    driving-parameter probe only re-evaluates the instructions from the first
    one using that parameter (prefix outputs are shared)."""
    y = np.asarray(y, float)
    t = float(y[-1])
    avec = hr.interp(t)
    vals = dict(zip(hr.interp.params, avec.tolist()))
    vals.update(zip(hr.driving, (float(v) for v in y[:-1])))
    rcp = hr.rcp
    base = rcp.evaluate_objects(vals, hr.branch)
    f0 = hr._residual(base, avec)
    jac = np.empty((len(f0), len(y)))

    def probe_driving(j, v):
        pv = dict(vals)
        pv[hr.driving[j]] = float(v)
        objs = dict(base)
        rcp.run(pv, hr.branch, objs, start=hr._first_use[hr.driving[j]])
        return hr._residual(objs, avec)

    for j in range(hr.n):
        h = fd_step(y[j])
        try:
            jac[:, j] = (probe_driving(j, y[j] + h) - f0) / h
        except OutsideDomain:
            jac[:, j] = (f0 - probe_driving(j, y[j] - h)) / h
    h = fd_step(t)
    probe = y.copy()
    probe[-1] = t + h
    try:
        jac[:, -1] = (hr(probe) - f0) / h
    except OutsideDomain:
        probe[-1] = t - h
        jac[:, -1] = (f0 - hr(probe)) / h
    return jac


# -- assumptions ----------------------------------------------------------


@dataclass
class AssumptionResult:
    name: str
    status: str  # "ok", "fail" or "not checkable"
    detail: str = ""


@dataclass
class AssumptionReport:
    results: List[AssumptionResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.status != "fail" for r in self.results)

    def __getitem__(self, name: str) -> AssumptionResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def lines(self) -> List[str]:
        return [f"{r.name}: {r.status}" + (f" ({r.detail})" if r.detail else "") for r in self.results]


def _real_roots(q2: float, q1: float, q0: float) -> List[float]:
    if q2 != 0.0:
        r = np.roots([q2, q1, q0])
        return sorted(float(np.real(x)) for x in r if abs(np.imag(x)) <= 1e-12 * max(1.0, abs(x)))
    if q1 != 0.0:
        return [-q0 / q1]
    return []


def _roots_in(coeffs: Tuple[float, float, float], lo: float, hi: float, tol: float = 1e-12) -> List[float]:
    return [r for r in _real_roots(*coeffs) if lo - tol <= r <= hi + tol]


def check_assumptions(pdsp: Pdsp, sketch: Mapping[str, Sequence[float]], interp: Interpolation,
                      rcp: Rcp | None = None, alpha: float = 0.1, strict: bool = False) -> AssumptionReport:
    """Report which standing hypotheses hold for a problem and its start.

    ``h1``..``h6`` are the hypotheses on the interpolation and the plan, each
    decided by root analysis of the (at most quadratic) components, with the
    offending root as witness.  Four practical checks follow: the graph is
    structurally well constrained, the sketch is a regular start, the plan is
    valid and the sketch is farther than ``alpha`` from boundary
    configurations.  Identical components (a common outcome of symmetric
    data) are reported under ``h3`` but only fail it when ``strict``.
    """
    rep = AssumptionReport()
    add = rep.results.append
    ref = rcp.reference if rcp is not None else None
    if ref is None:
        from .model import fix_reference
        ref = fix_reference(pdsp, sketch)
    full = FullHomotopy(pdsp, ref, interp)
    jac = jacobian_fd(full, full.start(sketch))
    rank = int(np.linalg.matrix_rank(jac)) if jac.size else 0
    add(AssumptionResult("h1", "not checkable", f"full rank along the whole path; rank {rank} of "
                                                f"{jac.shape[0]} at the sketch"))
    try:
        lo, hi = positive_support(interp)
        add(AssumptionResult("h2", "ok", f"support [{lo:.6g}, {hi:.6g}]"))
    except Unbounded as err:
        lo, hi = err.lo, err.hi
        add(AssumptionResult("h2", "fail", str(err)))
    except NotPositiveOnUnit as err:
        lo, hi = 0.0, 1.0
        add(AssumptionResult("h2", "fail", str(err)))
    same = [(p, q) for i, p in enumerate(interp.params) for q in interp.params[i + 1:]
            if interp.coeffs(p) == interp.coeffs(q)]
    crossings = 0
    for i, p in enumerate(interp.params):
        for q in interp.params[i + 1:]:
            d = np.subtract(interp.coeffs(p), interp.coeffs(q))
            if d.any():
                crossings += len(_real_roots(*d))
    if same:
        add(AssumptionResult("h3", "fail" if strict else "ok",
                             f"{len(same)} identical pairs, first {same[0][0]} and {same[0][1]}"))
    else:
        add(AssumptionResult("h3", "ok", f"{crossings} crossings between components"))
    s_lo, s_hi = (lo, hi) if math.isfinite(lo) and math.isfinite(hi) else (0.0, 1.0)
    if rcp is None:
        for h in ("h4", "h5", "h6"):
            add(AssumptionResult(h, "not checkable", "no plan given"))
    else:
        a1 = rcp.first_instruction_param()
        roots = _roots_in(interp.coeffs(a1), s_lo, s_hi) if a1 in interp.params else []
        add(AssumptionResult("h4", "fail" if roots else "ok",
                             f"{a1} vanishes at t={roots[0]:.6g}" if roots else f"{a1} > 0 on the support"))
        bad5, bad6 = [], []
        for i, ins in enumerate(rcp.instructions):
            if i == 0 or ins.kind not in cplan.CC_LIKE + (cplan.INTER_CS,):
                continue
            if ins.kind == cplan.INTER_CS:
                ss = next(x for x in rcp.instructions[:i] if x.out == ins.args[0])
                kept = [ss.args[1], ss.args[3]]
            else:
                kept = [ins.kept[1]]
            moving = ins.moving[1]
            if moving in interp.params and ins.kind != cplan.INTER_CS:
                r2 = _roots_in(interp.coeffs(kept[0]), s_lo, s_hi)
                r4 = _roots_in(interp.coeffs(moving), s_lo, s_hi)
                common = [x for x in r2 if any(abs(x - y) <= 1e-9 for y in r4)]
                if common:
                    bad5.append(f"instruction {i} at t={common[0]:.6g}")
            elif moving in rcp.driving:
                for k in kept:
                    if k in interp.params:
                        r = _roots_in(interp.coeffs(k), s_lo, s_hi)
                        if r:
                            bad6.append(f"{k} of instruction {i} at t={r[0]:.6g}")
        add(AssumptionResult("h5", "fail" if bad5 else "ok", "; ".join(bad5) or "no double null radii"))
        add(AssumptionResult("h6", "fail" if bad6 else "ok",
                             "; ".join(bad6) or "kept radii of driving instructions stay positive"))
    st = check_structural(pdsp)
    add(AssumptionResult("structure", "ok" if st.ok else "fail",
                         f"{st.n_constraints} constraints, {st.n_free} free coordinates, "
                         f"matching {st.matching_size}"))
    sv = np.linalg.svd(jac[:, :-1], compute_uv=False) if jac.shape[0] else np.array([1.0])
    cond = sv[-1] / sv[0] if sv.size and sv[0] > 0 else 0.0
    add(AssumptionResult("start", "ok" if jac.shape[0] == jac.shape[1] - 1 and cond > 1e-10 else "fail",
                         f"smallest/largest singular value {cond:.3g} at the sketch"))
    if rcp is None:
        add(AssumptionResult("plan", "not checkable", "no plan given"))
        add(AssumptionResult("boundary", "not checkable", "no plan given"))
        return rep
    try:
        cplan.validate_rcp(rcp)
        add(AssumptionResult("plan", "ok"))
    except cplan.InvariantViolation as err:
        add(AssumptionResult("plan", "fail", str(err)))
    try:
        g = cplan.gamma_I(rcp, {p: tuple(map(float, sketch[p])) for p in pdsp.points})
        add(AssumptionResult("boundary", "ok" if g > alpha else "fail",
                             f"boundary distance {g:.3g} at the sketch, alpha {alpha}"))
    except (ArithmeticError, cplan.PlanError) as err:  # degenerate sketch geometry
        add(AssumptionResult("boundary", "fail", str(err)))
    return rep


def sketch_values(pdsp: Pdsp, sketch: Mapping[str, Sequence[float]]) -> Dict[str, float]:
    return measure_params(pdsp, sketch)
