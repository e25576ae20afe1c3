"""Predictor/corrector path tracking with on-the-fly plan changes.

The same pseudo-arclength loop drives both the full-space homotopy and the
reduced one.  In reduced space the plan is rewritten whenever the tracked
figure comes within ``alpha`` of a boundary configuration, or when a removed
length overtakes its kept counterpart; the tangent orientation is carried
across the change by pushing the old tangent through the map between the two
coordinate systems.
"""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, Optional, Sequence, TextIO

import numpy as np

from . import cplan
from .cplan import OutsideDomain, Rcp
from .homotopy import FullHomotopy, Interpolation, ReducedHomotopy, jacobian_fd
from .model import Figure, Pdsp, Reference, diameter, fix_reference, max_point_distance

log = logging.getLogger(__name__)


class TrackingError(RuntimeError):
    """Base class; ``partial`` holds the result gathered so far."""

    partial: "SolveResult | None" = None


class StuckStep(TrackingError):
    pass


class SingularTangent(TrackingError):
    pass


class IterationBudgetExceeded(TrackingError):
    pass


class RefinementDiverged(TrackingError):
    pass


class ZeroImage(TrackingError):
    pass


class CannotEscapeBoundary(TrackingError):
    pass


@dataclass
class TrackerConfig:
    alpha: float = 0.1
    delta_max: float | None = None  # 0.05 in reduced space, 0.1 in full space
    delta_min: float = 1e-10
    newton_tol: float = 1e-10
    newton_step_tol: float = 1e-8
    max_newton: int = 20
    max_iterations: int = 1_000_000
    loop_tol: float = 1e-6  # relative to the sketch diameter
    dedup_tol: float = 1e-6
    # a corrected point farther than this fraction of the step from its
    # prediction, or a tangent turning by more than acos(min_tangent_cos),
    # means the corrector may have jumped to another path
    max_correction: float = 0.5
    min_tangent_cos: float = 0.9
    # successive Newton updates must shrink by this factor (until they are
    # below newton_step_tol); slow contraction means a far or foreign basin
    max_contraction: float = 0.5
    orientation_eps: float = 1e-6


DEFAULT_DELTA_MAX_REDUCED = 0.05
DEFAULT_DELTA_MAX_FULL = 0.1


@dataclass
class ChangeEvent:
    iteration: int
    index: int
    reason: str  # "gamma", "sc1" or "restore"
    action: str
    t: float
    d_before: int
    d_after: int
    # post-change checks: boundary distance, (sc1), drift of the rebuilt figure
    gamma_after: float = math.nan
    sc1_after: bool = False
    figure_error: float = math.nan


@dataclass
class SolveResult:
    solutions: List[Figure] = field(default_factory=list)
    raw_solutions: int = 0
    iterations: int = 0
    attempts: int = 0
    rcp_changes: int = 0
    events: List[ChangeEvent] = field(default_factory=list)
    loop_closed: bool = False
    min_delta: float = math.inf
    d_history: List[int] = field(default_factory=list)
    elapsed: float = 0.0
    rcp: Rcp | None = None

    @property
    def avg_d(self) -> float:
        return float(np.mean(self.d_history)) if self.d_history else 0.0

    @property
    def max_d(self) -> int:
        return max(self.d_history, default=0)


# -- elementary steps -------------------------------------------------------


def tangent(jac: np.ndarray, orient: np.ndarray | None = None) -> np.ndarray:
    """Unit kernel vector of an ``n x (n+1)`` Jacobian.

    Oriented along ``orient`` when given, else with a positive ``t`` component.
    """
    n = jac.shape[0]
    if n == 0:
        v = np.ones(1)
    else:
        _, s, vt = np.linalg.svd(jac)
        if not s[-1] > 1e-12 * s[0]:
            raise SingularTangent(f"Jacobian rank deficient (singular values {s[-1]:.3g}/{s[0]:.3g})")
        v = vt[-1].copy()
    if orient is None:
        if v[-1] == 0.0:
            raise SingularTangent("tangent has no t component at the start")
        return v if v[-1] > 0 else -v
    return v if v @ orient >= 0 else -v


def correct(f: Callable, jacf: Callable, y_pred: np.ndarray, tau: np.ndarray,
            cfg: TrackerConfig) -> Optional[np.ndarray]:
    """Newton on ``[f(z) = 0; tau . (z - y_pred) = 0]``; None on failure."""
    z = y_pred.copy()
    prev = math.inf
    try:
        fz = f(z)
        for _ in range(cfg.max_newton):
            jac = jacf(z)
            a = np.vstack([jac, tau])
            rhs = np.append(fz, tau @ (z - y_pred))
            dz = np.linalg.solve(a, -rhs)
            size = float(np.linalg.norm(dz))
            if size > cfg.newton_step_tol and size > cfg.max_contraction * prev:
                return None
            prev = size
            z = z + dz
            fz = f(z)
            if not np.all(np.isfinite(fz)):
                return None
            if np.max(np.abs(fz), initial=0.0) <= cfg.newton_tol and np.max(np.abs(dz)) <= cfg.newton_step_tol:
                return z
    except (OutsideDomain, np.linalg.LinAlgError):
        return None
    return None


def step(f: Callable, jacf: Callable, y: np.ndarray, tau: np.ndarray, delta: float,
         cfg: TrackerConfig):
    """One predictor/corrector step; returns ``(z, new tangent)`` or None."""
    y_pred = y + delta * tau
    z = correct(f, jacf, y_pred, tau, cfg)
    if z is None or np.linalg.norm(z - y_pred) > cfg.max_correction * delta:
        return None
    try:
        tz = tangent(jacf(z), tau)
    except (SingularTangent, OutsideDomain):
        return None
    if tz @ tau < cfg.min_tangent_cos:
        return None
    return z, tz


def crosses(t_prev: float, t_new: float, target: float) -> bool:
    """Strict crossing rule: landing exactly on ``target`` counts once."""
    return (t_prev < target <= t_new) or (t_prev > target >= t_new)


def detect_crossing(f: Callable, jacf: Callable, y_prev: np.ndarray, y_new: np.ndarray,
                    target: float, cfg: TrackerConfig) -> Optional[np.ndarray]:
    """Point of the path at ``t = target`` between two accepted points.

    Newton with ``t`` pinned, started from the secant interpolation.
    """
    if not crosses(y_prev[-1], y_new[-1], target):
        return None
    if y_new[-1] == target:
        return y_new.copy()
    s = (target - y_prev[-1]) / (y_new[-1] - y_prev[-1])
    w = y_prev + s * (y_new - y_prev)
    w[-1] = target
    try:
        fw = f(w)
        for _ in range(cfg.max_newton):
            if np.max(np.abs(fw), initial=0.0) <= 0.01 * cfg.newton_tol:
                return w
            jac = jacf(w)[:, :-1]
            dw = np.linalg.solve(jac, -fw)
            w = w.copy()
            w[:-1] += dw
            fw = f(w)
            if np.max(np.abs(fw), initial=0.0) <= cfg.newton_tol and np.max(np.abs(dw), initial=0.0) <= 1e-12:
                return w
    except (OutsideDomain, np.linalg.LinAlgError) as err:
        raise RefinementDiverged(f"refinement at t={target} failed: {err}") from None
    if np.max(np.abs(fw), initial=0.0) <= cfg.newton_tol:
        return w
    raise RefinementDiverged(f"refinement at t={target} did not converge")


def polish(f: Callable, jacf: Callable, y: np.ndarray, steps: int = 3) -> np.ndarray:
    """A few Newton steps with ``t`` fixed, kept while they reduce the residual.

    The corrector stops at ``newton_tol``; a plan change that turns a removed
    constraint back into an instruction would otherwise move the figure by
    that residual times the conditioning of the new instruction.
    """
    best = y
    try:
        fb = f(y)
        rb = np.max(np.abs(fb), initial=0.0)
        for _ in range(steps):
            if rb == 0.0:
                break
            w = best.copy()
            w[:-1] += np.linalg.solve(jacf(best)[:, :-1], -fb)
            fw = f(w)
            rw = np.max(np.abs(fw), initial=0.0)
            if not rw < rb:
                break
            best, fb, rb = w, fw, rw
    except (OutsideDomain, np.linalg.LinAlgError):
        pass
    return best


def transfer_orientation(old: ReducedHomotopy, new_rcp: Rcp, y_old: np.ndarray, tau_old: np.ndarray,
                         eps: float = 1e-6, y_prev: np.ndarray | None = None) -> np.ndarray:
    """Direction of travel expressed in the new plan's coordinates.

    Finite difference of ``phi'_new o phi_old``: over the last accepted step
    ``y_prev -> y_old`` when given, else along ``tau_old`` with a small probe.
    The secant only uses points already on the path, so it stays reliable
    when the old plan is close to degenerate and its tangent is inaccurate.
    """
    fig0 = old.figure(y_old)
    v0, _ = cplan.phi_prime(fig0, 0.0, new_rcp)
    w = None
    if y_prev is not None and float(np.linalg.norm(y_old - y_prev)) > 0.0:
        vp, _ = cplan.phi_prime(old.figure(y_prev), 0.0, new_rcp)
        w = np.append(v0 - vp, y_old[-1] - y_prev[-1])
    else:
        h = eps * max(1.0, float(np.linalg.norm(y_old)))
        try:
            fig1 = old.figure(y_old + h * tau_old)
        except OutsideDomain:
            h = -h
            fig1 = old.figure(y_old + h * tau_old)
        v1, _ = cplan.phi_prime(fig1, 0.0, new_rcp)
        w = np.append((v1 - v0) / h, tau_old[-1])
    nw = np.linalg.norm(w)
    if nw == 0.0 or not math.isfinite(nw):
        raise ZeroImage("orientation maps to zero in the new plan")
    return w / nw


def dedup(figures: Sequence[Figure], tol: float = 1e-6) -> List[Figure]:
    out: List[Figure] = []
    for f in figures:
        if all(max_point_distance(f, g) > tol for g in out):
            out.append(f)
    if len(out) < len(figures):
        log.info("%d duplicate solutions dropped (%d raw, %d distinct)",
                 len(figures) - len(out), len(figures), len(out))
    return out


def mirror(fig: Figure, reference: Reference) -> Figure:
    """Reflection fixing the reference frame's line (2D) or plane (3D)."""
    out = {}
    for p, x in fig.items():
        q = list(reference.local(x))
        q[-1] = -q[-1]
        out[p] = reference.world(q)
    return out


def orbit_distinct(figures: Sequence[Figure], reference: Reference, tol: float = 1e-6) -> List[Figure]:
    """Solutions distinct up to the reflection through the reference frame."""
    out: List[Figure] = []
    for f in figures:
        m = mirror(f, reference)
        if all(max_point_distance(f, g) > tol and max_point_distance(m, g) > tol for g in out):
            out.append(f)
    return out


# -- tracking loops ---------------------------------------------------------


class _Trace:
    def __init__(self, sink: TextIO | None):
        self.writer = csv.writer(sink) if sink is not None else None
        if self.writer:
            self.writer.writerow(["iter", "t", "delta", "gamma", "d"])

    def row(self, it, t, delta, gamma, d):
        if self.writer:
            self.writer.writerow([it, repr(float(t)), repr(float(delta)), repr(float(gamma)), d])


def _fail(err: TrackingError, result: SolveResult, t0: float) -> TrackingError:
    result.elapsed = time.perf_counter() - t0
    err.partial = result
    return err


def _loop_tol(cfg: TrackerConfig, sketch_fig: Figure) -> float:
    return cfg.loop_tol * max(diameter(sketch_fig), 1e-300)


def solve(pdsp: Pdsp, rcp: Rcp, sketch: Mapping[str, Sequence[float]], interp: Interpolation,
          config: TrackerConfig | None = None, trace: TextIO | None = None) -> SolveResult:
    """Track the reduced homotopy from the sketch until the path returns to it.

    Every crossing of ``t = 1`` yields a solution.  ``rcp`` is mutated.
    """
    cfg = config or TrackerConfig()
    dmax = cfg.delta_max if cfg.delta_max is not None else DEFAULT_DELTA_MAX_REDUCED
    t0 = time.perf_counter()
    res = SolveResult(rcp=rcp)
    tr = _Trace(trace)
    sk = {p: tuple(float(v) for v in sketch[p]) for p in pdsp.points}
    eps_loop = _loop_tol(cfg, sk)

    def rebuild(fig, t):
        vals = interp.values(t)
        aplus, _ = cplan.phi_prime(fig, t, rcp)
        vals.update(zip(rcp.driving, aplus.tolist()))
        branch = cplan.identify_branch(rcp, vals, fig)
        hr = ReducedHomotopy(rcp, interp, branch)
        return hr, np.append(aplus, t)

    def needs_change(fig, t) -> bool:
        return cplan.gamma_I(rcp, fig) <= cfg.alpha or cplan.check_sc1(rcp, interp.values(t))

    def do_change(fig, y, it):
        d_before = rcp.d
        sc1 = cplan.check_sc1(rcp, interp.values(float(y[-1])))
        try:
            _, actions = cplan.change_rcp(rcp, fig, interp.values(float(y[-1])), cfg.alpha)
        except (cplan.CannotEscape, cplan.ZeroRadius) as err:
            raise _fail(CannotEscapeBoundary(str(err)), res, t0) from None
        res.rcp_changes += 1
        t = float(y[-1])
        cplan.validate_rcp(rcp)
        hr_new, y_new = rebuild(fig, t)
        drift = max_point_distance(hr_new.figure(y_new), fig)
        gamma = cplan.gamma_I(rcp, fig)
        sc1_after = cplan.check_sc1(rcp, interp.values(t))
        for a in actions:
            reason = "restore" if a.action == "restore" else ("sc1" if sc1 and a.action == "redrive" else "gamma")
            res.events.append(ChangeEvent(it, a.index, reason, a.action, t, d_before, rcp.d,
                                          gamma, sc1_after, drift))
        log.debug("plan change at t=%.6g: %s (d %d -> %d)", t, actions, d_before, rcp.d)
        return hr_new, y_new

    hr, y = rebuild(sk, 0.0)
    if needs_change(sk, 0.0):
        hr, y = do_change(sk, y, 0)
    try:
        tau = tangent(hr.jacobian(y))
    except SingularTangent as err:
        raise _fail(err, res, t0) from None
    delta = dmax
    raw: List[Figure] = []
    y_prev = None
    while True:
        if res.attempts >= cfg.max_iterations:
            res.solutions = dedup(raw, cfg.dedup_tol)
            raise _fail(IterationBudgetExceeded(f"{res.attempts} steps without closing the loop"), res, t0)
        res.attempts += 1
        out = step(hr, hr.jacobian, y, tau, delta, cfg)
        if out is None:
            if delta >= 2 * cfg.delta_min:
                delta /= 2
                res.min_delta = min(res.min_delta, delta)
                continue
            res.solutions = dedup(raw, cfg.dedup_tol)
            raise _fail(StuckStep(f"step size below {cfg.delta_min} at t={y[-1]:.6g}"), res, t0)
        z, tz = out
        res.iterations += 1
        res.min_delta = min(res.min_delta, delta)
        res.d_history.append(rcp.d)
        fig = hr.figure(z)
        gamma = cplan.gamma_I(rcp, fig)
        tr.row(res.iterations, z[-1], delta, gamma, rcp.d)
        try:
            w1 = detect_crossing(hr, hr.jacobian, y, z, 1.0, cfg)
            if w1 is not None:
                raw.append(hr.figure(w1))
            w0 = detect_crossing(hr, hr.jacobian, y, z, 0.0, cfg)
        except RefinementDiverged as err:
            res.solutions = dedup(raw, cfg.dedup_tol)
            raise _fail(err, res, t0) from None
        if w0 is not None and max_point_distance(hr.figure(w0), sk) <= eps_loop:
            res.loop_closed = True
            break
        y_prev = y
        if gamma <= cfg.alpha or cplan.check_sc1(rcp, interp.values(float(z[-1]))):
            z = polish(hr, hr.jacobian, z)
            fig = hr.figure(z)
            old, z_old = ReducedHomotopy(rcp.copy(), interp, hr.branch), z
            hr, z = do_change(fig, z, res.iterations)
            try:
                orient = transfer_orientation(old, rcp, z_old, tz, cfg.orientation_eps, y_prev)
                tz = tangent(hr.jacobian(z), orient)
            except (ZeroImage, SingularTangent) as err:
                res.solutions = dedup(raw, cfg.dedup_tol)
                raise _fail(err, res, t0) from None
            y_prev = None
        y, tau = z, tz
        if 2 * delta <= dmax:
            delta *= 2
    res.raw_solutions = len(raw)
    res.solutions = dedup(raw, cfg.dedup_tol)
    res.elapsed = time.perf_counter() - t0
    return res


def track_full_space(pdsp: Pdsp, sketch: Mapping[str, Sequence[float]], interp: Interpolation,
                     config: TrackerConfig | None = None, trace: TextIO | None = None,
                     reference: Reference | None = None) -> SolveResult:
    """Baseline: track the homotopy in the free coordinates of every point."""
    cfg = config or TrackerConfig()
    dmax = cfg.delta_max if cfg.delta_max is not None else DEFAULT_DELTA_MAX_FULL
    t0 = time.perf_counter()
    res = SolveResult()
    tr = _Trace(trace)
    ref = reference or fix_reference(pdsp, sketch)
    sk = {p: tuple(float(v) for v in sketch[p]) for p in pdsp.points}
    eps_loop = _loop_tol(cfg, sk)
    hf = FullHomotopy(pdsp, ref, interp)
    y = hf.start(sk)
    try:
        tau = tangent(hf.jacobian(y))
    except SingularTangent as err:
        raise _fail(err, res, t0) from None
    delta = dmax
    raw: List[Figure] = []
    while True:
        if res.attempts >= cfg.max_iterations:
            res.solutions = dedup(raw, cfg.dedup_tol)
            raise _fail(IterationBudgetExceeded(f"{res.attempts} steps without closing the loop"), res, t0)
        res.attempts += 1
        out = step(hf, hf.jacobian, y, tau, delta, cfg)
        if out is None:
            if delta >= 2 * cfg.delta_min:
                delta /= 2
                res.min_delta = min(res.min_delta, delta)
                continue
            res.solutions = dedup(raw, cfg.dedup_tol)
            raise _fail(StuckStep(f"step size below {cfg.delta_min} at t={y[-1]:.6g}"), res, t0)
        z, tz = out
        res.iterations += 1
        res.min_delta = min(res.min_delta, delta)
        tr.row(res.iterations, z[-1], delta, math.nan, 0)
        try:
            w1 = detect_crossing(hf, hf.jacobian, y, z, 1.0, cfg)
            if w1 is not None:
                raw.append(hf.figure(w1))
            w0 = detect_crossing(hf, hf.jacobian, y, z, 0.0, cfg)
        except RefinementDiverged as err:
            res.solutions = dedup(raw, cfg.dedup_tol)
            raise _fail(err, res, t0) from None
        if w0 is not None and max_point_distance(hf.figure(w0), sk) <= eps_loop:
            res.loop_closed = True
            break
        y, tau = z, tz
        if 2 * delta <= dmax:
            delta *= 2
    res.raw_solutions = len(raw)
    res.solutions = dedup(raw, cfg.dedup_tol)
    res.elapsed = time.perf_counter() - t0
    return res
