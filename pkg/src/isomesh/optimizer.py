"""Limited-memory BFGS with barrier continuation."""
from __future__ import annotations

import logging
import time
from collections import deque
from dataclasses import dataclass, field, asdict

import numpy as np

from .mesh import SubdividedMesh
from .metrics import MetricField
from .objective import Objective, TargetSpec

__all__ = [
    "TerminationCriteria",
    "StageStats",
    "RunStats",
    "minimize_stage",
    "next_epsilon",
    "continuation_run",
    "EDGE_WEIGHTINGS",
]

log = logging.getLogger("isomesh.optimizer")


@dataclass
class TerminationCriteria:
    rel_cost_decrease_tol: float = 1e-6
    grad_maxnorm_tol: float = 1e-10
    step_norm_tol: float = 1e-8
    max_iters: int = 5000
    history: int = 10
    armijo_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_backtracks: int = 60
    precondition_every: int = 10
    precondition: bool = True
    max_vertex_step: float | None = 0.5  # fraction of the shortest incident edge; None disables

    def __post_init__(self):
        for name in ("rel_cost_decrease_tol", "grad_maxnorm_tol", "step_norm_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_vertex_step is not None and not self.max_vertex_step > 0:
            raise ValueError("max_vertex_step must be positive or null")


@dataclass
class StageStats:
    stage: int
    epsilon: float
    iterations: int
    E_initial: float
    E_final: float
    reason: str
    evaluations: int = 0
    min_area_ratio: float = float("nan")
    normalized: bool = False


@dataclass
class RunStats:
    """Per-stage statistics.

    ``E_start`` and ``E_end`` are the unnormalised costs of the starting and
    final meshes, the latter at the last stage's epsilon.
    """

    stages: list = field(default_factory=list)
    wall_time: float = 0.0
    E_start: float = float("nan")
    E_end: float = float("nan")

    @property
    def E_initial(self) -> float:
        if np.isfinite(self.E_start) or not self.stages:
            return self.E_start
        return self.stages[0].E_initial

    @property
    def E_final(self) -> float:
        if not np.isnan(self.E_end) or not self.stages:
            return self.E_end
        return self.stages[-1].E_final

    @property
    def failed(self) -> bool:
        return any(s.reason == "line_search_failure" for s in self.stages)

    def to_dict(self, include_time: bool = True) -> dict:
        out = {"E_initial": self.E_initial, "E_final": self.E_final,
               "stages": [asdict(s) for s in self.stages]}
        if include_time:
            out["wall_time"] = self.wall_time
        return out


def _two_loop(g, S, Y, H0=None):
    m = len(S)
    rho = [1.0 / (Y[i] @ S[i]) for i in range(m)]
    alpha = [0.0] * m
    q = g.copy()
    for i in reversed(range(m)):
        alpha[i] = rho[i] * (S[i] @ q)
        q -= alpha[i] * Y[i]
    if H0 is not None:
        q = H0(q)
    elif m:
        q *= (S[-1] @ Y[-1]) / (Y[-1] @ Y[-1])
    for i in range(m):
        b = rho[i] * (Y[i] @ q)
        q += (alpha[i] - b) * S[i]
    return q


def _line_search(fun, x, d, E, g, alpha0, crit):
    """Strong-Wolfe bracketing and zoom; non-finite trials count as overshoots.

    Returns ``(alpha, E_new, g_new, n_evals)`` or ``None`` when no acceptable
    point is found within ``crit.max_backtracks`` evaluations.
    """
    c1, c2 = crit.armijo_c1, crit.wolfe_c2
    slope0 = float(g @ d)
    n = 0
    best = None  # best point satisfying sufficient decrease

    def trial(a):
        nonlocal n, best
        n += 1
        En, gn = fun(x + a * d)
        ok = bool(np.isfinite(En)) and En <= E + c1 * a * slope0
        if ok and (best is None or En < best[1]):
            best = (a, En, gn)
        return En, gn, ok

    def zoom(lo, E_lo, s_lo, hi, E_hi):
        while n < crit.max_backtracks:
            width = hi - lo
            a = None
            if np.isfinite(E_hi):
                # quadratic through (lo, E_lo, s_lo) and (hi, E_hi)
                denom = 2.0 * (E_hi - E_lo - s_lo * width)
                if denom > 0:
                    a = lo - s_lo * width * width / denom
            if a is None or not (min(lo, hi) + 0.1 * abs(width) <= a <= max(lo, hi) - 0.1 * abs(width)):
                a = lo + 0.5 * width
            En, gn, ok = trial(a)
            if not ok or En >= E_lo:
                hi, E_hi = a, En
                continue
            s = float(gn @ d)
            if abs(s) <= -c2 * slope0:
                return a, En, gn
            if s * (hi - lo) >= 0:
                hi, E_hi = lo, E_lo
            lo, E_lo, s_lo = a, En, s
        return None

    a_prev, E_prev, s_prev = 0.0, E, slope0
    a = alpha0
    res = None
    while n < crit.max_backtracks:
        En, gn, ok = trial(a)
        if not ok or (a_prev > 0 and En >= E_prev):
            res = zoom(a_prev, E_prev, s_prev, a, En)
            break
        s = float(gn @ d)
        if abs(s) <= -c2 * slope0:
            res = (a, En, gn)
            break
        if s >= 0:
            res = zoom(a, En, s, a_prev, E_prev)
            break
        a_prev, E_prev, s_prev = a, En, s
        a *= 2.0
    if res is None:
        res = best
    if res is None:
        return None
    return res[0], res[1], res[2], n


def _step_norm(s):
    # largest vertex displacement for planar coordinates, plain max otherwise
    if s.size % 2:
        return float(np.abs(s).max())
    return float(np.sqrt((s.reshape(-1, 2) ** 2).sum(axis=1).max()))


def minimize_stage(fun, x0, criteria: TerminationCriteria | None = None,
                   initial_step: float = 1e-2, stage: int = 0, epsilon: float = 0.0,
                   preconditioner=None):
    """Minimise ``fun(x) -> (E, grad)`` from ``x0``.

    Trial points with non-finite cost are rejected by the line search, so
    every accepted iterate stays on the finite side of the barrier. The first
    step (and any step after a history reset) moves the coordinate with the
    largest gradient by ``initial_step``.
    ``preconditioner(x, damping)``, if given, returns a function applying an
    initial inverse-Hessian approximation; it seeds the two-loop recursion
    in place of the usual scalar scaling. It is rebuilt every
    ``criteria.precondition_every`` iterations, and immediately whenever the
    damping changes: short accepted steps raise the damping tenfold, full
    unit steps lower it.
    Returns the final coordinates and a :class:`StageStats`.
    """
    crit = criteria or TerminationCriteria()
    x = np.array(x0, dtype=float)
    E, g = fun(x)
    if not np.isfinite(E):
        raise ValueError("initial cost is not finite")
    E0 = E
    S, Y = deque(maxlen=crit.history), deque(maxlen=crit.history)
    n_eval = 1
    reason = "max_iterations"
    it = 0
    H0 = None
    damping, refresh = 0.0, False
    restarted = False
    for it in range(crit.max_iters + 1):
        gmax = float(np.abs(g).max()) if g.size else 0.0
        if gmax <= crit.grad_maxnorm_tol:
            reason = "gradient_tolerance"
            break
        if it == crit.max_iters:
            break
        if preconditioner is not None and (refresh or it % crit.precondition_every == 0):
            H0 = preconditioner(x, damping)
            refresh = False
        if H0 is not None:
            d = -_two_loop(g, S, Y, H0)
        else:
            d = -_two_loop(g, S, Y) if S else -g * (initial_step / gmax)
        if g @ d >= 0 and H0 is not None:
            S.clear()
            Y.clear()
            d = -H0(g)
        if g @ d >= 0:
            H0 = None
            S.clear()
            Y.clear()
            d = -g * (initial_step / gmax)
        alpha0 = 1.0
        if crit.max_vertex_step is not None and hasattr(fun, "step_limit"):
            alpha0 = fun.step_limit(x, d, crit.max_vertex_step)
        found = _line_search(fun, x, d, E, g, alpha0, crit)
        if found is None:
            reason = "line_search_failure"
            break
        alpha, En, gn, k = found
        n_eval += k
        if H0 is not None:
            if alpha < 0.25:
                damping, refresh = max(10.0 * damping, 1e-4), True
            elif alpha >= 1.0 and k == 1 and damping > 0:
                damping, refresh = (damping / 10.0 if damping > 1e-6 else 0.0), True
        s = alpha * d
        y = gn - g
        if s @ y > 1e-12 * np.sqrt((s @ s) * (y @ y)):
            S.append(s)
            Y.append(y)
        rel = (E - En) / E if E > 0 else 0.0
        step = _step_norm(s)
        x, E, g = x + s, En, gn
        if it % 100 == 0:
            log.debug("stage %d it %d E=%.6e |g|inf=%.3e alpha=%.3g damping=%.1e", stage, it, E, gmax, alpha, damping)
        if rel <= crit.rel_cost_decrease_tol:
            # a step cut short by the line search (often by the domain or the
            # barrier) earns one restart from a fresh history before we stop
            if alpha < 1.0 and not restarted:
                S.clear()
                Y.clear()
                restarted = refresh = True
                continue
            reason = "function_tolerance"
            it += 1
            break
        restarted = False
        if step <= crit.step_norm_tol:
            reason = "parameter_tolerance"
            it += 1
            break
    log.info("stage %d eps=%.4f: %d iterations, E %.4e -> %.4e (%s)", stage, epsilon, it, E0, E, reason)
    return x, StageStats(stage, epsilon, it, float(E0), float(E), reason, n_eval)


def next_epsilon(min_ratio: float, cap: float = 0.99) -> float:
    """Barrier position for the next stage: ``min(cap, cap * min_ratio)``, never below 0."""
    return float(max(0.0, min(cap, cap * min_ratio)))


def _typical_step(mesh: SubdividedMesh) -> float:
    e = mesh.points[mesh.edges[:, 1]] - mesh.points[mesh.edges[:, 0]]
    return 0.1 * float(np.median(np.linalg.norm(e, axis=1)))


def _run_stage(mesh, obj, crit, step0, stage, eps):
    try:
        pre = obj.gauss_newton_solver if crit.precondition else None
        x, st = minimize_stage(obj, mesh.points.ravel(), crit, step0, stage, eps, pre)
    except ValueError as exc:
        log.error("stage %d could not start: %s", stage, exc)
        E = obj.value(mesh.points.ravel())
        st = StageStats(stage, eps, 0, E, E, "infeasible_start")
        x = mesh.points.ravel()
    mesh.points = x.reshape(-1, 2)
    st.min_area_ratio = obj.breakdown().min_area_ratio
    st.normalized = obj.normalize_lengths
    return st


EDGE_WEIGHTINGS = ("literal", "warm_start", "normalized")


def continuation_run(mesh: SubdividedMesh, field: MetricField, targets: TargetSpec,
                     criteria: TerminationCriteria | None = None, n_moves: int = 5,
                     edge_weighting: str = "warm_start"):
    """Run the epsilon = 0 stage followed by ``n_moves`` barrier moves.

    ``edge_weighting`` picks the edge term of each stage:

    * ``"literal"``: ``(l^2 - t^2)^2`` throughout;
    * ``"warm_start"``: an extra epsilon = 0 stage on the length-normalised
      cost ``(l^2/t^2 - 1)^2`` comes first (reported as stage -1), then the
      literal stages;
    * ``"normalized"``: every stage uses the length-normalised cost.

    The unnormalised edge term is O(1/N^4) per edge against an O(1) barrier
    per subtriangle, so on its own it lets meshes far from unit size settle
    into equal-area minima with poor shapes.
    ``mesh.points`` is updated in place with the final iterate. Returns :class:`RunStats`.
    """
    if edge_weighting not in EDGE_WEIGHTINGS:
        raise ValueError(f"edge_weighting must be one of {EDGE_WEIGHTINGS}")
    crit = criteria or TerminationCriteria()
    stats = RunStats()
    t0 = time.perf_counter()
    stats.E_start = Objective(mesh, field, targets).value(mesh.points.ravel())
    step0 = _typical_step(mesh)
    if edge_weighting == "warm_start":
        obj = Objective(mesh, field, targets, 0.0, normalize_lengths=True)
        stats.stages.append(_run_stage(mesh, obj, crit, step0, -1, 0.0))
    norm = edge_weighting == "normalized"
    eps = 0.0
    for stage in range(n_moves + 1):
        obj = Objective(mesh, field, targets, eps, normalize_lengths=norm)
        st = _run_stage(mesh, obj, crit, step0, stage, eps)
        stats.stages.append(st)
        if np.isfinite(st.min_area_ratio):
            eps = next_epsilon(st.min_area_ratio)
    stats.E_end = Objective(mesh, field, targets, stats.stages[-1].epsilon).value(mesh.points.ravel())
    stats.wall_time = time.perf_counter() - t0
    return stats
