"""Shooting conditions for unconstrained-to-constrained junctions.

Two entry types are supported:

* barycentric entry (Case I): unknowns ``(px, py, a, t1)``; equations are
  control continuity and ``udot(t1+) - udot(t1-) = mudot(t1+) r(t1)``;
* disk entry (fixed distance, also used for collision avoidance): unknowns
  ``(phi, a, t1)``; equations are control continuity and continuity of
  ``udot . q_hat``.

The pre-junction arc is always the minimum-energy cubic from the initial state
to the entry state, so the unknowns fully determine the trajectory.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .arcs import Arc, DiskArc, SpiralArc, UnconstrainedArc, coast_arc, solve_unconstrained_bvp
from .constraints import ConstraintCase, check_theorem1, eval_g, mu_dot_plus
from .core import (
    AgentState,
    BarycentricSpec,
    DomainError,
    ReferenceTrajectory,
    Vec2,
    cross,
    junction_gap,
    norm,
    relative_state,
)


class JunctionError(RuntimeError):
    """Base class for shooting failures."""


class NoConvergence(JunctionError):
    def __init__(self, message, best_x=None, best_norm=math.inf):
        super().__init__(message)
        self.best_x = best_x
        self.best_norm = best_norm


class SingularSystem(JunctionError):
    pass


class FeasibilityError(JunctionError):
    pass


class InfeasibleStart(DomainError):
    """The initial state violates the constraint (no feasible trajectory at t0)."""

    def __init__(self, message, value):
        super().__init__(message)
        self.value = value


@dataclass(frozen=True)
class SolverSettings:
    tol: float = 1e-9
    max_iter: int = 100
    max_halvings: int = 40
    # one-sided difference step for udot(t1+), times the problem time scale
    fd_step: float = 1e-4
    jac_step: float = 1e-7
    mu_dot_formula: str = "paper"
    chirality: Optional[str] = None  # "+1", "-1", "auto" or None (angular-momentum rule)
    multistart: int = 8
    seed: int = 0
    certify_gap: float = 1e-6


# ---------------------------------------------------------------------------
# entry states
# ---------------------------------------------------------------------------


def entry_velocity_barycentric(r: Vec2, a: float, kappa: float, chirality: int) -> Vec2:
    """Relative velocity of speed ``a`` that puts ``r`` exactly on the Case-I surface."""
    b = norm(r)
    if not b > 0.0:
        raise DomainError("entry point coincides with the reference")
    if not a > 0.0:
        raise DomainError(f"barycentric entry needs a > 0, got {a}")
    rh = np.asarray(r, float) / b
    perp = np.array([-rh[1], rh[0]])
    return -a * kappa * rh + chirality * a * math.sqrt(1.0 - kappa * kappa) * perp


def entry_velocity_disk(entry_angle: float, a: float, chirality: int) -> Vec2:
    """Tangential relative velocity of speed ``a`` at polar angle ``entry_angle``."""
    if a < 0.0:
        raise DomainError("relative speed must be nonnegative")
    return chirality * a * np.array([-math.sin(entry_angle), math.cos(entry_angle)])


@dataclass(frozen=True)
class BarycentricJunctionUnknowns:
    entry_position: Vec2
    a: float
    t1: float

    def as_array(self) -> np.ndarray:
        return np.array([self.entry_position[0], self.entry_position[1], self.a, self.t1])

    @classmethod
    def from_array(cls, z) -> "BarycentricJunctionUnknowns":
        return cls(np.array([z[0], z[1]], float), float(z[2]), float(z[3]))


@dataclass(frozen=True)
class DiskJunctionUnknowns:
    entry_angle: float
    a: float
    t1: float

    def as_array(self) -> np.ndarray:
        return np.array([self.entry_angle, self.a, self.t1])

    @classmethod
    def from_array(cls, z) -> "DiskJunctionUnknowns":
        return cls(float(z[0]), float(z[1]), float(z[2]))


@dataclass(frozen=True)
class BarycentricEntryProblem:
    x0: AgentState
    t0: float
    reference: ReferenceTrajectory
    spec: BarycentricSpec
    chirality: int = 1
    mu_dot_formula: str = "paper"
    t_horizon: float = math.inf

    kind = "barycentric_entry"
    order = 1


@dataclass(frozen=True)
class DiskEntryProblem:
    """Tangential entry onto the circle ``|p - p_ref| = D``.

    ``side`` is ``"inside"`` for the Case-II disk (agent stays within ``D``) or
    ``"outside"`` for a collision constraint (agent stays beyond ``D``).
    """

    x0: AgentState
    t0: float
    reference: ReferenceTrajectory
    D: float
    chirality: int = 1
    side: str = "inside"
    t_horizon: float = math.inf
    spec: Optional[BarycentricSpec] = None

    kind = "disk_entry"
    order = 2


def _time_scale(problem) -> float:
    rel = relative_state(problem.x0, problem.reference, problem.t0)
    D = problem.spec.D if isinstance(problem, BarycentricEntryProblem) else problem.D
    return max(D / max(rel.a, 1e-3 * D), 1e-3)


def _one_sided_rate(arc: Arc, t1: float, h: float) -> Vec2:
    """Right derivative of the control at ``t1``: Richardson-extrapolated forward differences."""
    u1 = arc.control(t1)

    def f(s):
        return (arc.control(t1 + s) - u1) / s

    return (8.0 * f(h / 4.0) - 6.0 * f(h / 2.0) + f(h)) / 3.0


def build_barycentric(z: BarycentricJunctionUnknowns, problem: BarycentricEntryProblem):
    """Pre-arc (cubic) and post-arc (spiral to ``b = D``) for the given unknowns."""
    if not z.t1 > problem.t0:
        raise DomainError(f"junction time {z.t1} must follow t0={problem.t0}")
    if not z.a > 0.0:
        raise DomainError(f"entry speed must be positive, got {z.a}")
    spec = problem.spec
    r1 = z.entry_position - problem.reference.position(z.t1)
    b1 = norm(r1)
    if not b1 > spec.D:
        raise DomainError(f"entry point inside the disk (b={b1} <= D={spec.D})")
    rdot1 = entry_velocity_barycentric(r1, z.a, spec.kappa, problem.chirality)
    x1 = AgentState(z.entry_position, problem.reference.velocity(z.t1) + rdot1)
    pre = solve_unconstrained_bvp(problem.x0, problem.t0, x1, z.t1)
    t_exit = z.t1 + (b1 - spec.D) / (z.a * spec.kappa)
    post = SpiralArc(b1, math.atan2(r1[1], r1[0]), z.a, spec.kappa, problem.chirality,
                     problem.reference, z.t1, t_exit, spec.D)
    return pre, post


def barycentric_entry_residual(z: BarycentricJunctionUnknowns, problem: BarycentricEntryProblem,
                               fd_step: float = 1e-4) -> np.ndarray:
    """Four shooting residuals for a Case-I entry.

    ``[u(t1+) - u(t1-), (udot(t1+) - udot(t1-)) - mudot(t1+) r(t1)]``; the
    ``mudot`` formula follows ``problem.mu_dot_formula``.
    """
    pre, post = build_barycentric(z, problem)
    t1 = z.t1
    h = min(fd_step * _time_scale(problem), 0.25 * post.duration)
    du = post.control(t1) - pre.control(t1)
    ddu = _one_sided_rate(post, t1, h) - pre.control_rate(t1)
    r1 = post.relative(t1).r
    mudot = mu_dot_plus(problem.mu_dot_formula, post.a, post.b0, post.kappa)
    return np.concatenate([du, ddu - mudot * r1])


def build_disk(z: DiskJunctionUnknowns, problem: DiskEntryProblem, t_end: Optional[float] = None):
    if not z.t1 > problem.t0:
        raise DomainError(f"junction time {z.t1} must follow t0={problem.t0}")
    if z.a < 0.0:
        raise DomainError(f"relative speed must be nonnegative, got {z.a}")
    ref = problem.reference
    ph = np.array([math.cos(z.entry_angle), math.sin(z.entry_angle)])
    p1 = ref.position(z.t1) + problem.D * ph
    v1 = ref.velocity(z.t1) + entry_velocity_disk(z.entry_angle, z.a, problem.chirality)
    pre = solve_unconstrained_bvp(problem.x0, problem.t0, AgentState(p1, v1), z.t1)
    if t_end is None:
        t_end = problem.t_horizon if math.isfinite(problem.t_horizon) and problem.t_horizon > z.t1 else z.t1 + 1.0
    post = DiskArc(problem.D, z.a, z.entry_angle, problem.chirality, ref, z.t1, max(t_end, z.t1 + 1e-6))
    return pre, post


def disk_entry_residual(z: DiskJunctionUnknowns, problem: DiskEntryProblem, fd_step: float = 1e-4) -> np.ndarray:
    """Three shooting residuals: ``[u(t1+) - u(t1-), (udot(t1+) - udot(t1-)) . q_hat]``."""
    pre, post = build_disk(z, problem)
    t1 = z.t1
    h = min(fd_step * _time_scale(problem), 0.25 * post.duration)
    du = post.control(t1) - pre.control(t1)
    ddu = _one_sided_rate(post, t1, h) - pre.control_rate(t1)
    q_hat = problem.chirality * np.array([-math.sin(z.entry_angle), math.cos(z.entry_angle)])
    return np.array([du[0], du[1], float(ddu @ q_hat)])


# ---------------------------------------------------------------------------
# damped Newton
# ---------------------------------------------------------------------------


@dataclass
class NewtonResult:
    x: np.ndarray
    residual_norm: float
    iterations: int
    history: list = field(default_factory=list)


def newton_solve(fun: Callable[[np.ndarray], np.ndarray], x0, tol, max_iter: int = 100,
                 max_halvings: int = 40, jac_step: float = 1e-7, polish: bool = True) -> NewtonResult:
    """Damped Newton iteration with a forward-difference Jacobian.

    ``fun`` may raise :class:`DomainError` to signal that a trial point left the
    feasible region; the step is then halved. ``tol`` is a float or a callable
    giving the threshold at the current iterate. With ``polish`` one extra full
    step is tried after convergence and kept only if it lowers the residual.
    Iterates are deterministic.
    """
    threshold = tol if callable(tol) else (lambda _x: tol)
    x = np.array(x0, dtype=float)
    try:
        F = fun(x)
    except DomainError as exc:
        raise FeasibilityError(f"initial guess infeasible: {exc}") from exc
    fn = float(np.linalg.norm(F))
    history = [fn]
    best_x, best_n = x.copy(), fn
    n = len(x)
    def jacobian(x, F):
        J = np.empty((len(F), n))
        for i in range(n):
            h = jac_step * max(1.0, abs(x[i]))
            xp = x.copy()
            xp[i] += h
            try:
                J[:, i] = (fun(xp) - F) / h
            except DomainError:
                xp[i] = x[i] - h
                J[:, i] = (F - fun(xp)) / h
        return J

    for it in range(max_iter + 1):
        if fn <= threshold(x):
            if polish and fn > 0.0:
                try:
                    J = jacobian(x, F)
                    xt = x + np.linalg.solve(J, -F)
                    Ft = fun(xt)
                    ft = float(np.linalg.norm(Ft))
                    if ft < fn:
                        x, F, fn = xt, Ft, ft
                        history.append(fn)
                except (DomainError, np.linalg.LinAlgError):
                    pass
            return NewtonResult(x, fn, it, history)
        if it == max_iter:
            break
        J = jacobian(x, F)
        if not np.all(np.isfinite(J)) or np.linalg.cond(J) > 1e14:
            raise SingularSystem(f"Jacobian singular at iteration {it} (residual {fn:.3e})")
        dx = np.linalg.solve(J, -F)
        alpha = 1.0
        infeasible = False
        for _ in range(max_halvings + 1):
            xt = x + alpha * dx
            try:
                Ft = fun(xt)
            except DomainError:
                infeasible = True
                alpha *= 0.5
                continue
            ft = float(np.linalg.norm(Ft))
            if np.isfinite(ft) and ft < fn:
                break
            infeasible = False
            alpha *= 0.5
        else:
            if infeasible:
                raise FeasibilityError(f"iterate left the feasible region after {max_halvings} halvings")
            raise NoConvergence(f"line search stalled at residual {fn:.3e}", best_x, best_n)
        x, F, fn = xt, Ft, ft
        history.append(fn)
        if fn < best_n:
            best_x, best_n = x.copy(), fn
    raise NoConvergence(f"no convergence in {max_iter} iterations (best residual {best_n:.3e})", best_x, best_n)


# ---------------------------------------------------------------------------
# junction solves
# ---------------------------------------------------------------------------


@dataclass
class JunctionSolution:
    kind: str
    unknowns: object
    pre_arc: UnconstrainedArc
    post_arc: Arc
    residual_norm: float
    iterations: int
    gap: float
    dNdt_plus_norm: float
    chirality: int
    residual: np.ndarray
    energy: float = math.nan
    feasible: bool = True

    @property
    def t1(self) -> float:
        return self.unknowns.t1


def check_initial_feasibility(problem, tol: float = 1e-9) -> float:
    """Gate on the initial state; raises :class:`InfeasibleStart` if ``g(x0) > tol``."""
    rel = relative_state(problem.x0, problem.reference, problem.t0)
    if isinstance(problem, BarycentricEntryProblem):
        case, g = eval_g(rel, problem.spec)
        scale = max(1.0, problem.spec.D * max(rel.a, 1.0))
        if g > tol * scale:
            raise InfeasibleStart(f"initial state violates the barycentric constraint ({case.value}, g={g:.6g})", g)
        return g
    D = problem.D
    g = (rel.b**2 - D**2) if problem.side == "inside" else (D**2 - rel.b**2)
    if g > tol * max(1.0, D * D):
        raise InfeasibleStart(f"initial state violates the fixed-distance constraint (g={g:.6g})", g)
    return g


def _problem_fns(problem, settings: SolverSettings):
    if isinstance(problem, BarycentricEntryProblem):
        problem = replace(problem, mu_dot_formula=settings.mu_dot_formula)
        fun = lambda z: barycentric_entry_residual(BarycentricJunctionUnknowns.from_array(z), problem, settings.fd_step)
        build = lambda z: build_barycentric(BarycentricJunctionUnknowns.from_array(z), problem)
        return problem, fun, build, BarycentricJunctionUnknowns.from_array
    fun = lambda z: disk_entry_residual(DiskJunctionUnknowns.from_array(z), problem, settings.fd_step)
    build = lambda z: build_disk(DiskJunctionUnknowns.from_array(z), problem)
    return problem, fun, build, DiskJunctionUnknowns.from_array


def _sampler(pre: Arc, post: Arc, t1: float):
    def sample(t):
        arc = pre if t < t1 else post
        return AgentState(arc.position(t), arc.velocity(t)), arc.control(t)

    return sample


def pre_arc_feasible(problem, pre: UnconstrainedArc, n: int = 200, tol: float = 1e-8) -> bool:
    """Whether the cubic pre-arc respects the constraint strictly before the junction."""
    ts = np.linspace(pre.t_start, pre.t_end, n + 1)[:-1]
    ref = problem.reference
    for t in ts:
        rel = relative_state(AgentState(pre.position(t), pre.velocity(t)), ref, t)
        if isinstance(problem, BarycentricEntryProblem):
            g = eval_g(rel, problem.spec)[1]
            scale = problem.spec.D * max(rel.a, 1.0)
        else:
            D = problem.D
            g = rel.b**2 - D**2 if problem.side == "inside" else D**2 - rel.b**2
            scale = D * D
        if g > tol * max(1.0, scale):
            return False
    return True


def _trajectory_energy(problem, pre: Arc, post: Arc) -> float:
    t_end = post.t_end
    if math.isfinite(problem.t_horizon):
        t_end = min(t_end, max(problem.t_horizon, post.t_start))
    return pre.energy(pre.t_start, pre.t_end) + post.energy(post.t_start, t_end)


def solve_junction(problem, initial_guess, settings: SolverSettings = SolverSettings()) -> JunctionSolution:
    """Solve one junction from one initial guess and certify it numerically.

    Raises
    ------
    InfeasibleStart
        The initial state violates the constraint; no iteration is attempted.
    NoConvergence, SingularSystem, FeasibilityError
        Newton failures.
    """
    check_initial_feasibility(problem)
    problem, fun, build, unpack = _problem_fns(problem, settings)
    guess = initial_guess.as_array() if hasattr(initial_guess, "as_array") else np.asarray(initial_guess, float)
    def threshold(z):
        post = build(z)[1]
        return settings.tol * max(1.0, norm(post.control(post.t_start)))

    res = newton_solve(fun, guess, threshold, settings.max_iter, settings.max_halvings, settings.jac_step)
    pre, post = build(res.x)
    t1 = float(res.x[-1])
    h = 1e-4 * _time_scale(problem)
    h = min(h, 0.2 * pre.duration, 0.2 * post.duration)
    spec = problem.spec if problem.spec is not None else BarycentricSpec(problem.D, 0.5)
    D = None if isinstance(problem, BarycentricEntryProblem) else problem.D
    report = check_theorem1(_sampler(pre, post, t1), problem.order, spec, t1, h, problem.reference, D=D)
    u1 = norm(post.control(t1))
    if report.gap > settings.certify_gap * max(1.0, u1 * u1):
        raise NoConvergence(f"junction not certified: gap {report.gap:.3e}", res.x, res.residual_norm)
    z = res.x.copy()
    if isinstance(problem, DiskEntryProblem):
        z[0] = math.remainder(z[0], 2.0 * math.pi)
    sol = JunctionSolution(
        kind=problem.kind,
        unknowns=unpack(z),
        pre_arc=pre,
        post_arc=post,
        residual_norm=res.residual_norm,
        iterations=res.iterations,
        gap=report.gap,
        dNdt_plus_norm=report.dNdt_plus_norm,
        chirality=problem.chirality,
        residual=fun(res.x),
    )
    sol.energy = _trajectory_energy(problem, pre, post)
    sol.feasible = pre_arc_feasible(problem, pre)
    return sol


def _coast_contact_guess(problem):
    """Guess from the first constraint contact of the relative coast, if any."""
    ref = problem.reference
    t0 = problem.t0
    rel0 = relative_state(problem.x0, ref, t0)
    scale = _time_scale(problem)
    horizon = 20.0 * scale if not math.isfinite(problem.t_horizon) else max(problem.t_horizon - t0, scale)
    coast = coast_arc(problem.x0.p, problem.x0.v, ref, t0, t0 + horizon)
    ts = np.linspace(t0, t0 + horizon, 401)[1:]
    for t in ts:
        rel = relative_state(AgentState(coast.position(t), coast.velocity(t)), ref, t)
        if isinstance(problem, BarycentricEntryProblem):
            if eval_g(rel, problem.spec)[1] >= 0.0 and rel.b > problem.spec.D:
                a = max(rel.a, 1e-3)
                p = ref.position(t) + max(rel.b, 1.05 * problem.spec.D) * rel.r / max(rel.b, 1e-12)
                return np.array([p[0], p[1], a, t])
        else:
            hit = rel.b >= problem.D if problem.side == "inside" else rel.b <= problem.D
            if hit:
                return np.array([math.atan2(rel.r[1], rel.r[0]), max(rel.a, 1e-3), t])
    del rel0
    return None


def heuristic_guess(problem) -> np.ndarray:
    """Scale-aware starting point for the shooting unknowns."""
    ref = problem.reference
    t0 = problem.t0
    rel = relative_state(problem.x0, ref, t0)
    D = problem.spec.D if isinstance(problem, BarycentricEntryProblem) else problem.D
    speed = max(rel.a, 0.1 * D)
    t1 = t0 + rel.b / speed
    a = rel.a if rel.a > 0.0 else 1.0
    rh = rel.r / rel.b if rel.b > 0.0 else np.array([1.0, 0.0])
    if isinstance(problem, BarycentricEntryProblem):
        p = ref.position(t1) + 1.5 * D * rh
        return np.array([p[0], p[1], a, t1])
    return np.array([math.atan2(rh[1], rh[0]), a, t1])


def tangent_guess(problem):
    """For an outside disk entry: the tangent point of the straight relative approach."""
    if not isinstance(problem, DiskEntryProblem) or problem.side != "outside":
        return None
    rel = relative_state(problem.x0, problem.reference, problem.t0)
    if rel.b <= problem.D or rel.a == 0.0:
        return None
    phi = math.atan2(rel.r[1], rel.r[0]) + problem.chirality * math.acos(problem.D / rel.b)
    t1 = problem.t0 + math.sqrt(rel.b**2 - problem.D**2) / rel.a
    return np.array([phi, rel.a, t1])


def default_chirality(problem) -> int:
    rel = relative_state(problem.x0, problem.reference, problem.t0)
    c = cross(rel.r, rel.rdot)
    return -1 if c < 0.0 else 1


def _same_root(a: JunctionSolution, b: JunctionSolution) -> bool:
    za, zb = a.unknowns.as_array(), b.unknowns.as_array()
    return bool(np.all(np.abs(za - zb) <= 1e-6 * np.maximum(1.0, np.abs(za))))


def solve_multistart(problem, settings: SolverSettings = SolverSettings(), guesses=None,
                     rng: Optional[np.random.Generator] = None) -> list[JunctionSolution]:
    """All distinct certified roots reachable from the base guesses and their perturbations.

    Base guesses are the caller's, the tangent and coast-contact guesses and
    the heuristic; each is perturbed ``settings.multistart`` times (5%
    multiplicative noise, seeded). Roots past a finite horizon are dropped; the
    rest are returned feasible-first, then by ascending energy.
    """
    check_initial_feasibility(problem)
    rng = np.random.default_rng(settings.seed) if rng is None else rng
    bases = [np.asarray(g, float) for g in (guesses or [])]
    tangent = tangent_guess(problem)
    if tangent is not None:
        bases.append(tangent)
    contact = _coast_contact_guess(problem)
    if contact is not None:
        bases.append(contact)
    bases.append(heuristic_guess(problem))
    starts = list(bases)
    for base in bases:
        for _ in range(settings.multistart):
            starts.append(base * (1.0 + 0.05 * rng.standard_normal(base.shape)))
    roots: list[JunctionSolution] = []
    for z in starts:
        try:
            sol = solve_junction(problem, z, settings)
        except (JunctionError, DomainError):
            continue
        if math.isfinite(problem.t_horizon) and sol.t1 > problem.t_horizon:
            continue
        if not any(_same_root(sol, r) for r in roots):
            roots.append(sol)
    roots.sort(key=lambda s: (not s.feasible, s.energy))
    return roots


def plan_entry(problem, settings: SolverSettings = SolverSettings(), guesses=None) -> JunctionSolution:
    """Best certified junction, resolving the chirality setting.

    ``"auto"`` solves both chiralities and keeps the lower-energy solution
    (ties toward +1); ``None`` uses the sign of the initial angular momentum.
    """
    choice = settings.chirality
    if choice in (None, "", "momentum"):
        chiralities = [default_chirality(problem)]
    elif choice == "auto":
        chiralities = [1, -1]
    else:
        chiralities = [int(choice)]
    best = None
    errors = []
    for s in chiralities:
        roots = solve_multistart(replace(problem, chirality=s), settings, guesses)
        if not roots:
            errors.append(s)
            continue
        cand = roots[0]
        if best is None or (cand.feasible, -cand.energy) > (best.feasible, -best.energy):
            best = cand
    if best is None:
        raise NoConvergence(f"{problem.kind}: no certified root for chirality {errors}")
    return best


# ---------------------------------------------------------------------------
# spiral exit
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransitionRecord:
    t: float
    kind: str
    state: AgentState
    control: Vec2
    case_before: ConstraintCase
    case_after: ConstraintCase
    rdot_dot_r: float


def spiral_exit(arc: SpiralArc) -> TransitionRecord:
    """Case I to Case II hand-off at ``b = D``; the next arc must start from this control."""
    t = arc.exit_time
    rel = arc.relative(t)
    return TransitionRecord(
        t=t,
        kind="spiral_exit",
        state=AgentState(arc.position(t), arc.velocity(t)),
        control=arc.control(t),
        case_before=ConstraintCase.CASE_I,
        case_after=ConstraintCase.CASE_II,
        rdot_dot_r=float(rel.r @ rel.rdot),
    )


def gap_between(left: Arc, right: Arc, t: float) -> float:
    return junction_gap(left.control(t), right.control(t))
