"""Junction scenarios built backwards from a chosen constrained arc.

Each builder picks the entry state on the constraint surface, evaluates the
constrained arc's control and control rate there analytically, imposes the
junction conditions on the pre-arc, and integrates that cubic back to ``t0``.
The resulting initial state admits a junction at the chosen unknowns by
construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .arcs import DiskArc, SpiralArc
from .constraints import mu_dot_plus
from .core import AgentState, BarycentricSpec, ReferenceTrajectory, norm, relative_state
from .junctions import (
    BarycentricEntryProblem,
    BarycentricJunctionUnknowns,
    DiskEntryProblem,
    DiskJunctionUnknowns,
    pre_arc_feasible,
    build_barycentric,
    build_disk,
)


@dataclass(frozen=True)
class Fixture:
    problem: object
    unknowns: object


def _backward_state(p1, v1, u1, j1, t1, t0) -> AgentState:
    tau = t0 - t1
    p = p1 + v1 * tau + 0.5 * u1 * tau**2 + j1 * tau**3 / 6.0
    v = v1 + u1 * tau + 0.5 * j1 * tau**2
    return AgentState(p, v)


def barycentric_fixture(reference: ReferenceTrajectory, spec: BarycentricSpec, b1: float, phi1: float,
                        a: float, t1: float, chirality: int = 1, t0: float = 0.0,
                        formula: str = "paper", t_horizon: float = math.inf) -> Fixture:
    """Case-I entry at radius ``b1``, polar angle ``phi1``, speed ``a`` and time ``t1``."""
    r1 = b1 * np.array([math.cos(phi1), math.sin(phi1)])
    t_exit = t1 + (b1 - spec.D) / (a * spec.kappa)
    spiral = SpiralArc(b1, phi1, a, spec.kappa, chirality, reference, t1, t_exit, spec.D)
    u1 = spiral.control(t1)
    j1 = spiral.control_rate(t1) - mu_dot_plus(formula, a, b1, spec.kappa) * r1
    x0 = _backward_state(spiral.position(t1), spiral.velocity(t1), u1, j1, t1, t0)
    problem = BarycentricEntryProblem(x0, t0, reference, spec, chirality, formula, t_horizon)
    return Fixture(problem, BarycentricJunctionUnknowns(spiral.position(t1), a, t1))


def disk_fixture(reference: ReferenceTrajectory, D: float, phi1: float, a: float, t1: float,
                 radial_jerk: float, chirality: int = 1, t0: float = 0.0, side: str = "inside",
                 t_horizon: float = math.inf, spec: Optional[BarycentricSpec] = None) -> Fixture:
    """Tangential entry onto the circle of radius ``D``.

    ``radial_jerk`` is the free jump of ``udot`` along ``p_hat``; its sign decides
    from which side the pre-arc approaches (positive from inside, negative from
    outside, to leading order).
    """
    arc = DiskArc(D, a, phi1, chirality, reference, t1, t1 + 1.0)
    ph = np.array([math.cos(phi1), math.sin(phi1)])
    u1 = arc.control(t1)
    j1 = arc.control_rate(t1) + radial_jerk * ph
    x0 = _backward_state(arc.position(t1), arc.velocity(t1), u1, j1, t1, t0)
    problem = DiskEntryProblem(x0, t0, reference, D, chirality, side, t_horizon, spec)
    return Fixture(problem, DiskJunctionUnknowns(phi1, a, t1))


def random_reference(rng: np.random.Generator, scale: float = 0.2) -> ReferenceTrajectory:
    c = np.zeros((4, 2))
    c[0] = rng.uniform(-1.0, 1.0, 2)
    c[1] = scale * rng.uniform(-1.0, 1.0, 2)
    c[2] = 0.5 * scale * rng.uniform(-1.0, 1.0, 2)
    c[3] = 0.1 * scale * rng.uniform(-1.0, 1.0, 2)
    return ReferenceTrajectory(c)


def random_barycentric_fixtures(n: int, seed: int = 0, formula: str = "paper",
                                kappas=(0.3, 0.5, 0.7), max_tries: int = 400) -> list[Fixture]:
    """``n`` reverse-built Case-I entries whose pre-arcs are feasible."""
    rng = np.random.default_rng(seed)
    out = []
    tries = 0
    while len(out) < n and tries < max_tries:
        tries += 1
        ref = random_reference(rng) if rng.random() < 0.6 else ReferenceTrajectory.static(rng.uniform(-1, 1, 2))
        spec = BarycentricSpec(1.0, float(kappas[len(out) % len(kappas)]))
        b1 = rng.uniform(2.5, 5.0)
        a = rng.uniform(0.6, 1.5)
        T = rng.uniform(1.0, 3.0)
        fx = barycentric_fixture(ref, spec, b1, rng.uniform(-math.pi, math.pi), a, T,
                                 int(rng.choice([-1, 1])), 0.0, formula)
        rel0 = relative_state(fx.problem.x0, ref, 0.0)
        if rel0.b <= 1.5 * spec.D:
            continue
        pre, _ = build_barycentric(fx.unknowns, fx.problem)
        if pre_arc_feasible(fx.problem, pre, tol=-1e-9):
            out.append(fx)
    return out


def random_disk_fixtures(n: int, seed: int = 0, side: str = "inside", max_tries: int = 400) -> list[Fixture]:
    """``n`` reverse-built tangential disk entries with feasible pre-arcs."""
    rng = np.random.default_rng(seed)
    out = []
    tries = 0
    sign = 1.0 if side == "inside" else -1.0
    while len(out) < n and tries < max_tries:
        tries += 1
        ref = random_reference(rng) if rng.random() < 0.6 else ReferenceTrajectory.static(rng.uniform(-1, 1, 2))
        D = 1.0
        a = rng.uniform(0.5, 1.5)
        T = rng.uniform(0.5, 1.5)
        c = sign * rng.uniform(0.5, 3.0)
        fx = disk_fixture(ref, D, rng.uniform(-math.pi, math.pi), a, T, c, int(rng.choice([-1, 1])),
                          0.0, side, spec=BarycentricSpec(D, 0.5) if side == "inside" else None)
        pre, _ = build_disk(fx.unknowns, fx.problem)
        if pre_arc_feasible(fx.problem, pre, tol=-1e-9):
            out.append(fx)
    return out


def collision_scenario(seed: int, R: float = 0.5, D_swarm: float = 100.0, max_tries: int = 400):
    """Two agents inside a large aggregation disk; agent 1 must skirt agent 0.

    Agent 0 coasts relative to a static reference (a cubic path). Agent 1's
    initial state is reverse-built from a tangential entry onto the circle of
    radius ``2R`` about agent 0, and is kept only if its own coast would
    collide. Returns ``(scenario, fixture)``.
    """
    from .arcs import coast_arc
    from .sim import Scenario
    from .junctions import SolverSettings

    rng = np.random.default_rng(seed)
    ref = ReferenceTrajectory.static()
    spec = BarycentricSpec(D_swarm, 0.5)
    for _ in range(max_tries):
        a0 = AgentState(rng.uniform(-1.0, 1.0, 2), rng.uniform(-0.3, 0.3, 2))
        t1 = rng.uniform(1.0, 2.0)
        tf = t1 + rng.uniform(2.0, 4.0)
        path = coast_arc(a0.p, a0.v, ref, 0.0, tf).path
        fx = disk_fixture(path, 2.0 * R, rng.uniform(-math.pi, math.pi), rng.uniform(0.5, 1.2), t1,
                          -rng.uniform(0.5, 3.0), int(rng.choice([-1, 1])), 0.0, "outside", tf)
        x1 = fx.problem.x0
        pre, _ = build_disk(fx.unknowns, fx.problem)
        if not pre_arc_feasible(fx.problem, pre, tol=-1e-9):
            continue
        ts = np.linspace(0.0, tf, 801)
        gap = [norm(x1.p + x1.v * t - path.position(t)) for t in ts]
        if min(gap) >= 2.0 * R or norm(x1.p - ref.position(0.0)) > 0.5 * D_swarm:
            continue
        sc = Scenario((a0, x1), ref, spec, R, 0.0, tf, SolverSettings(), "coast")
        return sc, fx
    raise RuntimeError("no collision scenario found")
