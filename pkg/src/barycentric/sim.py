"""Event-driven simulation of agents executing planned trajectories.

Each agent is planned independently (barycentric entry junction, spiral to the
disk, continuity-preserving exit, in-disk policy); pairs whose plans come
closer than ``2R`` are then resolved by replanning the higher-index agent onto
a tangential circle of radius ``2R`` about the other agent, which must be on a
single cubic arc for the fixed-distance analysis to apply.

All agents are sampled on one shared time grid (fixed rate plus every event
time), and the monitors are computed from those samples only, so they can be
re-derived exactly from serialized output.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .arcs import Arc, DiskArc, SpiralArc, UnconstrainedArc, brake_arc, coast_arc
from .constraints import ConstraintCase, eval_g
from .core import (
    AgentState,
    BarycentricSpec,
    DomainError,
    ReferenceTrajectory,
    cross,
    junction_gap,
    make_relative,
    relative_state,
)
from .junctions import (
    BarycentricEntryProblem,
    DiskEntryProblem,
    InfeasibleStart,
    JunctionError,
    NoConvergence,
    SolverSettings,
    plan_entry,
    spiral_exit,
)

IN_DISK_POLICIES = ("brake", "coast")

# monitor tolerances
ARRIVAL_RTOL = 1e-6
CONTAINMENT_TOL = 1e-9
GAP_TOL = 1e-6
FEASIBILITY_TOL = 1e-8
SEPARATION_TOL = 1e-9
ON_SURFACE_TOL = 1e-9


class ScenarioError(RuntimeError):
    """The scenario cannot be executed as posed (e.g. an impulsive disk exit)."""


class UnsupportedConfiguration(ScenarioError):
    pass


class NoEvent(ValueError):
    """The predicate does not change sign on the bracket."""


@dataclass(frozen=True)
class Scenario:
    agents: tuple
    reference: ReferenceTrajectory
    spec: BarycentricSpec
    R: float
    t0: float
    tf: float
    settings: SolverSettings = field(default_factory=SolverSettings)
    in_disk_policy: str = "brake"
    sample_rate: float = 100.0

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if not self.agents:
            raise DomainError("scenario needs at least one agent")
        if not self.tf > self.t0:
            raise DomainError(f"horizon must satisfy tf > t0, got [{self.t0}, {self.tf}]")
        if not self.R > 0.0:
            raise DomainError(f"agent radius must be positive, got R={self.R}")
        if self.in_disk_policy not in IN_DISK_POLICIES:
            raise DomainError(f"unknown in-disk policy {self.in_disk_policy!r}")
        if not self.sample_rate > 0.0:
            raise DomainError("sample rate must be positive")

    @property
    def mu_dot_formula(self) -> str:
        return self.settings.mu_dot_formula


@dataclass
class Trajectory:
    """Contiguous arcs covering the horizon; evaluation is right-continuous at joins."""

    arcs: list

    def __post_init__(self):
        self._starts = [a.t_start for a in self.arcs]

    def arc_at(self, t: float) -> Arc:
        k = bisect.bisect_right(self._starts, t) - 1
        return self.arcs[min(max(k, 0), len(self.arcs) - 1)]

    def state(self, t: float) -> AgentState:
        arc = self.arc_at(t)
        return AgentState(arc.position(t), arc.velocity(t))

    def control(self, t: float) -> np.ndarray:
        return self.arc_at(t).control(t)

    def mode(self, t: float) -> str:
        return self.arc_at(t).mode

    def energy(self, t_lo: float, t_hi: float) -> float:
        total = 0.0
        for arc in self.arcs:
            lo, hi = max(arc.t_start, t_lo), min(arc.t_end, t_hi)
            if hi > lo:
                total += arc.energy(lo, hi)
        return total

    @property
    def event_times(self) -> list:
        return [a.t_start for a in self.arcs[1:]]


@dataclass
class AgentSeries:
    t: np.ndarray
    p: np.ndarray
    v: np.ndarray
    u: np.ndarray
    g: np.ndarray
    mode: list


@dataclass
class SimResult:
    scenario: Scenario
    series: list
    junctions: list
    energies: list
    monitors: dict
    trajectories: list = field(default_factory=list, repr=False)


# ---------------------------------------------------------------------------
# primitives
# ---------------------------------------------------------------------------


def collision_constraint(agent_i: AgentState, agent_j: AgentState, R: float) -> float:
    """``(2R)^2 - |p_i - p_j|^2``; feasible iff ``<= 0``."""
    d = agent_i.p - agent_j.p
    return (2.0 * R) ** 2 - float(d @ d)


def detect_event(sampler: Callable[[float], float], predicate: Optional[Callable[[float], float]] = None,
                 bracket: tuple = (0.0, 1.0), tol: float = 1e-10, max_iter: int = 200) -> float:
    """Sign change of a scalar function on ``bracket``, refined to ``|dt| <= tol``.

    ``predicate`` maps the sampled value to the scalar whose sign is tracked;
    when omitted the sampler output itself is used. Bisection is interleaved
    with secant steps that are accepted only when they land inside the current
    bracket.

    Raises
    ------
    NoEvent
        If the endpoint values do not have strictly opposite signs (this
        includes grazing double roots).
    """
    f = sampler if predicate is None else (lambda t: predicate(sampler(t)))
    lo, hi = float(bracket[0]), float(bracket[1])
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise NoEvent(f"no sign change on [{lo}, {hi}]")
    for i in range(max_iter):
        if hi - lo <= tol:
            break
        t = 0.5 * (lo + hi)
        if i % 2 == 1 and fhi != flo:
            ts = hi - fhi * (hi - lo) / (fhi - flo)
            if lo < ts < hi:
                t = ts
        ft = f(t)
        if ft == 0.0:
            return t
        if np.sign(ft) == np.sign(flo):
            lo, flo = t, ft
        else:
            hi, fhi = t, ft
    # secant point of the final bracket
    return hi - fhi * (hi - lo) / (fhi - flo) if fhi != flo else 0.5 * (lo + hi)


def _scale(rel, D: float) -> float:
    return max(1.0, D * max(rel.a, 1.0))


# ---------------------------------------------------------------------------
# per-agent planning
# ---------------------------------------------------------------------------


def _max_radius(arc: Arc, ref_rel: Callable[[float], float], n: int = 400) -> float:
    ts = np.linspace(arc.t_start, arc.t_end, n + 1)
    bs = np.array([ref_rel(t) for t in ts])
    k = int(np.argmax(bs))
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, n)]
    if hi > lo:
        res = minimize_scalar(lambda t: -ref_rel(t), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12 * max(1.0, abs(hi))})
        return max(float(bs[k]), -float(res.fun))
    return float(bs[k])


def _contained_brake(state: AgentState, ref: ReferenceTrajectory, t: float, D: float,
                     rddot0=None, max_halvings: int = 60):
    """Brake to relative rest, halving the duration until the manoeuvre stays in the disk."""
    rel = relative_state(state, ref, t)
    T = D / max(rel.a, 1e-12)
    for _ in range(max_halvings):
        arc = brake_arc(rel.r, rel.rdot, ref, t, T, rddot0)
        if _max_radius(arc, lambda s: arc.relative(s).b) <= D * (1.0 + 1e-13):
            return arc
        T *= 0.5
    raise ScenarioError("no contained braking manoeuvre found: staying in the disk would need an "
                        "impulsive control")


def _in_disk(state: AgentState, t: float, sc: Scenario, rddot0=None, u_before=None):
    """Arcs from ``t`` to ``tf`` for an agent at or inside the disk, plus log entries."""
    ref, D, tf = sc.reference, sc.spec.D, sc.tf
    rel = relative_state(state, ref, t)
    log = []
    if rel.a == 0.0:
        return [coast_arc(state.p, state.v, ref, t, tf)], log
    if sc.in_disk_policy == "brake" or rddot0 is not None:
        if rel.b >= D and float(rel.r @ rel.rdot) > 0.0:
            raise ScenarioError("agent on the disk boundary moving outward: leaving tangentially is impossible, "
                                "staying in would need an impulsive control")
        brake = _contained_brake(state, ref, t, D, rddot0)
        arcs = [brake]
        t_rest = brake.t_end
        if t_rest < tf:
            end = AgentState(brake.position(t_rest), brake.velocity(t_rest))
            arcs.append(coast_arc(end.p, end.v, ref, t_rest, tf))
            log.append({"t": t_rest, "kind": "brake_end", "residual_norm": 0.0,
                        "gap": junction_gap(brake.control(t_rest), arcs[-1].control(t_rest))})
        else:
            arcs[0] = replace(brake, t_end=tf) if t_rest > tf else brake
        return arcs, log
    # relative coast, with disk-boundary activation on tangential contact only
    coast = coast_arc(state.p, state.v, ref, t, tf)
    bfun = lambda s: relative_state(AgentState(coast.position(s), coast.velocity(s)), ref, s).b - D
    ts = np.linspace(t, tf, max(int(math.ceil((tf - t) * sc.sample_rate)), 1) + 1)
    vals = [bfun(s) for s in ts]
    for k in range(1, len(ts)):
        if vals[k] > 0.0:
            te = detect_event(bfun, None, (ts[k - 1], ts[k])) if vals[k - 1] < 0.0 else ts[k - 1]
            rel_e = relative_state(AgentState(coast.position(te), coast.velocity(te)), ref, te)
            radial = float(rel_e.r @ rel_e.rdot)
            if radial > ON_SURFACE_TOL * _scale(rel_e, D):
                raise ScenarioError(
                    f"non-tangential disk-boundary approach at t={te:.12g} (r.rdot={radial:.3e}): "
                    "no continuous control keeps the agent inside (impulsive control needed)")
            s = -1 if cross(rel_e.r, rel_e.rdot) < 0.0 else 1
            disk = DiskArc(D, rel_e.a, math.atan2(rel_e.r[1], rel_e.r[0]), s, ref, te, tf)
            log.append({"t": te, "kind": "disk_contact", "residual_norm": abs(radial),
                        "gap": junction_gap(coast.control(te), disk.control(te))})
            return [replace(coast, t_end=te), disk], log
    return [coast], log


def _on_spiral(rel, spec: BarycentricSpec) -> bool:
    if not (rel.a > 0.0 and rel.b > spec.D):
        return False
    g = eval_g(rel, spec)[1]
    return abs(g) <= ON_SURFACE_TOL * _scale(rel, spec.D) and float(rel.r @ rel.rdot) < 0.0


def _agent_settings(sc: Scenario, i: int) -> SolverSettings:
    return replace(sc.settings, seed=int(sc.settings.seed) * 1009 + i)


def plan_agent(sc: Scenario, i: int) -> tuple[Trajectory, list]:
    """Plan one agent over the horizon, ignoring the other agents."""
    x0, ref, spec, t0, tf = sc.agents[i], sc.reference, sc.spec, sc.t0, sc.tf
    rel = relative_state(x0, ref, t0)
    case, g = eval_g(rel, spec)
    if g > ON_SURFACE_TOL * _scale(rel, spec.D):
        raise InfeasibleStart(f"agent {i}: initial state violates the barycentric constraint "
                              f"({case.value}, g={g:.6g})", g)
    log = []
    if case is ConstraintCase.CASE_II:
        arcs, extra = _in_disk(x0, t0, sc)
        return Trajectory(arcs), [dict(e, agent=i) for e in extra]

    if _on_spiral(rel, spec):
        s = -1 if cross(rel.r, rel.rdot) < 0.0 else 1
        t_exit = t0 + (rel.b - spec.D) / (rel.a * spec.kappa)
        spiral = SpiralArc(rel.b, math.atan2(rel.r[1], rel.r[0]), rel.a, spec.kappa, s, ref, t0,
                           min(t_exit, tf), spec.D)
        arcs = [spiral]
        log.append({"t": t0, "kind": "spiral_start", "agent": i, "residual_norm": 0.0, "gap": 0.0,
                    "b_entry": rel.b, "a": rel.a, "kappa": spec.kappa,
                    "predicted_arrival": t_exit})
    else:
        problem = BarycentricEntryProblem(x0, t0, ref, spec, 1, sc.mu_dot_formula, tf)
        try:
            sol = plan_entry(problem, _agent_settings(sc, i))
        except JunctionError as exc:
            raise type(exc)(f"agent {i}: barycentric entry: {exc}") from exc
        if not sol.feasible:
            raise NoConvergence(f"agent {i}: only infeasible barycentric entries found")
        spiral = sol.post_arc
        t_exit = spiral.exit_time
        if t_exit > tf:
            spiral = replace(spiral, t_end=tf)
        arcs = [sol.pre_arc, spiral]
        log.append({"t": sol.t1, "kind": "barycentric_entry", "agent": i,
                    "residual_norm": sol.residual_norm, "gap": sol.gap,
                    "dNdt_plus_norm": sol.dNdt_plus_norm, "iterations": sol.iterations,
                    "chirality": sol.chirality, "b_entry": spiral.b0, "a": spiral.a,
                    "kappa": spec.kappa, "predicted_arrival": t_exit})
    if t_exit >= tf:
        return Trajectory(arcs), log
    rec = spiral_exit(spiral)
    rdd = spiral.relative_accel(t_exit)
    rest, extra = _in_disk(rec.state, t_exit, sc, rddot0=rdd)
    log.append({"t": t_exit, "kind": "spiral_exit", "agent": i, "residual_norm": 0.0,
                "gap": junction_gap(rec.control, rest[0].control(t_exit)),
                "rdot_dot_r": rec.rdot_dot_r})
    log.extend(dict(e, agent=i) for e in extra)
    return Trajectory(arcs + rest), log


# ---------------------------------------------------------------------------
# collision handling
# ---------------------------------------------------------------------------


def _grid(sc: Scenario, events: Sequence[float]) -> np.ndarray:
    n = max(int(math.floor((sc.tf - sc.t0) * sc.sample_rate + 1e-9)), 1)
    base = sc.t0 + np.arange(n + 1) / sc.sample_rate
    base = base[base <= sc.tf]
    ev = np.array(sorted({float(e) for e in events if sc.t0 < e < sc.tf}))
    if ev.size:
        # drop grid points that nearly coincide with an event
        keep = np.min(np.abs(base[:, None] - ev[None, :]), axis=1) > 1e-9
        base = base[keep]
    pts = np.concatenate([base, ev, [sc.t0, sc.tf]])
    return np.unique(pts)


def _cubic_reference(traj: Trajectory, t0: float, tf: float) -> ReferenceTrajectory:
    if len(traj.arcs) != 1 or not isinstance(traj.arcs[0], UnconstrainedArc):
        raise UnsupportedConfiguration(
            "collision avoidance needs the other agent on a single cubic arc over the horizon")
    return traj.arcs[0].path


def _min_separation(ti: Trajectory, tj: Trajectory, ts: np.ndarray) -> float:
    return min(float(np.linalg.norm(ti.state(t).p - tj.state(t).p)) for t in ts)


def resolve_collisions(sc: Scenario, trajs: list, logs: list) -> None:
    """Replan agents whose plans violate separation (in place)."""
    R2 = 2.0 * sc.R
    for j in range(len(trajs)):
        for i in range(j):
            g0 = collision_constraint(sc.agents[i], sc.agents[j], sc.R)
            if g0 > 0.0:
                raise InfeasibleStart(f"agents {i} and {j} start closer than 2R "
                                      f"(collision constraint value {g0:.6g})", g0)
            ts = _grid(sc, trajs[i].event_times + trajs[j].event_times)
            if _min_separation(trajs[i], trajs[j], ts) >= R2 - SEPARATION_TOL:
                continue
            ref = _cubic_reference(trajs[i], sc.t0, sc.tf)
            problem = DiskEntryProblem(sc.agents[j], sc.t0, ref, R2, 1, "outside", sc.tf)
            try:
                # the sense of going around the other agent is not fixed by its
                # initial angular momentum, so both are tried unless pinned
                st = _agent_settings(sc, j)
                if st.chirality in (None, "", "momentum"):
                    st = replace(st, chirality="auto")
                sol = plan_entry(problem, st)
            except JunctionError as exc:
                raise type(exc)(f"agents {i}/{j}: collision entry: {exc}") from exc
            if not sol.feasible:
                raise NoConvergence(f"agents {i}/{j}: only colliding tangential entries found")
            disk = replace(sol.post_arc, t_end=sc.tf)
            trajs[j] = Trajectory([sol.pre_arc, disk])
            logs[j] = [{"t": sol.t1, "kind": "collision_entry", "agent": j, "other": i,
                        "residual_norm": sol.residual_norm, "gap": sol.gap,
                        "dNdt_plus_norm": sol.dNdt_plus_norm, "iterations": sol.iterations,
                        "chirality": sol.chirality, "udot_q_residual": abs(float(sol.residual[2])),
                        "D": R2}]


# ---------------------------------------------------------------------------
# sampling and monitors
# ---------------------------------------------------------------------------


def sample(sc: Scenario, trajs: list) -> list:
    events = [e for tr in trajs for e in tr.event_times]
    ts = _grid(sc, events)
    out = []
    for tr in trajs:
        P, V, U, G, modes = [], [], [], [], []
        for t in ts:
            arc = tr.arc_at(t)
            p, v, u = arc.position(t), arc.velocity(t), arc.control(t)
            P.append(p)
            V.append(v)
            U.append(u)
            G.append(eval_g(relative_state(AgentState(p, v), sc.reference, t), sc.spec)[1])
            modes.append(arc.mode)
        out.append(AgentSeries(ts.copy(), np.array(P), np.array(V), np.array(U), np.array(G), modes))
    return out


def compute_monitors(sc: Scenario, series: list, junctions: list) -> dict:
    """Arrival, containment, continuity, feasibility, tangency and separation verdicts.

    Computed from the sampled series and the junction log only, so stored
    results can be re-checked without replanning.
    """
    D = sc.spec.D
    ref = sc.reference
    arrival, containment, feasibility, tangency = [], [], [], []
    for k, s in enumerate(series):
        r = s.p - np.array([ref.position(t) for t in s.t])
        rd = s.v - np.array([ref.velocity(t) for t in s.t])
        b = np.hypot(r[:, 0], r[:, 1])
        inside = np.nonzero(b <= D + CONTAINMENT_TOL)[0]
        first = int(inside[0]) if inside.size else None
        worst = float(np.max(b[first:]) - D) if first is not None else -math.inf
        containment.append({"agent": k, "first_entry": None if first is None else float(s.t[first]),
                            "max_excess": worst, "ok": bool(worst <= CONTAINMENT_TOL)})
        gmax = float(np.max(s.g))
        feasibility.append({"agent": k, "max_g": gmax, "ok": bool(gmax <= FEASIBILITY_TOL)})
        for e in junctions:
            if e.get("agent") != k or "predicted_arrival" not in e:
                continue
            pred = e["predicted_arrival"]
            if pred > sc.tf:
                continue
            measured = float(s.t[first]) if first is not None else math.nan
            dur = pred - e["t"]
            err = abs((measured - e["t"]) - dur) / max(dur, 1e-300)
            arrival.append({"agent": k, "predicted": pred, "measured": measured, "rel_error": err,
                            "ok": bool(err <= ARRIVAL_RTOL)})
        spiral = np.array([m == "spiral" for m in s.mode])
        if spiral.any():
            tangency.append({"agent": k, "arc": "spiral", "max_abs": float(np.max(np.abs(s.g[spiral]))),
                             "ok": bool(np.max(np.abs(s.g[spiral])) <= FEASIBILITY_TOL)})
        disk = np.array([m == "disk" for m in s.mode])
        if disk.any():
            other = next((e.get("other") for e in junctions
                          if e.get("agent") == k and e["kind"] == "collision_entry"), None)
            if other is None:
                cr, crd, Dd = r[disk], rd[disk], D
            else:
                cr = s.p[disk] - series[other].p[disk]
                crd = s.v[disk] - series[other].v[disk]
                Dd = 2.0 * sc.R
            n1 = np.abs(np.sum(cr * cr, axis=1) - Dd**2)
            n2 = np.abs(2.0 * np.sum(cr * crd, axis=1))
            worst_t = float(max(np.max(n1), np.max(n2)))
            tangency.append({"agent": k, "arc": "disk", "max_abs": worst_t, "ok": bool(worst_t <= 1e-9)})
    continuity = [{"t": e["t"], "agent": e.get("agent"), "kind": e["kind"], "gap": e["gap"],
                   "ok": bool(e["gap"] <= GAP_TOL)} for e in junctions]
    separation = []
    for i in range(len(series)):
        for j in range(i + 1, len(series)):
            d = series[i].p - series[j].p
            m = float(np.min(np.hypot(d[:, 0], d[:, 1])))
            separation.append({"pair": [i, j], "min_distance": m,
                               "ok": bool(m >= 2.0 * sc.R - SEPARATION_TOL)})
    groups = {"arrival": arrival, "containment": containment, "continuity": continuity,
              "feasibility": feasibility, "tangency": tangency, "separation": separation}
    verdicts = {name: {"ok": all(x["ok"] for x in items), "items": items} for name, items in groups.items()}
    verdicts["all_ok"] = all(v["ok"] for v in verdicts.values())
    return verdicts


def run(sc: Scenario) -> SimResult:
    """Plan, resolve collisions, sample and monitor a scenario.

    Raises
    ------
    InfeasibleStart
        An initial state violates a constraint.
    ScenarioError
        The in-disk motion needs an impulsive control, or collision avoidance is
        requested against an agent that is not on a cubic arc.
    JunctionError
        A junction solve failed.
    """
    trajs, logs = [], []
    for i in range(len(sc.agents)):
        tr, log = plan_agent(sc, i)
        trajs.append(tr)
        logs.append(log)
    if len(trajs) > 1:
        resolve_collisions(sc, trajs, logs)
    junctions = sorted((e for log in logs for e in log), key=lambda e: (e["t"], e["agent"]))
    series = sample(sc, trajs)
    energies = [tr.energy(sc.t0, sc.tf) for tr in trajs]
    monitors = compute_monitors(sc, series, junctions)
    return SimResult(sc, series, junctions, energies, monitors, trajs)
