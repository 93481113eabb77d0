"""Direct-transcription oracle for the minimum-energy problem.

The control is piecewise linear on ``M`` uniform intervals (node values
``u_0 .. u_M``). Double-integrator states then follow exactly from the
first-order-hold recursion, which is the trapezoidal rule for ``v`` plus its
consistent companion for ``p``::

    v_{k+1} = v_k + dt (u_k + u_{k+1}) / 2
    p_{k+1} = p_k + dt v_k + dt^2 (u_k / 3 + u_{k+1} / 6)

and the energy ``0.5 int |u|^2`` is an exact quadratic form. Constraint samples
are taken on a check grid that contains every node; because the check grid is
shared by nested meshes, doubling ``M`` only enlarges the feasible set.

The program is solved by an augmented-Lagrangian outer loop around L-BFGS.
An optional terminal state is imposed exactly by restricting the controls to
an affine subspace.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from .core import AgentState, BarycentricSpec, ReferenceTrajectory, relative_state
from .constraints import eval_g


class OracleError(RuntimeError):
    def __init__(self, message, best=None, violation=math.inf):
        super().__init__(message)
        self.best = best
        self.violation = violation


@dataclass(frozen=True)
class OracleSettings:
    tol: float = 1e-6
    rounds: int = 12
    rho0: float = 10.0
    rho_factor: float = 10.0
    inner_iter: int = 5000


@dataclass
class Transcription:
    M: int
    dt: float
    t0: float
    x0: AgentState
    reference: ReferenceTrajectory
    spec: BarycentricSpec
    terminal: Optional[AgentState]
    t_check: np.ndarray
    Gp: np.ndarray  # position response of the check points to node controls, per axis
    Gv: np.ndarray
    H: np.ndarray  # energy = 0.5 * sum_axes u^T H u
    infeasible: bool = False
    infeasible_node: Optional[int] = None
    g0: float = 0.0
    _free: dict = field(default_factory=dict, repr=False)

    @property
    def t_nodes(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.M + 1)

    def states(self, U: np.ndarray):
        """Positions and velocities at the check points for node controls ``U`` (shape ``(M+1, 2)``)."""
        tau = (self.t_check - self.t0)[:, None]
        p = self.x0.p[None, :] + self.x0.v[None, :] * tau + self.Gp @ U
        v = self.x0.v[None, :] + self.Gv @ U
        return p, v

    def energy(self, U: np.ndarray) -> float:
        return 0.5 * float(np.sum(U * (self.H @ U)))

    def constraint_values(self, U: np.ndarray, cases=None):
        """``g`` at every check point, with the per-point case (frozen if given)."""
        p, v = self.states(U)
        tc = self.t_check[:, None]
        r = p - self.reference.position(tc)
        rd = v - self.reference.velocity(tc)
        b = np.hypot(r[:, 0], r[:, 1])
        a = np.hypot(rd[:, 0], rd[:, 1])
        if cases is None:
            cases = b > self.spec.D
        g = np.where(cases, a * b * self.spec.kappa + np.sum(r * rd, axis=1), b * b - self.spec.D**2)
        return g, cases, (r, rd, a, b)


def _responses(M: int, dt: float, sub: int):
    """Zero-initial-state responses at the check points to unit node controls."""
    n = M + 1
    eye = np.eye(n)
    vk = np.zeros((M + 1, n))
    pk = np.zeros((M + 1, n))
    for k in range(M):
        vk[k + 1] = vk[k] + dt * 0.5 * (eye[k] + eye[k + 1])
        pk[k + 1] = pk[k] + dt * vk[k] + dt * dt * (eye[k] / 3.0 + eye[k + 1] / 6.0)
    rows_p, rows_v = [], []
    for k in range(M):
        for i in range(sub):
            tau = dt * i / sub
            du = (eye[k + 1] - eye[k]) / dt
            rows_v.append(vk[k] + eye[k] * tau + du * tau**2 / 2.0)
            rows_p.append(pk[k] + vk[k] * tau + eye[k] * tau**2 / 2.0 + du * tau**3 / 6.0)
    rows_p.append(pk[M])
    rows_v.append(vk[M])
    return np.array(rows_p), np.array(rows_v), pk[M], vk[M]


def _energy_matrix(M: int, dt: float) -> np.ndarray:
    H = np.zeros((M + 1, M + 1))
    for k in range(M):
        H[k, k] += dt / 3.0
        H[k + 1, k + 1] += dt / 3.0
        H[k, k + 1] += dt / 6.0
        H[k + 1, k] += dt / 6.0
    return H


def transcribe(scenario, M: int, agent: int = 0, terminal: Optional[AgentState] = None,
               horizon: Optional[float] = None, check_M: Optional[int] = None) -> Transcription:
    """Finite-dimensional version of the problem for one agent of ``scenario``.

    Parameters
    ----------
    scenario : object with ``agents``, ``reference``, ``spec``, ``t0``, ``tf``
    M : int
        Number of mesh intervals, ``M >= 10``.
    terminal : AgentState, optional
        Pinned final state; free when omitted.
    horizon : float, optional
        Overrides ``scenario.tf``.
    check_M : int, optional
        Resolution of the constraint check grid, rounded up to a multiple of
        ``M``; defaults to ``max(M, 200)``.
    """
    if M < 10:
        raise ValueError(f"mesh needs M >= 10, got {M}")
    t0 = float(scenario.t0)
    tf = float(scenario.tf if horizon is None else horizon)
    dt = (tf - t0) / M
    check_M = max(M, 200) if check_M is None else max(check_M, M)
    sub = int(math.ceil(check_M / M))
    x0 = scenario.agents[agent]
    if dt > 0.0:
        Gp, Gv, pM, vM = _responses(M, dt, sub)
    else:
        Gp = Gv = np.zeros((M * sub + 1, M + 1))
        pM = vM = np.zeros(M + 1)
    t_check = t0 + dt * np.concatenate([np.arange(M * sub) / sub, [M]])
    tr = Transcription(M, dt, t0, x0, scenario.reference, scenario.spec, terminal, t_check, Gp, Gv,
                       _energy_matrix(M, dt))
    tr._free["pM"], tr._free["vM"] = pM, vM
    rel = relative_state(x0, scenario.reference, t0)
    g0 = eval_g(rel, scenario.spec)[1]
    tr.g0 = g0
    if g0 > 1e-9 * max(1.0, scenario.spec.D * max(rel.a, 1.0)):
        tr.infeasible = True
        tr.infeasible_node = 0
    return tr


def _affine_controls(tr: Transcription):
    """``U = U_p + N W`` spanning all controls that reach the terminal state."""
    n = tr.M + 1
    if tr.terminal is None:
        return np.zeros((n, 2)), np.eye(n)
    T = tr.dt * tr.M
    C = np.vstack([tr._free["pM"], tr._free["vM"]])
    d = np.stack([tr.terminal.p - tr.x0.p - tr.x0.v * T, tr.terminal.v - tr.x0.v])  # (2 eqs, 2 axes)
    Up = np.linalg.lstsq(C, d, rcond=None)[0]
    _, _, Vt = np.linalg.svd(C)
    N = Vt[2:].T
    return Up, N


def _settled_cases(b: np.ndarray, D: float) -> np.ndarray:
    """Case I everywhere except after the last exit from the disk.

    A feasible trajectory never leaves the disk once inside, so at a solution
    this agrees with the pointwise case; during the iteration it stops a
    trajectory that dips into the disk and out again from being pulled back
    toward the disk by the Case-II bound.
    """
    inside = b <= D
    settled = np.logical_and.accumulate(inside[::-1])[::-1]
    return ~settled


def _case_grad(tr: Transcription, cases, r, rd, a, b):
    """Partial derivatives of ``g`` with respect to ``r`` and ``rdot`` at each check point."""
    k = tr.spec.kappa
    with np.errstate(invalid="ignore", divide="ignore"):
        bh = np.where(b[:, None] > 0, r / b[:, None], 0.0)
        ah = np.where(a[:, None] > 0, rd / a[:, None], 0.0)
    dg_r_I = k * a[:, None] * bh + rd
    dg_rd_I = k * b[:, None] * ah + r
    dg_r = np.where(cases[:, None], dg_r_I, 2.0 * r)
    dg_rd = np.where(cases[:, None], dg_rd_I, 0.0)
    return dg_r, dg_rd


def solve_oracle(tr: Transcription, settings: OracleSettings = OracleSettings(), initial=None):
    """Minimize the transcribed energy subject to ``g <= 0`` at every check point.

    ``initial`` optionally warm-starts the node controls (shape ``(M+1, 2)``);
    by default the iteration starts from the constraint-free optimum.

    Returns
    -------
    controls : ndarray, shape (M+1, 2)
        Node controls.
    energy : float
    max_violation : float
        Largest positive ``g`` at the check points.

    Raises
    ------
    OracleError
        If the violation or the projected gradient did not reach
        ``settings.tol`` within the allowed rounds.
    """
    if tr.dt == 0.0:
        return np.zeros((tr.M + 1, 2)), 0.0, 0.0
    Up, N = _affine_controls(tr)
    H = tr.H
    NHN = N.T @ H @ N
    NHUp = N.T @ H @ Up
    if initial is None:
        W = np.linalg.solve(NHN, -NHUp)
    else:
        # least-squares projection of the warm start onto the affine control set
        W = np.linalg.lstsq(N, np.asarray(initial, float) - Up, rcond=None)[0]
    m = len(tr.t_check)
    lam = np.zeros(m)
    rho = settings.rho0
    best = None

    def unpack(w):
        return Up + N @ w.reshape(-1, 2)

    prev_viol = math.inf
    for rnd in range(settings.rounds):
        U = unpack(W.ravel())
        b_now = tr.constraint_values(U)[2][3]
        cases = _settled_cases(b_now, tr.spec.D)

        def fun(w, cases=cases, lam=lam, rho=rho):
            U = unpack(w)
            g, _, (r, rd, a, b) = tr.constraint_values(U, cases)
            s = np.maximum(0.0, g + lam / rho)
            f = tr.energy(U) + 0.5 * rho * float(s @ s) - float(lam @ lam) / (2.0 * rho)
            dg_r, dg_rd = _case_grad(tr, cases, r, rd, a, b)
            w_ = (rho * s)[:, None]
            gU = H @ U + tr.Gp.T @ (w_ * dg_r) + tr.Gv.T @ (w_ * dg_rd)
            return f, (N.T @ gU).ravel()

        res = minimize(fun, W.ravel(), jac=True, method="L-BFGS-B",
                       options={"maxiter": settings.inner_iter, "gtol": 1e-12, "ftol": 1e-15, "maxcor": 30})
        W = res.x.reshape(-1, 2)
        U = unpack(res.x)
        g, _, (_, _, _, b_now) = tr.constraint_values(U)
        cases_now = _settled_cases(b_now, tr.spec.D)
        viol = float(max(0.0, np.max(g)))
        g_frozen, _, (r, rd, a, b) = tr.constraint_values(U, cases)
        lam = np.maximum(0.0, lam + rho * g_frozen)
        # projected gradient of the Lagrangian with the updated multipliers
        dg_r, dg_rd = _case_grad(tr, cases, r, rd, a, b)
        gU = H @ U + tr.Gp.T @ (lam[:, None] * dg_r) + tr.Gv.T @ (lam[:, None] * dg_rd)
        pg = float(np.linalg.norm(N.T @ gU, ord=np.inf))
        energy = tr.energy(U)
        if best is None or viol < best[2] or (viol <= settings.tol and energy < best[1]):
            best = (U, energy, viol)
        if viol <= settings.tol and pg <= settings.tol and np.array_equal(cases, cases_now):
            return U, energy, viol
        if viol > max(settings.tol, 0.25 * prev_viol):
            rho *= settings.rho_factor
        prev_viol = viol
    U, energy, viol = best
    if viol <= settings.tol:
        return U, energy, viol
    raise OracleError(f"oracle did not converge: max violation {viol:.3e}", best, viol)


def prolong(U: np.ndarray, factor: int) -> np.ndarray:
    """Node controls of a piecewise-linear control on a mesh refined ``factor`` times."""
    M = len(U) - 1
    s = np.arange(M * factor + 1) / factor
    return np.column_stack([np.interp(s, np.arange(M + 1), U[:, i]) for i in range(U.shape[1])])


def mesh_study(scenario, Ms=(50, 100, 200), terminal=None, horizon=None, agent: int = 0,
               settings: OracleSettings = OracleSettings()) -> list:
    """Oracle energies on nested meshes, each warm-started from the previous one.

    Returns a list of ``(M, energy, max_violation)``. Successive ``M`` must be
    integer multiples so the coarse solution is representable on the fine mesh.
    """
    out = []
    U = None
    prev = None
    check_M = max(max(Ms), 200)
    for M in Ms:
        tr = transcribe(scenario, M, agent, terminal, horizon, check_M=check_M)
        init = None if U is None else prolong(U, M // prev)
        U, E, v = solve_oracle(tr, settings, init)
        out.append((M, E, v))
        prev = M
    return out


def oracle_energy(scenario, M: int, terminal=None, horizon=None, agent: int = 0,
                  settings: OracleSettings = OracleSettings()) -> float:
    tr = transcribe(scenario, M, agent, terminal, horizon)
    return solve_oracle(tr, settings)[1]


@dataclass
class AdjudicationRow:
    index: int
    kappa: float
    E_paper: float
    E_derived: float
    E_oracle_paper: float
    E_oracle_derived: float
    mudot_paper: float
    mudot_derived: float
    residuals_paper: tuple
    residuals_derived: tuple
    closer: str

    @property
    def E_oracle(self) -> float:
        return min(self.E_oracle_paper, self.E_oracle_derived)

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        d["E_oracle"] = self.E_oracle
        d["residuals_paper"] = list(self.residuals_paper)
        d["residuals_derived"] = list(self.residuals_derived)
        return d


def _formula_run(problem, formula: str, settings, guesses, M: int, oracle_settings):
    from dataclasses import replace as _replace

    from .constraints import mu_ddot_plus, mu_dot_plus, mu_ode_residuals
    from .junctions import plan_entry

    sol = plan_entry(problem, _replace(settings, mu_dot_formula=formula), guesses)
    pre, post = sol.pre_arc, sol.post_arc
    te = post.exit_time
    energy = pre.energy(pre.t_start, pre.t_end) + post.energy(post.t_start, te)
    a, b, k = post.a, post.b0, post.kappa
    mudot = mu_dot_plus(formula, a, b, k)
    res = mu_ode_residuals(0.0, mudot, mu_ddot_plus(a, b, k), a, b, k)
    term = AgentState(post.position(te), post.velocity(te))
    scen = _OracleScenario((problem.x0,), problem.reference, problem.spec, problem.t0, te)
    E_or = mesh_study(scen, (M,), terminal=term, settings=oracle_settings)[0][1]
    return energy, E_or, mudot, res


@dataclass(frozen=True)
class _OracleScenario:
    agents: tuple
    reference: ReferenceTrajectory
    spec: BarycentricSpec
    t0: float
    tf: float


def adjudicate_mudot(family, settings=None, M: int = 200, oracle_settings: OracleSettings = OracleSettings(),
                     energy_tol: float = 1e-6) -> list:
    """Compare the two ``mudot(t1+)`` formulas on a family of barycentric entries.

    Each family member is a ``BarycentricEntryProblem`` or an object with
    ``problem`` and ``unknowns`` attributes (the unknowns seed the solver).
    Per member, the junction is solved under each formula, the trajectory
    energy to the disk boundary is computed, and the oracle is solved with the
    same end state pinned. ``closer`` names the formula whose planner energy is
    nearer its oracle value without falling below it (``"none"`` if both fall
    below by more than ``energy_tol`` relative).
    """
    from .junctions import SolverSettings

    settings = SolverSettings() if settings is None else settings
    rows = []
    for i, item in enumerate(family):
        problem = getattr(item, "problem", item)
        unknowns = getattr(item, "unknowns", None)
        guesses = None if unknowns is None else [unknowns.as_array()]
        Ep, Eop, mdp, rp = _formula_run(problem, "paper", settings, guesses, M, oracle_settings)
        Ed, Eod, mdd, rd = _formula_run(problem, "derived", settings, guesses, M, oracle_settings)
        gaps = {}
        for name, E, Eo in (("paper", Ep, Eop), ("derived", Ed, Eod)):
            if E >= Eo - energy_tol * max(1.0, abs(Eo)):
                gaps[name] = abs(E - Eo) / max(abs(Eo), 1e-300)
        closer = min(gaps, key=gaps.get) if gaps else "none"
        rows.append(AdjudicationRow(i, problem.spec.kappa, Ep, Ed, Eop, Eod, mdp, mdd, rp, rd, closer))
    return rows
