"""Barycentric motion constraint, tangency vectors and junction diagnostics."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .core import (
    AgentState,
    BarycentricSpec,
    DomainError,
    ReferenceTrajectory,
    RelativeState,
    beta,
    junction_gap,
    relative_state,
)


class ConstraintCase(enum.Enum):
    CASE_I = "CaseI"
    CASE_II = "CaseII"


def case_of(rel: RelativeState, spec: BarycentricSpec) -> ConstraintCase:
    return ConstraintCase.CASE_I if rel.b > spec.D else ConstraintCase.CASE_II


def eval_g(rel: RelativeState, spec: BarycentricSpec) -> tuple[ConstraintCase, float]:
    """Evaluate the two-case barycentric constraint; feasible iff the value is <= 0.

    Case I (``b > D``): ``beta + r . rdot``. Case II (``b <= D``): ``r . r - D^2``.
    """
    case = case_of(rel, spec)
    if case is ConstraintCase.CASE_I:
        return case, beta(rel, spec) + float(rel.r @ rel.rdot)
    return case, float(rel.r @ rel.r) - spec.D**2


def tangency(rel: RelativeState, spec: BarycentricSpec, case: ConstraintCase, D: Optional[float] = None) -> np.ndarray:
    """Tangency vector ``N``; all entries vanish on an active constrained arc.

    ``D`` overrides ``spec.D`` for fixed-distance (collision) constraints.
    """
    if case is ConstraintCase.CASE_I:
        return np.array([beta(rel, spec) + float(rel.r @ rel.rdot)])
    D = spec.D if D is None else D
    return np.array([float(rel.r @ rel.r) - D**2, 2.0 * float(rel.r @ rel.rdot)])


@dataclass(frozen=True)
class JunctionCheck:
    gap: float
    dNdt_plus_norm: float
    u_minus: np.ndarray
    u_plus: np.ndarray


def _richardson(f: Callable[[float], np.ndarray], h: float) -> np.ndarray:
    # f(s) = L + c1 s + c2 s^2 + ...; eliminate c1, c2 from s = h/4, h/2, h
    return (8.0 * f(h / 4.0) - 6.0 * f(h / 2.0) + f(h)) / 3.0


def check_theorem1(
    traj_sampler: Callable[[float], tuple[AgentState, np.ndarray]],
    g_order_q: int,
    spec: BarycentricSpec,
    t1: float,
    h: float,
    reference: ReferenceTrajectory,
    D: Optional[float] = None,
) -> JunctionCheck:
    """Numerically check control continuity and ``dN/dt(t1+) = 0`` at a junction.

    The one-sided limits ``u(t1-)`` and ``u(t1+)`` are Richardson-extrapolated
    from samples at ``t1 -/+ h/4, h/2, h``; the right derivative of the
    tangency vector is the extrapolated forward difference
    ``(N(t1 + 2s) - N(t1 + s)) / s``. Order ``q = 1`` selects the Case-I
    tangency vector and ``q = 2`` the fixed-distance one.
    """
    if not h > 0.0:
        raise DomainError("finite-difference step must be positive")
    if g_order_q not in (1, 2):
        raise DomainError("only constraint orders q = 1 and q = 2 are supported")
    case = ConstraintCase.CASE_I if g_order_q == 1 else ConstraintCase.CASE_II

    def u_at(t):
        return np.asarray(traj_sampler(t)[1], dtype=float)

    def N_at(t):
        state = traj_sampler(t)[0]
        return tangency(relative_state(state, reference, t), spec, case, D)

    u_minus = _richardson(lambda s: u_at(t1 - s), h)
    u_plus = _richardson(lambda s: u_at(t1 + s), h)
    dN = _richardson(lambda s: (N_at(t1 + 2.0 * s) - N_at(t1 + s)) / s, h)
    return JunctionCheck(junction_gap(u_minus, u_plus), float(np.linalg.norm(dN)), u_minus, u_plus)


def _require_b(b: float) -> None:
    if not b > 0.0:
        raise DomainError(f"relative distance must be positive, got b={b}")


def mu_ode_residuals(mu: float, mudot: float, muddot: float, a: float, b: float, kappa: float) -> tuple[float, float]:
    """Residuals of the two multiplier ODEs along a spiral arc (zero when satisfied)."""
    _require_b(b)
    w = 1.0 - kappa**2
    src = a**4 / b**3 * w**2
    res1 = src + muddot * b - a**2 / b * mu * w - mu * a * kappa
    res2 = a * mudot * w + mudot * a * kappa - muddot * b * kappa - 2.0 * src
    return res1, res2


def mu_dot_plus_paper(a: float, b: float, kappa: float) -> float:
    """Right-limit multiplier rate at a barycentric entry, as published."""
    _require_b(b)
    w = 1.0 - kappa**2
    return a**3 / b**3 * kappa * w**2 / (w + kappa)


def mu_dot_plus_derived(a: float, b: float, kappa: float) -> float:
    """Right-limit multiplier rate from eliminating ``mu''`` between the ODEs at ``mu = 0``."""
    _require_b(b)
    w = 1.0 - kappa**2
    return a**3 / b**3 * w**2 * (2.0 - kappa) / (w + kappa)


def mu_ddot_plus(a: float, b: float, kappa: float) -> float:
    """``mu''(t+)`` implied by the first ODE at ``mu = 0``."""
    _require_b(b)
    return -(a**4) * (1.0 - kappa**2) ** 2 / b**4


MU_DOT_FORMULAS = {"paper": mu_dot_plus_paper, "derived": mu_dot_plus_derived}


def mu_dot_plus(formula: str, a: float, b: float, kappa: float) -> float:
    try:
        fn = MU_DOT_FORMULAS[formula]
    except KeyError:
        raise DomainError(f"unknown mu-dot formula {formula!r}; expected 'paper' or 'derived'") from None
    return fn(a, b, kappa)
