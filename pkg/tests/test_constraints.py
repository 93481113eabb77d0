import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from barycentric.arcs import DiskArc, SpiralArc, UnconstrainedArc, solve_unconstrained_bvp
from barycentric.constraints import (
    ConstraintCase,
    check_theorem1,
    eval_g,
    mu_ddot_plus,
    mu_dot_plus,
    mu_dot_plus_derived,
    mu_dot_plus_paper,
    mu_ode_residuals,
    tangency,
)
from barycentric.core import AgentState, BarycentricSpec, DomainError, ReferenceTrajectory, make_relative

SPEC = BarycentricSpec(1.0, 0.5)


@pytest.mark.parametrize("r,rd,case,value", [
    ((2, 0), (-1, 0), ConstraintCase.CASE_I, -1.0),
    ((0.6, 0), (3, -7), ConstraintCase.CASE_II, -0.64),
    ((2, 0), (1, 0), ConstraintCase.CASE_I, 3.0),
])
def test_eval_g_examples(r, rd, case, value):
    c, g = eval_g(make_relative(r, rd), SPEC)
    assert c is case
    assert g == pytest.approx(value)


def test_tangency_examples():
    rd = np.array([-0.5, math.sqrt(0.75)])
    assert tangency(make_relative([2, 0], rd), SPEC, ConstraintCase.CASE_I) == pytest.approx([0.0], abs=1e-15)
    assert tangency(make_relative([1, 0], [0, 2]), SPEC, ConstraintCase.CASE_II) == pytest.approx([0, 0])
    assert tangency(make_relative([1, 0], [0.5, 0]), SPEC, ConstraintCase.CASE_II) == pytest.approx([0, 1.0])


@given(st.tuples(st.floats(-5, 5), st.floats(-5, 5)), st.floats(0.1, 3.0))
def test_case_tag_follows_distance(r, D):
    rel = make_relative(r, [0.3, -0.2])
    case, _ = eval_g(rel, BarycentricSpec(D, 0.4))
    assert (case is ConstraintCase.CASE_I) == (rel.b > D)


def _jump_sampler(t1):
    left = solve_unconstrained_bvp(AgentState([0, 0], [0, 0]), t1 - 1.0, AgentState([0.5, 0], [1, 0]), t1)
    def sample(t):
        if t < t1:
            return AgentState(left.position(t), left.velocity(t)), np.array([1.0, 0.0])
        return AgentState(left.position(t1), left.velocity(t1)), np.array([2.0, 0.0])
    return sample


def test_theorem1_detects_control_jump():
    rep = check_theorem1(_jump_sampler(1.0), 1, SPEC, 1.0, 1e-3, ReferenceTrajectory.static([50, 50]))
    assert rep.gap == pytest.approx(0.5)


def test_theorem1_no_junction_constant_control():
    arc = solve_unconstrained_bvp(AgentState([5, 0], [0, 0]), 0.0, AgentState([5.5, 0.5], [1, 1]), 1.0)
    sampler = lambda t: (AgentState(arc.position(t), arc.velocity(t)), np.array([1.0, 1.0]))
    rep = check_theorem1(sampler, 1, BarycentricSpec(1.0, 0.5), 0.5, 1e-3, ReferenceTrajectory.static())
    assert rep.gap == 0.0


def test_theorem1_on_constructed_fixture(bary_fixtures):
    from barycentric.junctions import _sampler, build_barycentric

    for fx in bary_fixtures[:4]:
        pre, post = build_barycentric(fx.unknowns, fx.problem)
        t1 = fx.unknowns.t1
        rep = check_theorem1(_sampler(pre, post, t1), 1, fx.problem.spec, t1, 1e-4, fx.problem.reference)
        assert rep.gap <= 1e-8
        assert rep.dNdt_plus_norm <= 1e-6


def test_theorem1_rejects_bad_arguments():
    with pytest.raises(DomainError):
        check_theorem1(_jump_sampler(1.0), 1, SPEC, 1.0, 0.0, ReferenceTrajectory.static())
    with pytest.raises(DomainError):
        check_theorem1(_jump_sampler(1.0), 3, SPEC, 1.0, 1e-3, ReferenceTrajectory.static())


def test_mu_ode_examples():
    a, b, k = 1.0, 2.0, 0.5
    res1, res2 = mu_ode_residuals(0.0, mu_dot_plus_paper(a, b, k), mu_ddot_plus(a, b, k), a, b, k)
    assert res1 == pytest.approx(0.0, abs=1e-15)
    # published rate does not satisfy the second equation at mu = 0
    assert abs(res2) > 1e-3
    assert mu_ode_residuals(0, 0, 0, 0, 1.0, 0.5) == (0.0, 0.0)
    with pytest.raises(DomainError):
        mu_ode_residuals(0, 0, 0, 1, 0.0, 0.5)


def test_mu_dot_values():
    # verified against the published expression by hand: 0.125 * 0.5 * 0.5625 / 1.25
    assert mu_dot_plus_paper(1, 2, 0.5) == pytest.approx(0.028125)
    assert mu_dot_plus_derived(1, 2, 0.5) == pytest.approx(0.084375)
    assert mu_dot_plus_paper(0, 2, 0.5) == 0.0 and mu_dot_plus_derived(0, 2, 0.5) == 0.0
    assert mu_dot_plus_paper(1, 2, 1e-9) == pytest.approx(0.0, abs=1e-8)
    assert mu_dot_plus_derived(1, 4, 0.5) == pytest.approx(mu_dot_plus_derived(1, 2, 0.5) / 8)
    with pytest.raises(DomainError):
        mu_dot_plus_paper(1, 0, 0.5)
    with pytest.raises(DomainError):
        mu_dot_plus("other", 1, 2, 0.5)


def test_derived_rate_does_not_vanish_for_small_kappa():
    # (2 - k) / (1 - k^2 + k) -> 2 as k -> 0
    assert mu_dot_plus_derived(1, 1, 1e-9) == pytest.approx(2.0)


@given(st.floats(0.01, 10), st.floats(0.1, 10), st.floats(0.01, 0.99))
def test_derived_rate_zeros_both_odes(a, b, k):
    res = mu_ode_residuals(0.0, mu_dot_plus_derived(a, b, k), mu_ddot_plus(a, b, k), a, b, k)
    scale = max(1.0, a**4 / b**3)
    assert abs(res[0]) <= 1e-10 * scale and abs(res[1]) <= 1e-10 * scale


def test_arcs_keep_constraint_active():
    ref = ReferenceTrajectory.from_axes([0, 0.2, 0.01, 0.001], [1, -0.1, 0.02, 0])
    sp = SpiralArc(4.0, 0.3, 1.2, 0.4, -1, ref, 0.5, 0.5 + 3.0 / (1.2 * 0.4), 1.0)
    for t in np.linspace(sp.t_start, sp.t_end, 1000):
        case, g = eval_g(sp.relative(t), BarycentricSpec(1.0, 0.4))
        assert abs(g) <= 1e-9
    dk = DiskArc(1.0, 0.7, 1.0, 1, ref, 0.0, 5.0)
    for t in np.linspace(0, 5, 1000):
        n = tangency(dk.relative(t), BarycentricSpec(1.0, 0.4), ConstraintCase.CASE_II)
        assert np.max(np.abs(n)) <= 1e-9
