import math
from dataclasses import replace

import numpy as np
import pytest

from barycentric.constraints import ConstraintCase, eval_g, mu_dot_plus, tangency
from barycentric.core import AgentState, BarycentricSpec, DomainError, ReferenceTrajectory, relative_state
from barycentric.arcs import SpiralArc
from barycentric.junctions import (
    BarycentricJunctionUnknowns,
    DiskEntryProblem,
    DiskJunctionUnknowns,
    InfeasibleStart,
    SolverSettings,
    barycentric_entry_residual,
    build_barycentric,
    build_disk,
    disk_entry_residual,
    entry_velocity_barycentric,
    entry_velocity_disk,
    gap_between,
    newton_solve,
    solve_junction,
    spiral_exit,
)
from barycentric.fixtures import barycentric_fixture

STATIC = ReferenceTrajectory.static()


def test_entry_velocity_barycentric_examples():
    r = np.array([2.0, 0.0])
    spec = BarycentricSpec(1.0, 0.5)
    for s, vy in ((1, math.sqrt(0.75)), (-1, -math.sqrt(0.75))):
        v = entry_velocity_barycentric(r, 1.0, 0.5, s)
        assert v == pytest.approx([-0.5, vy], abs=1e-15)
        case, g = eval_g(relative_state(AgentState(r, v), STATIC, 0.0), spec)
        assert case is ConstraintCase.CASE_I and abs(g) <= 1e-15
    v = entry_velocity_barycentric(np.array([0.0, 3.0]), 2.0, 1.0 - 1e-12, 1)
    assert v == pytest.approx([0.0, -2.0], abs=1e-5)
    with pytest.raises(DomainError):
        entry_velocity_barycentric(r, 0.0, 0.5, 1)


def test_entry_velocity_disk_examples():
    assert entry_velocity_disk(0.0, 1.0, 1) == pytest.approx([0.0, 1.0])
    assert entry_velocity_disk(0.0, 0.0, 1) == pytest.approx([0.0, 0.0])
    for phi in np.linspace(-3, 3, 13):
        v = entry_velocity_disk(phi, 1.3, -1)
        assert abs(v @ np.array([math.cos(phi), math.sin(phi)])) <= 1e-15
        assert np.linalg.norm(v) == pytest.approx(1.3)


def test_fixture_residuals_vanish(bary_fixtures, disk_fixtures_inside, disk_fixtures_outside):
    for fx in bary_fixtures:
        assert np.linalg.norm(barycentric_entry_residual(fx.unknowns, fx.problem)) <= 1e-8
    for fx in disk_fixtures_inside + disk_fixtures_outside:
        assert np.linalg.norm(disk_entry_residual(fx.unknowns, fx.problem)) <= 1e-8


def test_perturbed_unknowns_give_nonzero_residual(bary_fixtures, disk_fixtures_inside):
    fx = bary_fixtures[0]
    z = replace(fx.unknowns, t1=fx.unknowns.t1 + 0.1)
    assert np.linalg.norm(barycentric_entry_residual(z, fx.problem)) > 1e-3
    fx = disk_fixtures_inside[0]
    z = replace(fx.unknowns, entry_angle=fx.unknowns.entry_angle + 0.05)
    assert np.linalg.norm(disk_entry_residual(z, fx.problem)) > 1e-3


def test_residual_is_linear_in_mu_dot(bary_fixtures):
    for fx in bary_fixtures[:4]:
        p, z = fx.problem, fx.unknowns
        res_p = barycentric_entry_residual(z, p)
        res_d = barycentric_entry_residual(z, replace(p, mu_dot_formula="derived"))
        _, post = build_barycentric(z, p)
        r1 = post.relative(z.t1).r
        shift = (mu_dot_plus("paper", z.a, post.b0, post.kappa)
                 - mu_dot_plus("derived", z.a, post.b0, post.kappa)) * r1
        assert res_d[:2] == pytest.approx(res_p[:2], abs=1e-15)
        assert res_d[2:] - res_p[2:] == pytest.approx(shift, abs=1e-12)


def test_barycentric_residual_domain_errors(bary_fixtures):
    fx = bary_fixtures[0]
    z = fx.unknowns
    with pytest.raises(DomainError):
        barycentric_entry_residual(replace(z, a=0.0), fx.problem)
    with pytest.raises(DomainError):
        barycentric_entry_residual(replace(z, t1=fx.problem.t0), fx.problem)
    inside = fx.problem.reference.position(z.t1) + np.array([0.5, 0.0])
    with pytest.raises(DomainError):
        barycentric_entry_residual(replace(z, entry_position=inside), fx.problem)


def test_disk_residual_mirror_symmetry():
    # A symmetric approach along the x-axis; reflecting y -> -y maps the
    # problem with chirality s onto the one with -s and the angle phi onto -phi.
    x0 = AgentState([0.2, 0.0], [0.6, 0.0])
    for phi, a, t1 in ((0.4, 0.8, 1.2), (-1.1, 0.5, 2.0), (2.5, 1.3, 0.7)):
        r_plus = disk_entry_residual(DiskJunctionUnknowns(phi, a, t1), DiskEntryProblem(x0, 0.0, STATIC, 1.0, 1))
        r_minus = disk_entry_residual(DiskJunctionUnknowns(-phi, a, t1), DiskEntryProblem(x0, 0.0, STATIC, 1.0, -1))
        assert r_minus[0] == pytest.approx(r_plus[0], abs=1e-10)
        assert r_minus[1] == pytest.approx(-r_plus[1], abs=1e-10)
        assert r_minus[2] == pytest.approx(r_plus[2], abs=1e-9)
        assert abs(r_plus[2]) > 1e-6


def test_converges_from_exact_root(bary_fixtures, disk_fixtures_inside):
    for fx in bary_fixtures[:4] + disk_fixtures_inside[:3]:
        sol = solve_junction(fx.problem, fx.unknowns)
        assert sol.iterations <= 2
        assert sol.unknowns.as_array() == pytest.approx(fx.unknowns.as_array(), abs=1e-7)


def test_basin_of_attraction(bary_fixtures, disk_fixtures_inside):
    rng = np.random.default_rng(5)
    hits = 0
    fixtures = bary_fixtures[:6] + disk_fixtures_inside[:4]
    for fx in fixtures:
        z = fx.unknowns.as_array()
        guess = z * (1.0 + 0.05 * rng.choice([-1.0, 1.0], z.shape))
        try:
            sol = solve_junction(fx.problem, guess)
        except Exception:
            continue
        if np.max(np.abs(sol.unknowns.as_array() - z)) <= 1e-7 * max(1.0, np.max(np.abs(z))):
            hits += 1
    assert hits >= len(fixtures) - 1


def test_infeasible_start_rejected_before_iteration():
    spec = BarycentricSpec(1.0, 0.5)
    fx = barycentric_fixture(STATIC, spec, 3.0, 0.0, 1.0, 1.0)
    bad = replace(fx.problem, x0=AgentState([4.0, 0.0], [0.1, 0.0]))  # moving away
    with pytest.raises(InfeasibleStart) as err:
        solve_junction(bad, fx.unknowns)
    assert err.value.value == pytest.approx(4.0 * 0.1 * 0.5 + 0.4)
    disk = DiskEntryProblem(AgentState([2.0, 0.0], [0.0, 0.0]), 0.0, STATIC, 1.0)
    with pytest.raises(InfeasibleStart):
        solve_junction(disk, DiskJunctionUnknowns(0.0, 1.0, 1.0))


def test_newton_reports_failures():
    from barycentric.junctions import NoConvergence, SingularSystem

    with pytest.raises(SingularSystem):
        newton_solve(lambda x: np.array([1.0, 2.0 + 0.0 * x[1]]), [0.0, 0.0], 1e-12)
    with pytest.raises(NoConvergence):
        newton_solve(lambda x: np.array([x[0] ** 2 + 1.0]), [0.5], 1e-12, max_iter=5)
    res = newton_solve(lambda x: np.array([x[0] ** 2 - 2.0]), [1.0], 1e-14)
    assert res.x[0] == pytest.approx(math.sqrt(2.0), abs=1e-14)


def test_spiral_exit_example():
    arc = SpiralArc(5.0, 0.3, 1.0, 0.5, 1, STATIC, 2.0, 10.0, 1.0)
    rec = spiral_exit(arc)
    assert rec.t - 2.0 == pytest.approx(8.0, abs=1e-14)
    assert rec.case_before is ConstraintCase.CASE_I and rec.case_after is ConstraintCase.CASE_II
    assert rec.rdot_dot_r == pytest.approx(-1.0 * 1.0 * 0.5, abs=1e-14)
    from barycentric.arcs import brake_arc

    rel = arc.relative(rec.t)
    nxt = brake_arc(rel.r, rel.rdot, STATIC, rec.t, 1.0, rddot0=arc.relative_accel(rec.t))
    assert gap_between(arc, nxt, rec.t) <= 1e-9
    assert nxt.control(rec.t) == pytest.approx(rec.control, abs=1e-12)


def _udot_jump(sol, h=1e-6):
    t1 = sol.t1
    post = (sol.post_arc.control(t1 + h) - sol.post_arc.control(t1)) / h
    return post - sol.pre_arc.control_rate(t1)


def test_solution_invariants(bary_fixtures, disk_fixtures_inside, disk_fixtures_outside):
    for fx in bary_fixtures[:6]:
        sol = solve_junction(fx.problem, fx.unknowns)
        u = np.linalg.norm(sol.post_arc.control(sol.t1))
        assert sol.gap <= 1e-6 * max(1.0, u * u)
        rel = sol.post_arc.relative(sol.t1)
        assert abs(tangency(rel, fx.problem.spec, ConstraintCase.CASE_I)) <= 1e-8
        jump = _udot_jump(sol, 1e-7)
        r = rel.r
        s = abs(jump[0] * r[1] - jump[1] * r[0]) / (np.linalg.norm(jump) * np.linalg.norm(r))
        assert s <= 1e-5
    for fx in disk_fixtures_inside + disk_fixtures_outside:
        sol = solve_junction(fx.problem, fx.unknowns)
        rel = sol.post_arc.relative(sol.t1)
        assert abs(rel.b - fx.problem.D) <= 1e-12 and abs(rel.r @ rel.rdot) <= 1e-8
        q_hat = np.array([-rel.r[1], rel.r[0]]) / rel.b
        assert abs(sol.residual[2]) <= 1e-7
        assert abs(_udot_jump(sol, 1e-7) @ q_hat) <= 1e-5


def test_solver_is_deterministic(bary_fixtures):
    fx = bary_fixtures[1]
    guess = fx.unknowns.as_array() * 1.03
    a = solve_junction(fx.problem, guess)
    b = solve_junction(fx.problem, guess)
    assert np.array_equal(a.unknowns.as_array(), b.unknowns.as_array())
    assert a.iterations == b.iterations and a.residual_norm == b.residual_norm


def test_build_disk_geometry(disk_fixtures_outside):
    fx = disk_fixtures_outside[0]
    pre, post = build_disk(fx.unknowns, fx.problem)
    t1 = fx.unknowns.t1
    assert pre.position(t1) == pytest.approx(post.position(t1), abs=1e-12)
    assert pre.velocity(t1) == pytest.approx(post.velocity(t1), abs=1e-12)
