"""Compare the planner's entry-to-exit energy with the direct transcription.

The oracle solves the same boundary problem (same start, same exit state and
time) on nested meshes. It is free to vary the relative speed along the
active arc, and here it finds lower energies than the constant-speed spiral.
"""

from types import SimpleNamespace

from barycentric.core import AgentState
from barycentric.fixtures import random_barycentric_fixtures
from barycentric.junctions import solve_junction
from barycentric.oracle import mesh_study

for fx in random_barycentric_fixtures(3, seed=2):
    sol = solve_junction(fx.problem, fx.unknowns)
    te = sol.post_arc.exit_time
    E_plan = sol.pre_arc.energy(sol.pre_arc.t_start, sol.t1) + sol.post_arc.energy(sol.t1, te)
    end = AgentState(sol.post_arc.position(te), sol.post_arc.velocity(te))
    p = fx.problem
    sc = SimpleNamespace(agents=(p.x0,), reference=p.reference, spec=p.spec, t0=p.t0, tf=te)
    study = mesh_study(sc, (50, 100, 200), terminal=end)
    Es = ", ".join(f"M={M}: {E:.5f}" for M, E, _ in study)
    print(f"kappa={p.spec.kappa}: planner {E_plan:.5f}; oracle {Es}; violation {study[-1][2]:.1e}")
