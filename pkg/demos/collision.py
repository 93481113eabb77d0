"""Two agents: the second skirts the first along a circle of radius 2R."""

import numpy as np

from barycentric import run
from barycentric.fixtures import collision_scenario

sc, fx = collision_scenario(seed=2)
res = run(sc)
entry = next(e for e in res.junctions if e["kind"] == "collision_entry")
print("contact at t =", entry["t"], "chirality", entry["chirality"])
print("udot . q_hat residual", entry["udot_q_residual"])

tr0, tr1 = res.trajectories
ts = np.linspace(sc.t0, sc.tf, 2001)
d = np.array([np.linalg.norm(tr0.state(t).p - tr1.state(t).p) for t in ts])
print(f"min separation {d.min():.12f} vs 2R = {2 * sc.R}")

# without replanning the straight coast would have collided
x1 = sc.agents[1]
coast = np.array([np.linalg.norm(x1.p + x1.v * t - tr0.state(t).p) for t in ts])
print(f"coasting min separation {coast.min():.4f}")
