"""Walk through one barycentric entry: cubic approach, spiral, exit, brake.

Run from the repository root::

    python3 demos/spiral_entry.py
"""

import numpy as np

from barycentric import BarycentricSpec, ReferenceTrajectory, Scenario, run
from barycentric.core import relative_state
from barycentric.fixtures import barycentric_fixture

ref = ReferenceTrajectory.from_axes([0.0, 0.2, 0.0, 0.0], [0.0, 0.0, 0.01, 0.0])
spec = BarycentricSpec(D=1.0, kappa=0.5)

# Build a start state that admits a junction at b = 3, a = 1, t1 = 2.
fx = barycentric_fixture(ref, spec, 3.0, 0.4, 1.0, 2.0)
sc = Scenario([fx.problem.x0], ref, spec, R=0.1, t0=0.0, tf=9.0)
res = run(sc)

for e in res.junctions:
    print(f"{e['kind']:>18}  t={e['t']:.6f}  gap={e['gap']:.2e}")

entry = res.junctions[0]
print("predicted arrival", entry["predicted_arrival"])
print("constructed t1   ", fx.unknowns.t1, "solved t1", entry["t"])

s = res.series[0]
b = np.array([relative_state(type(sc.agents[0])(p, v), ref, t).b for t, p, v in zip(s.t, s.p, s.v)])
first = s.t[np.argmax(b <= spec.D + 1e-9)]
print("first sample with b <= D", first)
print("max g along the run", s.g.max())
print("energy", res.energies[0])
print("monitors ok:", res.monitors["all_ok"])
