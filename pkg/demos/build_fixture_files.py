"""Regenerate the scenario files under fixtures/ from the reverse-built constructors."""

import json
import math
from pathlib import Path

import numpy as np

from barycentric import AgentState, BarycentricSpec, ReferenceTrajectory, Scenario, entry_velocity_barycentric
from barycentric.cli import scenario_to_dict
from barycentric.fixtures import barycentric_fixture, collision_scenario

OUT = Path(__file__).resolve().parent.parent / "fixtures"


def save(name, sc):
    OUT.mkdir(exist_ok=True)
    (OUT / f"{name}.json").write_text(json.dumps(scenario_to_dict(sc), indent=2) + "\n")
    print("wrote", OUT / f"{name}.json")


def main():
    ref = ReferenceTrajectory.static()
    spec = BarycentricSpec(1.0, 0.5)

    # junction onto the spiral at b = 3, a = 1 after two time units
    fx = barycentric_fixture(ref, spec, 3.0, 0.4, 1.0, 2.0, chirality=1)
    save("spiral_entry", Scenario([fx.problem.x0], ref, spec, 0.1, 0.0, 10.0))

    # already on the spiral: arrival after (5 - 1) / (1 * 0.5) = 8
    v = entry_velocity_barycentric(np.array([5.0, 0.0]), 1.0, 0.5, 1)
    save("on_spiral", Scenario([AgentState([5.0, 0.0], v)], ref, spec, 0.1, 0.0, 12.0))

    # moving reference
    moving = ReferenceTrajectory.from_axes([0.0, 0.2, 0.02, -0.001], [0.5, -0.1, 0.0, 0.0005])
    fx = barycentric_fixture(moving, BarycentricSpec(1.0, 0.3), 4.0, -2.0, 0.8, 1.5, chirality=-1)
    save("moving_reference", Scenario([fx.problem.x0], moving, fx.problem.spec, 0.1, 0.0, 20.0))

    # inside the disk, drifting outward
    save("in_disk", Scenario([AgentState([0.3, 0.2], [0.4, 0.1])], ref, spec, 0.1, 0.0, 20.0))

    # two agents, tangential avoidance
    sc, _ = collision_scenario(0)
    save("collision", sc)

    # approaching too slowly for the barycentric bound
    save("infeasible", Scenario([AgentState([3.0, 0.0], [0.0, 1.0])], ref, spec, 0.1, 0.0, 5.0))


if __name__ == "__main__":
    main()
