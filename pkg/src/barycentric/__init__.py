"""Energy-minimal trajectories for double-integrator agents under barycentric
aggregation and pairwise separation constraints.

Closed-form motion primitives (cubic, logarithmic spiral, disk boundary),
shooting solvers for the junctions between them, an event-driven simulator
with invariant monitors, and a direct-transcription oracle.
"""

from .arcs import (
    BrakeArc,
    DiskArc,
    SpiralArc,
    UnconstrainedArc,
    arc_energy,
    brake_arc,
    coast_arc,
    disk_control,
    disk_propagate,
    solve_unconstrained_bvp,
    spiral_control,
    spiral_propagate,
)
from .constraints import (
    ConstraintCase,
    JunctionCheck,
    check_theorem1,
    eval_g,
    mu_ddot_plus,
    mu_dot_plus,
    mu_dot_plus_derived,
    mu_dot_plus_paper,
    mu_ode_residuals,
    tangency,
)
from .core import (
    AgentState,
    BarycentricSpec,
    Costates,
    DomainError,
    ReferenceTrajectory,
    RelativeState,
    beta,
    junction_gap,
    relative_state,
    vec,
)
from .junctions import (
    BarycentricEntryProblem,
    BarycentricJunctionUnknowns,
    DiskEntryProblem,
    DiskJunctionUnknowns,
    FeasibilityError,
    InfeasibleStart,
    JunctionSolution,
    NoConvergence,
    SingularSystem,
    SolverSettings,
    barycentric_entry_residual,
    disk_entry_residual,
    entry_velocity_barycentric,
    entry_velocity_disk,
    newton_solve,
    plan_entry,
    solve_junction,
    solve_multistart,
    spiral_exit,
)
from .oracle import OracleSettings, Transcription, adjudicate_mudot, mesh_study, solve_oracle, transcribe
from .sim import Scenario, ScenarioError, SimResult, collision_constraint, detect_event, run

__version__ = "0.1.0"
