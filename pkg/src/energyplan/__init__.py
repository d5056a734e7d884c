"""Energy-optimal trajectories for a planar double integrator among polygons.

The planner searches ordered sequences of obstacle vertices. For each
sequence it solves the junction conditions exactly, giving piecewise-cubic
trajectories that touch those vertices, and checks them for collisions
analytically.
"""

__version__ = "0.1.0"

from .geometry import BoundaryConditions, InvalidEnvironment, PolygonEnvironment, inflate_environment
from .trajectory import CubicArc, Trajectory, arc_energy, hermite_arc, trajectory_energy
from .bvp import ChainProblem, ChainSolution, ConditioningError, solve_chain
from .feasibility import arc_feasible, chain_feasible, crossing_times, vertex_contact_legal
from .planner import PlanResult, plan, plan_min_distance, plan_min_energy, plan_suffix

__all__ = [
    "BoundaryConditions", "InvalidEnvironment", "PolygonEnvironment", "inflate_environment",
    "CubicArc", "Trajectory", "arc_energy", "hermite_arc", "trajectory_energy",
    "ChainProblem", "ChainSolution", "ConditioningError", "solve_chain",
    "arc_feasible", "chain_feasible", "crossing_times", "vertex_contact_legal",
    "PlanResult", "plan", "plan_min_distance", "plan_min_energy", "plan_suffix",
]
