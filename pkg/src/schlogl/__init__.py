from src.schlogl.schlogl_diagnostics import (
    control_magnitude_bound,
    distance_to_constant,
    energy_diagnostics,
    kernel_witness,
    reaction_bound,
    reaction_slope_bound,
    snapshots,
)
from src.schlogl.schlogl_mesh import FemMesh, build_mesh, project_modes, reconstruct
from src.schlogl.schlogl_problem import SchloglProblem
from src.schlogl.schlogl_solver import cnab_forward, free_dynamics, schlogl_callbacks, schlogl_cost

__all__ = [
    "FemMesh",
    "SchloglProblem",
    "build_mesh",
    "cnab_forward",
    "control_magnitude_bound",
    "distance_to_constant",
    "energy_diagnostics",
    "free_dynamics",
    "kernel_witness",
    "project_modes",
    "reaction_bound",
    "reaction_slope_bound",
    "reconstruct",
    "schlogl_callbacks",
    "schlogl_cost",
    "snapshots",
]
