import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np

from src.core.quadrature import trapezoid_l2_sq
from src.core.trajectories import ControlSignal, StatePath
from src.errors import ContractViolationError, DomainError
from src.schemas import EnergyReport
from src.schlogl.schlogl_mesh import FemMesh, project_modes, projection_penalties
from src.schlogl.schlogl_problem import SchloglProblem

logger = logging.getLogger(__name__)


def reaction_bound(problem: SchloglProblem) -> Tuple[float, float]:
    """C₁ = max over w of −(w − ζ₁)(w − ζ₃), with its argmax.

    With ζ₂ = 0, g(w) = −w(w − ζ₁)(w − ζ₃), so g(w)·w ≤ C₁ w², the one-sided
    bound the energy estimate relies on.
    """
    a, b, c = problem.zeta
    if b != 0.0:
        raise ContractViolationError("the energy bound assumes the middle root sits at zero")
    vertex = 0.5 * (a + c)
    return float(-(vertex - a) * (vertex - c)), vertex


def reaction_slope_bound(problem: SchloglProblem) -> float:
    """sup_w g'(w) for the cubic g(w) = −(w − ζ₁)(w − ζ₂)(w − ζ₃)."""
    a, b, c = problem.zeta
    total = a + b + c
    return total * total / 3.0 - (a * b + b * c + c * a)


def control_magnitude_bound(problem: SchloglProblem, mesh: FemMesh, path: StatePath) -> float:
    """A priori bound on |u_j| for a stationary control along ``path``.

    Stationarity gives u_j = −∫_{ω_j} p, and comparison for the adjoint
    −p' = νp_xx + g'(y)p + γPy with p(T) = 0 bounds ‖p‖_∞ by
    γS(e^{λT} − 1)/λ, where λ = sup g' and S = sup_t ‖Py(t)‖_∞. A bound
    below C_u means the box can never be active at a stationary point.
    """
    coefficients = (mesh.mass_matrix @ path.values.T).T @ mesh.modes
    peak = float(np.max(np.abs(coefficients @ mesh.modes.T)))
    span = path.grid.t_end - path.grid.t_start
    slope = reaction_slope_bound(problem)
    growth = math.expm1(slope * span) / slope if slope > 0 else span
    return problem.actuator_width * problem.gamma * peak * growth


def h_norms_sq(mesh: FemMesh, states: np.ndarray) -> np.ndarray:
    return np.einsum("ki,ki->k", states, (mesh.mass_matrix @ states.T).T)


def energy_diagnostics(
    problem: SchloglProblem,
    mesh: FemMesh,
    path: StatePath,
    u: Optional[ControlSignal] = None,
    s: Optional[float] = None,
) -> EnergyReport:
    grid = path.grid
    s = grid.t_start if s is None else s
    T = grid.t_end
    if not grid.t_start <= s < T:
        raise DomainError(f"s={s} is outside the path interval [{grid.t_start}, {T})")

    c1, argmax = reaction_bound(problem)
    alpha_next = problem.nu * problem.n_modes**2 * math.pi**2 + 1.0

    norms = h_norms_sq(mesh, path.values)
    nodes = grid.nodes
    half = nodes >= 0.5 * (s + T) - 1e-12
    k = int(np.flatnonzero(half)[np.argmin(norms[half])])

    report = EnergyReport(
        c1=c1,
        c1_argmax=argmax,
        alpha_next=alpha_next,
        kappa=alpha_next - 2.0 * c1,
        t_circle=float(nodes[k]),
        min_state_norm_sq=float(norms[k]),
        mean_bound=2.0 / (T - s) * trapezoid_l2_sq(norms, grid),
        control_energy=None if u is None else 0.5 * trapezoid_l2_sq(
            np.sum(u.values * u.values, axis=1), u.grid
        ),
    )
    logger.info(
        f"Energy diagnostics on [{s}, {T}]: κ={report.kappa:.4g}, "
        f"T°={report.t_circle:.4g}, min ‖y‖²_H={report.min_state_norm_sq:.3e}"
    )
    return report


def kernel_witness(problem: SchloglProblem, mesh: FemMesh) -> Tuple[float, float]:
    """Penalty and nonlinearity mean (g(ψ), 1)_H of ψ = cos(Nπx), the first cosine outside ℰ_N."""
    psi = np.cos(problem.n_modes * math.pi * mesh.nodes)
    _, penalty = project_modes(mesh, psi)
    mean = float(mesh.lumped_mass @ problem.reaction(psi))
    return penalty, mean


def projected_norms(mesh: FemMesh, path: StatePath) -> np.ndarray:
    return np.sqrt(projection_penalties(mesh, path.values))


def distance_to_constant(mesh: FemMesh, y: np.ndarray, level: float) -> float:
    diff = np.asarray(y, dtype=float) - level
    return math.sqrt(max(mesh.h_norm_sq(diff), 0.0))


def snapshot_indices(path: StatePath, times: Sequence[float]) -> List[int]:
    grid = path.grid
    indices = []
    for t in times:
        if t < grid.t_start - 1e-12 or t > grid.t_end + 1e-12:
            raise DomainError(f"snapshot time {t} is outside [{grid.t_start}, {grid.t_end}]")
        indices.append(int(round((t - grid.t_start) / grid.dt)))
    return indices


def snapshots(path: StatePath, times: Sequence[float]) -> np.ndarray:
    """Nodal states at the grid nodes nearest to ``times``, one column per time."""
    return path.values[snapshot_indices(path, times)].T
