"""P1 finite elements on a uniform mesh of (0,1) with Neumann ends."""
import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from src.errors import ConfigurationError, ContractViolationError
from src.schlogl.schlogl_problem import SchloglProblem

logger = logging.getLogger(__name__)

MIN_ELEMENTS = 64


@dataclass(frozen=True)
class FemMesh:
    n_elements: int
    nodes: np.ndarray
    mass_matrix: sp.csr_matrix
    stiffness_matrix: sp.csr_matrix
    lumped_mass: np.ndarray
    actuator_loads: np.ndarray
    modes: np.ndarray

    @property
    def h(self) -> float:
        return 1.0 / self.n_elements

    @property
    def n_nodes(self) -> int:
        return self.n_elements + 1

    def h_norm_sq(self, y: np.ndarray) -> float:
        return float(y @ (self.mass_matrix @ y))


def _assemble(n_elements: int) -> Tuple[sp.csr_matrix, sp.csr_matrix]:
    h = 1.0 / n_elements
    k_local = (1.0 / h) * np.array([[1.0, -1.0], [-1.0, 1.0]])
    m_local = (h / 6.0) * np.array([[2.0, 1.0], [1.0, 2.0]])

    rows, cols, k_data, m_data = [], [], [], []
    for e in range(n_elements):
        for i_local, i_global in enumerate((e, e + 1)):
            for j_local, j_global in enumerate((e, e + 1)):
                rows.append(i_global)
                cols.append(j_global)
                k_data.append(k_local[i_local, j_local])
                m_data.append(m_local[i_local, j_local])

    shape = (n_elements + 1, n_elements + 1)
    stiffness = sp.coo_matrix((k_data, (rows, cols)), shape=shape).tocsr()
    mass = sp.coo_matrix((m_data, (rows, cols)), shape=shape).tocsr()
    return mass, stiffness


def _actuator_loads(nodes: np.ndarray, supports) -> np.ndarray:
    """∫ 1_ω φ_i dx, exact for hat functions partially covered by ω."""
    h = nodes[1] - nodes[0]
    loads = np.zeros((nodes.size, len(supports)))
    for j, (lo, hi) in enumerate(supports):
        for e in range(nodes.size - 1):
            left, right = nodes[e], nodes[e + 1]
            a, b = max(left, lo), min(right, hi)
            if b <= a:
                continue
            loads[e, j] += ((right - a) ** 2 - (right - b) ** 2) / (2.0 * h)
            loads[e + 1, j] += ((b - left) ** 2 - (a - left) ** 2) / (2.0 * h)
    return loads


def _modes(nodes: np.ndarray, n_modes: int, mass: sp.csr_matrix) -> np.ndarray:
    raw = np.column_stack(
        [np.ones_like(nodes)]
        + [math.sqrt(2.0) * np.cos(k * math.pi * nodes) for k in range(1, n_modes)]
    )
    gram = raw.T @ (mass @ raw)
    factor = scipy.linalg.cholesky(gram, lower=True)
    return scipy.linalg.solve_triangular(factor, raw.T, lower=True).T


def build_mesh(problem: SchloglProblem, n_elements: int) -> FemMesh:
    if n_elements < MIN_ELEMENTS:
        raise ConfigurationError(f"n_elements={n_elements} is below the minimum {MIN_ELEMENTS}")
    if 1.0 / n_elements > problem.actuator_width:
        raise ConfigurationError(
            f"element width {1.0 / n_elements:.4g} exceeds the actuator width "
            f"{problem.actuator_width:.4g}; refine the mesh"
        )
    if problem.n_modes > n_elements:
        raise ConfigurationError("the mesh cannot represent the requested number of modes")

    nodes = np.linspace(0.0, 1.0, n_elements + 1)
    mass, stiffness = _assemble(n_elements)
    mesh = FemMesh(
        n_elements=n_elements,
        nodes=nodes,
        mass_matrix=mass,
        stiffness_matrix=stiffness,
        lumped_mass=np.asarray(mass.sum(axis=1)).ravel(),
        actuator_loads=_actuator_loads(nodes, problem.actuator_supports()),
        modes=_modes(nodes, problem.n_modes, mass),
    )
    logger.debug(f"Built mesh with {n_elements} elements and {problem.n_modes} modes")
    return mesh


def project_modes(mesh: FemMesh, y: np.ndarray) -> Tuple[np.ndarray, float]:
    y = np.asarray(y, dtype=float)
    if y.shape != (mesh.n_nodes,):
        raise ContractViolationError(f"expected {mesh.n_nodes} nodal values, got {y.shape}")
    coefficients = mesh.modes.T @ (mesh.mass_matrix @ y)
    return coefficients, float(coefficients @ coefficients)


def reconstruct(mesh: FemMesh, coefficients: np.ndarray) -> np.ndarray:
    return mesh.modes @ coefficients


def projection_penalties(mesh: FemMesh, states: np.ndarray) -> np.ndarray:
    """‖P y(t_k)‖²_H for every row of a state matrix."""
    coefficients = (mesh.mass_matrix @ states.T).T @ mesh.modes
    return np.sum(coefficients * coefficients, axis=1)
