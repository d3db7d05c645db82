import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from src.config import SchloglSettings
from src.errors import ContractViolationError


@dataclass(frozen=True)
class SchloglProblem:
    """y_t = ν y_xx − (y−ζ₁)(y−ζ₂)(y−ζ₃) + Σ u_j 1_{ω_j} on (0,1), Neumann ends."""

    nu: float = 0.1
    zeta: Tuple[float, float, float] = (-1.0, 0.0, 2.0)
    gamma: float = 50.0
    control_bound: float = 30.0
    n_modes: int = 20
    n_actuators: int = 12
    rho: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.rho < 1.0:
            raise ContractViolationError(f"actuator coverage rho must lie in (0, 1), got {self.rho}")
        if self.n_modes < 1 or self.n_actuators < 1:
            raise ContractViolationError("mode and actuator counts must be positive")

    @classmethod
    def from_settings(cls, section: SchloglSettings) -> "SchloglProblem":
        return cls(
            nu=section.nu,
            zeta=tuple(section.zeta),
            gamma=section.gamma,
            control_bound=section.control_bound,
            n_modes=section.n_modes,
            n_actuators=section.n_actuators,
            rho=section.rho,
        )

    def reaction(self, y: np.ndarray) -> np.ndarray:
        a, b, c = self.zeta
        return -(y - a) * (y - b) * (y - c)

    def reaction_derivative(self, y: np.ndarray) -> np.ndarray:
        a, b, c = self.zeta
        return -((y - b) * (y - c) + (y - a) * (y - c) + (y - a) * (y - b))

    @property
    def actuator_width(self) -> float:
        return self.rho / self.n_actuators

    def actuator_supports(self) -> List[Tuple[float, float]]:
        half = 0.5 * self.actuator_width
        centers = [(2 * j - 1) / (2 * self.n_actuators) for j in range(1, self.n_actuators + 1)]
        return [(c - half, c + half) for c in centers]

    @staticmethod
    def initial_state(x: np.ndarray) -> np.ndarray:
        return np.cos(2.0 * math.pi * np.asarray(x) ** 2)
