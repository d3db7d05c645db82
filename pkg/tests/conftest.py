import numpy as np
import pytest

from src.config import Settings
from src.schlogl.schlogl_mesh import build_mesh
from src.schlogl.schlogl_problem import SchloglProblem


@pytest.fixture
def config() -> Settings:
    return Settings()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def schlogl_problem() -> SchloglProblem:
    return SchloglProblem()


@pytest.fixture(scope="session")
def coarse_mesh(schlogl_problem):
    return build_mesh(schlogl_problem, 128)


def relative_error(approx: np.ndarray, exact: np.ndarray) -> float:
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    return float(np.linalg.norm(approx - exact) / max(np.linalg.norm(exact), 1e-300))
