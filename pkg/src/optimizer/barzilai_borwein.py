from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from src.models import BBMode


def weighted_inner(a: np.ndarray, b: np.ndarray, weights: np.ndarray) -> float:
    """Discrete L² product Σ_k dt·w_k ⟨a_k, b_k⟩."""
    return float(np.einsum("k,kj,kj->", weights, a, b))


def weighted_norm(a: np.ndarray, weights: np.ndarray) -> float:
    return float(np.sqrt(max(weighted_inner(a, a, weights), 0.0)))


def project_box(values: np.ndarray, bound: Optional[float]) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if bound is None:
        return values.copy()
    return np.clip(values, -bound, bound)


@dataclass(frozen=True)
class BBState:
    iter: int
    prev_control: np.ndarray
    prev_gradient: np.ndarray
    step: float
    step_bounds: Tuple[float, float]
    weights: np.ndarray
    mode: BBMode = BBMode.BB1


def bb_step(state: BBState, new_control: np.ndarray, new_gradient: np.ndarray) -> Tuple[BBState, float]:
    alpha_min, alpha_max = state.step_bounds
    du = new_control - state.prev_control
    dg = new_gradient - state.prev_gradient

    ug = weighted_inner(du, dg, state.weights)
    if ug <= 0.0:
        step = alpha_min
    elif state.mode is BBMode.BB1:
        step = weighted_inner(du, du, state.weights) / ug
    else:
        gg = weighted_inner(dg, dg, state.weights)
        step = ug / gg if gg > 0.0 else alpha_min
    if not np.isfinite(step):
        step = alpha_min
    step = max(min(step, alpha_max), alpha_min)

    new_state = replace(
        state,
        iter=state.iter + 1,
        prev_control=np.array(new_control, copy=True),
        prev_gradient=np.array(new_gradient, copy=True),
        step=step,
        mode=state.mode.toggled(),
    )
    return new_state, step
