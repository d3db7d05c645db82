import logging
import math
from collections import deque

logger = logging.getLogger(__name__)


class NonMonotoneLineSearch:
    """Accepts a trial cost when it does not exceed the worst of the last few accepted costs.

    Keeps counters of halvings and of fallbacks to the minimal step so a
    solve can report how often the safeguard fired.
    """

    def __init__(self, memory: int = 10, max_halvings: int = 20, name: str = "default"):
        self.memory = memory
        self.max_halvings = max_halvings
        self.name = name

        self.history: deque = deque(maxlen=memory)
        self.halvings = 0
        self.fallbacks = 0

    def reset(self, cost: float):
        self.history.clear()
        self.history.append(cost)

    @property
    def reference(self) -> float:
        return max(self.history) if self.history else math.inf

    def accepts(self, cost: float) -> bool:
        return math.isfinite(cost) and cost <= self.reference

    def on_halving(self):
        self.halvings += 1

    def on_fallback(self, step: float):
        self.fallbacks += 1
        logger.warning(
            f"Line search '{self.name}': no acceptable step after "
            f"{self.max_halvings} halvings, taking step {step:.3g}"
        )

    def record(self, cost: float):
        self.history.append(cost)

    def get_state(self) -> dict:
        return {
            "name": self.name,
            "reference": self.reference,
            "memory": len(self.history),
            "halvings": self.halvings,
            "fallbacks": self.fallbacks,
        }
