from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from src.models import HorizonStatus, StopReason, VerdictStatus


# -------------------
# Costs
# -------------------


class CostBreakdown(BaseModel):
    model_config = ConfigDict(frozen=True)

    state_term: float = Field(..., ge=0, example=0.41)
    control_term: float = Field(..., ge=0, example=0.12)
    terminal_term: float = Field(0.0, ge=0, example=0.0)
    total: float = Field(..., ge=0, example=0.53)

    @classmethod
    def zero(cls) -> "CostBreakdown":
        return cls(state_term=0.0, control_term=0.0, terminal_term=0.0, total=0.0)


class TraceRow(BaseModel):
    iter: int
    cost: float
    grad_norm: float
    step: float


class WindowErrors(BaseModel):
    state_error: float = Field(..., ge=0, example=1.2e-3)
    control_error: float = Field(..., ge=0, example=4.5e-3)


# -------------------
# Verdicts / reports
# -------------------


class Verdict(BaseModel):
    name: str = Field(..., example="V2_window_errors_monotone")
    status: VerdictStatus
    margin: Optional[float] = Field(None, example=3.1e-4)
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status != VerdictStatus.FAILED


class HorizonRecord(BaseModel):
    horizon: float
    status: HorizonStatus
    error: Optional[str] = None
    iterations: Optional[int] = None
    converged: Optional[bool] = None
    stop_reason: Optional[StopReason] = None
    final_projected_gradient_norm: Optional[float] = None


class TCircleSelection(BaseModel):
    t_circle: float
    theta: float
    threshold: float = Field(..., description="Φ_T = 4/(T−s)·(𝔙_s(z) + ½D₁)")
    cost: float
    margin: float = Field(..., description="2J − ((T−s)/2)·ϑ, nonnegative when the bound holds")
    value_start: float = Field(..., ge=0)
    terminal_allowance: float = Field(0.0, ge=0)

    @property
    def bound_holds(self) -> bool:
        return self.margin >= 0.0 and self.theta <= self.threshold


class ExperimentReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    experiment_id: str = Field(..., example="scalar-n2")
    horizons: List[float]
    costs: List[Optional[CostBreakdown]]
    ith_reference_cost: Optional[float] = None
    window: Tuple[float, float]
    window_errors: List[Optional[WindowErrors]] = Field(..., alias="restriction_errors")
    terminal_norms: List[Optional[float]]
    records: List[HorizonRecord] = []
    t_circle: Optional[TCircleSelection] = None
    verdicts: Dict[str, Verdict] = {}
    notes: List[str] = []

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True, indent=2)


class CounterexampleRow(BaseModel):
    horizon: float
    fth_cost: float
    fth_closed_form: float
    ith_cost: float
    relative_error: float


class CounterexampleReport(BaseModel):
    experiment_id: str = "counterexample"
    y0: float
    rows: List[CounterexampleRow]
    verdicts: Dict[str, Verdict] = {}

    @property
    def all_passed(self) -> bool:
        return all(v.passed for v in self.verdicts.values())


class DppCheckResult(BaseModel):
    family: str
    s: float
    horizon: float
    steps_per_unit: int
    fth_cost: float
    value_start: float
    value_end: float
    residual: float


class EnergyReport(BaseModel):
    c1: float = Field(..., example=2.25)
    c1_argmax: float = Field(..., example=0.5)
    alpha_next: float = Field(..., example=395.78)
    kappa: float
    t_circle: float
    min_state_norm_sq: float
    mean_bound: float = Field(..., description="2/(T−s)·‖y‖²_{L²(I,H)}")
    control_energy: Optional[float] = None


class AnalyticBranchCheck(BaseModel):
    check_y0: float
    separation_error: float
    printed_error: float
    matched: str = Field(..., example="separation")


class RouteComparison(BaseModel):
    horizon: float
    chi: float
    optimizer_cost: float
    riccati_cost: float
    relative_gap: float
