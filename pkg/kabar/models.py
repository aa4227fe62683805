from pydantic import BaseModel, ConfigDict, Field
from typing import Optional, List, Literal
from enum import Enum


class RefineMode(str, Enum):
    BASIC = "basic"
    ADVANCED = "advanced"


class ConflictKind(str, Enum):
    NOT_SIMPLE_IN_QUOTIENT = "not_simple_in_quotient"
    OVERLOAD = "overload"
    NO_PROGRESS = "no_progress"


class StepKind(str, Enum):
    NEGATIVE_CYCLE = "negative_cycle"
    ZERO_CYCLE = "zero_cycle"
    BALANCE = "balance"


# Configuration Models
class RefineConfig(BaseModel):
    """Parameters of one refinement run.

    `tau` left unset resolves per block count through `tau_for`.
    """

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    tau: Optional[int] = Field(None, ge=1)
    mu: int = Field(20, ge=1)
    lambda_: int = Field(3, ge=1, alias="lambda")
    mode: RefineMode = RefineMode.ADVANCED
    zero_cycle_diversification: bool = True
    seed: int = 0
    max_zero_cycles_per_solve: int = Field(10, ge=0)
    conflict_free_mode: bool = False
    mark_queued_nodes: bool = False
    randomize_trial_parameters: bool = True
    # target block limit is ceil((1 + imbalance) * ceil(n / k))
    imbalance: float = Field(0.0, ge=0)

    def tau_for(self, k: int) -> int:
        if self.tau is not None:
            return self.tau
        return 15 if k <= 8 else 7

    def balancing_tau(self, k: int) -> int:
        # basic balancing in basic mode, advanced balancing otherwise
        return 1 if self.mode == RefineMode.BASIC else self.tau_for(k)


# Metrics Models
class StepRecord(BaseModel):
    kind: StepKind
    cut_delta: int
    moved_nodes: int
    overload_after: int


class TrialMetrics(BaseModel):
    kind: Literal["trial"] = "trial"
    trial: int
    seed: int
    epsilon: float
    tau: int
    mu: int
    lambda_: int = Field(..., alias="lambda")
    initial_cut: int
    initial_max_block_size: int
    cut: int
    max_block_size: int
    block_limit: int
    balanced: bool
    perfectly_balanced: bool
    steps: List[StepRecord] = []
    wall_time_s: float

    model_config = ConfigDict(populate_by_name=True)


class RunSummary(BaseModel):
    kind: Literal["best"] = "best"
    best_trial: int
    cut: int
    max_block_size: int
    block_limit: int
    k: int
    n: int
    trials: int
    wall_time_s: float
