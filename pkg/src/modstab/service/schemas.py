"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, Field


class NetworkConfigIn(BaseModel):
    M: int = Field(ge=1)
    p: float
    lambda_R: float = 0.0
    lambda_G: float = 0.0
    mode: str = "coordinator"
    dummy: bool = False
    arrival_law: str = "poisson"


class HealthOut(BaseModel):
    status: str
    version: str


class ThresholdRequest(BaseModel):
    config: NetworkConfigIn


class ThresholdOut(BaseModel):
    feasible: bool
    threshold: Optional[float]


class SimulateRequest(BaseModel):
    config: NetworkConfigIn
    slots: int = Field(ge=1)
    thinning: int = Field(default=1, ge=1)
    seed: int = 0
    R0: Optional[list[int]] = None
    G0: Optional[list[int]] = None


class SimulateOut(BaseModel):
    slot_index: list[int]
    R: list[list[int]]
    G: list[list[int]]
    config: dict
    seed: int


class VerifyRequest(BaseModel):
    kernel_text: Optional[str] = None
    config: Optional[NetworkConfigIn] = None
    R_cap: Optional[int] = None
    G_cap: Optional[int] = None
    V: Optional[list[int]] = None
    H: Optional[float] = None
    t_grid: Optional[list[int]] = None


class DriftReportOut(BaseModel):
    passed: bool
    epsilon: float
    U: float
    K_bound: float
    f: list[float]
    h_levels: list[float]
    h_envelope: list[float]
    violations: list
    n_coords: int


class CertificateOut(BaseModel):
    passed: bool
    H: float
    t1: Optional[int]
    N0: Optional[float]
    N1: Optional[float]
    c: Optional[float]
    Delta: float
    epsilon: float
    s0: float
    bound_on_D: Optional[float]
    case2_margin: Optional[float]
    case3_margin: Optional[float]
    tightest_violation: Optional[str]


class VerifyOut(BaseModel):
    drift: DriftReportOut
    certificate: CertificateOut


class CouplingRequest(BaseModel):
    P: list[list[float]]
    V: list[int]
    m: int = Field(default=1, ge=1)
    reps: int = Field(default=1000, ge=1)
    T_max: int = Field(default=1000, ge=1)
    seed: int = 0


class CouplingOut(BaseModel):
    t: list[int]
    delta: list[float]
    kappa_mean: float
    kappa_bound: float
    split_p: float
    replications: int
    censored_fraction: float
    periodic_warning: bool


class IdleRequest(BaseModel):
    # network measurement when config is given, synthetic recursion when pmf is
    config: Optional[NetworkConfigIn] = None
    pmf: Optional[list[float]] = None
    slots: int = Field(default=1_000_000, ge=1)
    burn_in: int = Field(default=10_000, ge=0)
    seed: int = 0


class IdleOut(BaseModel):
    estimate: float
    reference: float
    slots: int
    kind: str
    theorem_backed: Optional[bool] = None
    mean_increment: Optional[float] = None


class SweepRequest(BaseModel):
    config: NetworkConfigIn
    lambda_gs: list[float]
    slots: int = Field(ge=1)
    replications: int = Field(default=4, ge=1)
    seed: int = 0
    warmup: Optional[int] = None


class SweepOut(BaseModel):
    rows: list[dict]


class BoundaryRequest(BaseModel):
    config: NetworkConfigIn
    bracket: tuple[float, float]
    tol: float = Field(gt=0)
    slots: int = Field(ge=1)
    replications: int = Field(default=4, ge=1)
    seed: int = 0
    warmup: Optional[int] = None


class BoundaryOut(BaseModel):
    lambda_star_empirical: float
    half_width: float
    lambda_star_theoretical: Optional[float]
    config: dict
    total_slots: int
    bracket: tuple[float, float]
    converged: bool


class ReportRequest(BaseModel):
    rows: list[dict]
    meta: Optional[dict] = None


class ReportOut(BaseModel):
    report: str
    table: str
