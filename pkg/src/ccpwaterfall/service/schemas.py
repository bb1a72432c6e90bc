"""Pydantic request and response models for the HTTP service."""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, Field


class Atom(BaseModel):
    value: float
    prob: float = Field(ge=0.0, le=1.0)


class RiskEvaluateRequest(BaseModel):
    atoms: list[Atom]
    kind: Literal["VAR", "AVAR", "ENTROPIC"]
    level: float = Field(gt=0.0, le=1.0)
    with_extreme_density: bool = False


class RiskEvaluateResponse(BaseModel):
    value: float
    extreme_density: list[float] | None = None


class ContractModel(BaseModel):
    lam: float = Field(alias="lambda", gt=0.0)
    kappa: float
    recovery: float = Field(ge=0.0, le=1.0)
    inception: str
    maturity: str
    notional: float = 1.0

    model_config = {"populate_by_name": True}


class UpfrontRequest(BaseModel):
    contract: ContractModel
    date: str
    defaulted: bool = False


class UpfrontResponse(BaseModel):
    value: float


class ExposureLawRequest(BaseModel):
    contract: ContractModel
    date: str
    delta: int = Field(default=10, ge=1)


class ExposureLawResponse(BaseModel):
    survival_value: float
    survival_prob: float
    default_value: float
    default_prob: float


class PortfolioLawRequest(BaseModel):
    contracts: list[ContractModel]
    positions: list[float]
    date: str
    delta: int = Field(default=10, ge=1)


class CalibrateRequest(BaseModel):
    matrix: list[list[float]]
    periods: int = Field(default=252, ge=1)
    enforce_pattern: bool = True


class CalibrateResponse(BaseModel):
    matrix: list[list[float]]
    reconstruction_error: float
    method: str
    clipped_mass: float


class StudyRequest(BaseModel):
    """Envelope carrying a full experiment configuration document."""

    config: dict[str, Any]
    overrides: dict[str, Any] = Field(default_factory=dict)


class ScalingRequest(BaseModel):
    config: dict[str, Any]
    member_counts: list[int]
    overrides: dict[str, Any] = Field(default_factory=dict)


class AllocationRequest(BaseModel):
    ep_samples: list[list[float]]
    beta: float = Field(gt=0.0, le=1.0)
    density: list[float] | None = None


class AllocationResponse(BaseModel):
    total: float
    allocation: list[float]
