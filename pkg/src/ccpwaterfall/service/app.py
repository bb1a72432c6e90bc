"""FastAPI application exposing the risk engine.

Endpoints wrap exactly one engine operation each; no numeric logic lives in
the service layer.  Configuration problems map to HTTP 400 and numerical
failures (calibration, infeasible dependence rows) to HTTP 422, both with a
structured ``{"error": {"code", "message"}}`` detail.
"""

from __future__ import annotations

import datetime as dt

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..cds import CdsContract, margin_period_exposure, portfolio_exposure_law, upfront
from ..distributions import (
    DiscreteDistribution,
    RiskMeasureKind,
    avar,
    entropic,
    extreme_density,
    var,
)
from ..errors import CalibrationError, ConfigError, MarginalInfeasibleError
from ..migration import RatingTransitionMatrix, calibrate_daily
from ..simulation import config_from_dict, run_df_study, run_im_study, run_scaling_study
from ..waterfall import default_fund
from . import schemas

CONFIG_ERROR = 400
NUMERICAL_ERROR = 422


def _config_error(exc: Exception) -> HTTPException:
    return HTTPException(CONFIG_ERROR, detail={"code": "config", "message": str(exc)})


def _numerical_error(exc: Exception) -> HTTPException:
    return HTTPException(NUMERICAL_ERROR, detail={"code": "numerical", "message": str(exc)})


def _contract(model: schemas.ContractModel) -> CdsContract:
    try:
        return CdsContract(
            intensity=model.lam,
            spread=model.kappa,
            recovery=model.recovery,
            inception=dt.date.fromisoformat(model.inception),
            maturity=dt.date.fromisoformat(model.maturity),
            notional=model.notional,
        )
    except (ConfigError, ValueError) as exc:
        raise _config_error(exc) from exc


def create_app() -> FastAPI:
    app = FastAPI(title="ccp-waterfall", version=__version__)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/v1/risk/evaluate", response_model=schemas.RiskEvaluateResponse)
    def risk_evaluate(req: schemas.RiskEvaluateRequest) -> schemas.RiskEvaluateResponse:
        try:
            dist = DiscreteDistribution.from_atoms((a.value, a.prob) for a in req.atoms)
            kind = RiskMeasureKind(req.kind)
            if kind is RiskMeasureKind.VAR:
                value = var(dist, req.level)
            elif kind is RiskMeasureKind.AVAR:
                value = avar(dist, req.level)
            else:
                value = entropic(dist, req.level)
            density = None
            if req.with_extreme_density:
                density = extreme_density(dist, req.level).weights.tolist()
        except (ConfigError, ValueError) as exc:
            raise _config_error(exc) from exc
        return schemas.RiskEvaluateResponse(value=value, extreme_density=density)

    @app.post("/v1/cds/upfront", response_model=schemas.UpfrontResponse)
    def cds_upfront(req: schemas.UpfrontRequest) -> schemas.UpfrontResponse:
        contract = _contract(req.contract)
        try:
            value = upfront(contract, dt.date.fromisoformat(req.date), req.defaulted)
        except (ConfigError, ValueError) as exc:
            raise _config_error(exc) from exc
        return schemas.UpfrontResponse(value=value)

    @app.post("/v1/cds/exposure-law", response_model=schemas.ExposureLawResponse)
    def cds_exposure_law(req: schemas.ExposureLawRequest) -> schemas.ExposureLawResponse:
        contract = _contract(req.contract)
        try:
            law = margin_period_exposure(contract, dt.date.fromisoformat(req.date), req.delta)
        except (ConfigError, ValueError) as exc:
            raise _config_error(exc) from exc
        return schemas.ExposureLawResponse(
            survival_value=law.survival_value,
            survival_prob=law.survival_prob,
            default_value=law.default_value,
            default_prob=law.default_prob,
        )

    @app.post("/v1/cds/portfolio-law")
    def cds_portfolio_law(req: schemas.PortfolioLawRequest) -> dict:
        contracts = [_contract(c) for c in req.contracts]
        try:
            laws = [
                margin_period_exposure(c, dt.date.fromisoformat(req.date), req.delta)
                for c in contracts
            ]
            dist = portfolio_exposure_law(req.positions, laws)
        except (ConfigError, ValueError) as exc:
            raise _config_error(exc) from exc
        return {"atoms": [{"value": v, "prob": p} for v, p in dist.atoms]}

    @app.post("/v1/calibrate", response_model=schemas.CalibrateResponse)
    def calibrate(req: schemas.CalibrateRequest) -> schemas.CalibrateResponse:
        try:
            annual = RatingTransitionMatrix.from_rows(req.matrix)
        except ConfigError as exc:
            raise _config_error(exc) from exc
        try:
            result = calibrate_daily(annual, req.periods, enforce_pattern=req.enforce_pattern)
        except CalibrationError as exc:
            raise _numerical_error(exc) from exc
        return schemas.CalibrateResponse(
            matrix=result.matrix.probs.tolist(),
            reconstruction_error=result.reconstruction_error,
            method=result.method,
            clipped_mass=result.clipped_mass,
        )

    @app.post("/v1/im/study")
    def im_study(req: schemas.StudyRequest) -> dict:
        try:
            cfg = config_from_dict({**req.config, **req.overrides})
            result = run_im_study(cfg)
        except ConfigError as exc:
            raise _config_error(exc) from exc
        except MarginalInfeasibleError as exc:
            raise _numerical_error(exc) from exc
        payload = result.to_dict()
        payload["distributions"] = [
            [{"value": v, "prob": p} for v, p in law.atoms] for law in result.laws
        ]
        return payload

    @app.post("/v1/df/study")
    def df_study(req: schemas.StudyRequest) -> dict:
        try:
            cfg = config_from_dict({**req.config, **req.overrides})
            result = run_df_study(cfg)
        except ConfigError as exc:
            raise _config_error(exc) from exc
        except (MarginalInfeasibleError, CalibrationError) as exc:
            raise _numerical_error(exc) from exc
        return result.to_dict()

    @app.post("/v1/df/allocate", response_model=schemas.AllocationResponse)
    def df_allocate(req: schemas.AllocationRequest) -> schemas.AllocationResponse:
        try:
            density = np.asarray(req.density, dtype=float) if req.density is not None else None
            result = default_fund(np.asarray(req.ep_samples, dtype=float), req.beta, density)
        except ConfigError as exc:
            raise _config_error(exc) from exc
        return schemas.AllocationResponse(
            total=result.total, allocation=result.allocation.tolist()
        )

    @app.post("/v1/scaling/study")
    def scaling_study(req: schemas.ScalingRequest) -> dict:
        try:
            cfg = config_from_dict({**req.config, **req.overrides})
            rows = run_scaling_study(cfg, req.member_counts)
        except ConfigError as exc:
            raise _config_error(exc) from exc
        except (MarginalInfeasibleError, CalibrationError) as exc:
            raise _numerical_error(exc) from exc
        return {"rows": rows}

    return app


app = create_app()
