from typing import Dict, List

import numpy as np
from fastapi import FastAPI, HTTPException, Query, status

from app.config import settings
from app.errors import ModelDomainError, OutOfDomainError, PricerError
from app.experiments import run_price
from app.levy_model import tail_constants, variance_of_L
from app.mc_oracle import mc_price
from app.models import McConfig, McPriceRequest, NtsModel, PayoffSpec, PricePoint, PriceRequest, RunConfig
from app.presets import PRESETS, UnknownPresetError, get_preset

app = FastAPI(
    title=settings.app_title,
    description=settings.app_description,
    version=settings.app_version,
    openapi_tags=[
        {"name": "Presets", "description": "Reference parameter sets and their moments"},
        {"name": "Pricing", "description": "PIDE and Monte Carlo prices"},
    ],
)


def _preset_or_404(name: str) -> NtsModel:
    try:
        return get_preset(name)
    except UnknownPresetError as exc:
        raise HTTPException(status_code=status.HTTP_404_NOT_FOUND, detail=str(exc)) from None


@app.get("/", tags=["Root"])
def read_root() -> dict:
    """Root endpoint - Welcome message"""
    return {"message": f"Welcome to the {settings.app_title}", "presets": list(PRESETS)}


@app.get("/presets", response_model=List[NtsModel], tags=["Presets"])
def list_presets() -> List[NtsModel]:
    """All registered parameter sets"""
    return list(PRESETS.values())


@app.get("/presets/{name}", response_model=NtsModel, tags=["Presets"])
def get_preset_by_name(name: str) -> NtsModel:
    """One parameter set by name (case-insensitive)"""
    return _preset_or_404(name)


@app.get("/presets/{name}/moments", tags=["Presets"])
def get_moments(name: str, t: float = Query(1.0, gt=0.0)) -> Dict[str, object]:
    """Standard deviations and correlation of the jump part L(t)"""
    model = _preset_or_404(name)
    covariance = variance_of_L(model, t)
    std = np.sqrt(np.diag(covariance))
    return {
        "name": model.name,
        "t": t,
        "covariance": covariance.tolist(),
        "std": std.tolist(),
        "correlation": float(covariance[0, 1] / (std[0] * std[1])),
    }


@app.get("/presets/{name}/tail-constants", tags=["Presets"])
def get_tail_constants(name: str, h: float = Query(1.0, gt=0.0)) -> Dict[str, float]:
    """Small-jump blow-up rate, large-jump decay rate and the bound constant on |z|_rho <= h"""
    model = _preset_or_404(name)
    constants = tail_constants(model)
    return {"A_ell": constants.A_ell, "B_ell": constants.B_ell, "C_ell": constants.C_ell_of_h(h), "h": h}


@app.post("/price", response_model=List[PricePoint], tags=["Pricing"])
def price(request: PriceRequest) -> List[PricePoint]:
    """PIDE prices of the put on the average at the requested points"""
    _preset_or_404(request.preset)
    if request.n_x > settings.api_max_nx:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=f"n_x={request.n_x} exceeds the API limit {settings.api_max_nx}; use the CLI",
        )
    config = RunConfig(preset=request.preset, n_x=request.n_x, points=request.points)
    try:
        return run_price(config).table
    except (OutOfDomainError, ModelDomainError) as exc:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(exc)) from None
    except PricerError as exc:
        raise HTTPException(status_code=status.HTTP_500_INTERNAL_SERVER_ERROR, detail=str(exc)) from None


@app.post("/mc-price", response_model=PricePoint, tags=["Pricing"])
def monte_carlo_price(request: McPriceRequest) -> PricePoint:
    """Monte Carlo price and standard error at one starting point"""
    model = _preset_or_404(request.preset)
    if request.n_paths > settings.api_max_paths:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=f"n_paths={request.n_paths} exceeds the API limit {settings.api_max_paths}",
        )
    config = McConfig(
        n_paths=request.n_paths,
        seed=settings.seed if request.seed is None else request.seed,
        antithetic=request.antithetic,
    )
    try:
        result = mc_price(model, PayoffSpec(K=model.K), request.x0, config)
    except ModelDomainError as exc:
        raise HTTPException(status_code=status.HTTP_400_BAD_REQUEST, detail=str(exc)) from None
    return PricePoint(x1=request.x0[0], x2=request.x0[1], price=result.price, standard_error=result.standard_error)
