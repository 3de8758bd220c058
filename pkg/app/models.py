from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

Vector2 = Tuple[float, float]
Matrix2 = Tuple[Vector2, Vector2]

TABLE_POINTS: List[Vector2] = [(a, b) for a in (90.0, 100.0, 110.0) for b in (90.0, 100.0, 110.0)]


class NtsModel(BaseModel):
    """Market and Normal Tempered Stable parameters of one pricing problem."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    name: Optional[str] = None
    alpha: float = Field(..., ge=0.0, lt=1.0)
    delta: float = Field(..., gt=0.0)
    lam: float = Field(..., gt=0.0, alias="lambda")
    eta: Vector2
    rho: Matrix2
    sigma: Matrix2 = ((0.0, 0.0), (0.0, 0.0))
    r: float = 0.0
    T: float = Field(..., gt=0.0)
    K: float = Field(..., gt=0.0)

    @model_validator(mode="after")
    def check_metric_and_moments(self) -> "NtsModel":
        rho = self.rho_matrix
        if not np.allclose(rho, rho.T, rtol=0.0, atol=1e-14 * np.abs(rho).max()):
            raise ValueError("rho must be symmetric")
        try:
            np.linalg.cholesky(rho)
        except np.linalg.LinAlgError as exc:
            raise ValueError("rho must be positive definite") from exc

        from app.levy_model import tail_constants

        # exponential moments of order 2 in every coordinate
        decay = tail_constants(self).B_ell / np.sqrt(np.linalg.eigvalsh(rho).max())
        if decay < 2.0:
            raise ValueError(f"jump tails too heavy: Euclidean decay rate {decay:.4f} < 2")
        return self

    @property
    def eta_vector(self) -> np.ndarray:
        return np.asarray(self.eta, dtype=float)

    @property
    def rho_matrix(self) -> np.ndarray:
        return np.asarray(self.rho, dtype=float)

    @property
    def sigma_matrix(self) -> np.ndarray:
        return np.asarray(self.sigma, dtype=float)


class PayoffSpec(BaseModel):
    """European payoff at maturity."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["put_on_average"] = "put_on_average"
    K: float = Field(..., gt=0.0)


class SolverConfig(BaseModel):
    """Time-stepping and solver tolerances; defaults are the reference configuration."""
    model_config = ConfigDict(frozen=True)

    theta: float = Field(0.5, ge=0.0, le=1.0)
    n_t: Optional[int] = Field(None, ge=1)
    damping_substeps: int = Field(4, ge=0)
    tol_fixed_point: float = Field(1e-7, gt=0.0)
    tol_linear: float = Field(1e-14, gt=0.0)
    fp_max_iter: int = Field(100, ge=1)
    linear_max_iter: int = Field(1000, ge=1)
    extrapolate_start: bool = True
    threads: int = Field(1, ge=1)


class McConfig(BaseModel):
    """Monte Carlo oracle settings."""
    model_config = ConfigDict(frozen=True)

    n_paths: int = Field(1_000_000, ge=2)
    seed: int = Field(20240521, ge=0, lt=2**64)
    antithetic: bool = False
    threads: int = Field(1, ge=1)
    chunk_size: int = Field(1 << 16, ge=2)


class RunConfig(BaseModel):
    """One experiment: model choice, discretization couplings and output location."""

    preset: Optional[str] = None
    model: Optional[NtsModel] = None
    n_x: int = Field(200, ge=4)
    n_z: Optional[int] = Field(None, ge=4)
    x_int: Optional[float] = Field(None, gt=0.0)
    x_max: Optional[float] = Field(None, gt=0.0)
    f_target: Optional[float] = Field(None, gt=0.0, le=1.0)
    truncation_level: float = Field(1e-8, gt=0.0)
    solver: SolverConfig = SolverConfig()
    points: List[Vector2] = Field(default_factory=lambda: list(TABLE_POINTS))
    n_list: List[int] = Field(default_factory=lambda: [25, 50, 100])
    n_ref: int = 200
    mc: McConfig = McConfig()
    out_dir: str = "results"

    @model_validator(mode="after")
    def check_model_source(self) -> "RunConfig":
        if self.model is None and self.preset is None:
            raise ValueError("either a preset name or explicit model parameters are required")
        return self

    def resolved_model(self) -> NtsModel:
        if self.model is not None:
            return self.model
        from app.presets import get_preset

        return get_preset(self.preset)

    def effective_n_z(self, n_x: Optional[int] = None) -> int:
        return self.n_z if self.n_z is not None and n_x is None else 2 * (n_x or self.n_x)

    def effective_n_t(self, n_x: Optional[int] = None) -> int:
        if self.solver.n_t is not None and n_x is None:
            return self.solver.n_t
        # round half up
        return max(1, int(np.floor(0.5 * (n_x or self.n_x) + 0.5)))

    def effective_x_int(self) -> float:
        return self.x_int if self.x_int is not None else 2.5 * self.resolved_model().K

    def effective_x_max(self) -> float:
        if self.x_max is not None:
            return self.x_max
        from app.presets import X_MAX_MULTIPLIERS

        model = self.resolved_model()
        key = model.name
        if key not in X_MAX_MULTIPLIERS:
            raise ValueError("x_max must be given for models without a preset")
        return X_MAX_MULTIPLIERS[key] * model.K

    def effective_f_target(self) -> float:
        if self.f_target is not None:
            return self.f_target
        return max(0.65, self.effective_x_int() / self.effective_x_max())


class ConvergenceReport(BaseModel):
    """Total-error study against a fine reference solution."""

    n_values: List[int]
    errors: List[float]
    order: float
    residual: float
    n_ref: int
    note: str = ""


class RunManifest(BaseModel):
    """Everything needed to reproduce and audit one run."""

    command: str
    config: Dict[str, Any]
    model: Dict[str, Any]
    derived: Dict[str, Any] = {}
    diagnostics: Dict[str, Any] = {}
    timings: Dict[str, float] = {}
    outputs: List[str] = []


class PriceRequest(BaseModel):
    """Body of POST /price."""
    preset: str
    n_x: int = Field(32, ge=8)
    points: List[Vector2] = Field(default_factory=lambda: [(100.0, 100.0)])


class McPriceRequest(BaseModel):
    """Body of POST /mc-price."""
    preset: str
    x0: Vector2 = (100.0, 100.0)
    n_paths: int = Field(100_000, ge=2)
    seed: Optional[int] = None
    antithetic: bool = False


class PricePoint(BaseModel):
    x1: float
    x2: float
    price: float
    standard_error: Optional[float] = None
