"""Reference parameter sets: two Variance Gamma and two Normal Inverse Gaussian markets."""
from typing import Dict, List

from app.errors import PricerError
from app.models import NtsModel

PRESETS: Dict[str, NtsModel] = {
    "VG0": NtsModel(
        name="VG0",
        alpha=0.0,
        delta=1.0,
        lam=1.0,
        eta=(-0.1, -0.2),
        rho=((0.09, 0.06), (0.06, 0.16)),
        r=0.05,
        T=1.0,
        K=100.0,
    ),
    "VG1": NtsModel(
        name="VG1",
        alpha=0.0,
        delta=6.0,
        lam=6.0,
        eta=(-0.1, -0.2),
        rho=((0.01, 0.0), (0.0, 0.0225)),
        r=0.0,
        T=0.5,
        K=100.0,
    ),
    "NIG0": NtsModel(
        name="NIG0",
        alpha=0.5,
        delta=0.77576,
        lam=20766.4,
        eta=(-37.688, -2.224),
        rho=((3.984, 3.160), (3.160, 3.512)),
        r=0.0,
        T=0.5,
        K=100.0,
    ),
    # estimated from daily index returns
    "NIG1": NtsModel(
        name="NIG1",
        alpha=0.5,
        delta=4.26367,
        lam=57.1108,
        eta=(-0.295846, -0.292984),
        rho=((0.037021, 0.026574), (0.026574, 0.054613)),
        r=0.0,
        T=0.5,
        K=100.0,
    ),
}

# truncation x_max = multiplier * K
X_MAX_MULTIPLIERS: Dict[str, float] = {"VG0": 57.0, "VG1": 5.0, "NIG0": 6.0, "NIG1": 7.0}


class UnknownPresetError(PricerError, KeyError):
    """Requested preset name is not registered."""


def preset_names() -> List[str]:
    return list(PRESETS)


def get_preset(name: str) -> NtsModel:
    """
    Look up a preset by name (case-insensitive).

    Raises:
        UnknownPresetError: if no preset has that name
    """
    try:
        return PRESETS[name.upper()]
    except KeyError:
        raise UnknownPresetError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
