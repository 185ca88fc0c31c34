"""Correlation functions of standard Gaussian random fields."""

import logging
from typing import Any, Dict, Optional

import numpy as np
from scipy import special

from config.config_loader import get_config
from models.data_models import SpaceRef
from modules import spaces
from modules.catalog import resolve_params

logger = logging.getLogger(__name__)

_DISTANCE_FREE = {"constant", "nugget"}


class GaussianCorrelation:
    """Immutable isotropic correlation rho(x, y) = f(d(x, y)) on a host space"""

    def __init__(self, family: str, host: SpaceRef, **params: Any):
        self.family = family
        self.host = host
        self.params: Dict[str, float] = resolve_params(
            "correlations", family, params, host, uses_distance=family not in _DISTANCE_FREE
        )

    @property
    def scale(self) -> Optional[float]:
        return self.params.get("scale")

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"GaussianCorrelation({self.family}{', ' if args else ''}{args}, host={self.host.describe()})"

    def from_distance(self, d) -> np.ndarray:
        """Correlation as a function of model distance (vectorised)"""
        d = np.asarray(d, dtype=float)
        p = self.params
        family = self.family

        if family == "constant":
            return np.ones_like(d)
        if family == "nugget":
            return (d < get_config().get_tolerance("nugget_distance")).astype(float)
        if family == "cosine":
            return np.cos(d / self.host.radius)

        h = d / p["scale"]
        if family == "exponential":
            return np.exp(-h)
        if family == "gaussian":
            return np.exp(-h ** 2)
        if family == "cauchy":
            return (1.0 + h ** 2) ** (-p["beta"])
        if family == "stable":
            return np.exp(-h ** p["b"])
        if family == "sine_exponential":
            return np.sin(0.5 * np.pi * np.exp(-h))
        if family == "spherical":
            r = np.minimum(h, 1.0)
            return 1.0 - 1.5 * r + 0.5 * r ** 3
        if family == "cubic":
            r = np.minimum(h, 1.0)
            return 1.0 - 7 * r ** 2 + 35 / 4 * r ** 3 - 7 / 2 * r ** 5 + 3 / 4 * r ** 7
        if family == "matern":
            b = p["b"]
            with np.errstate(invalid="ignore", over="ignore"):
                value = 2 ** (1 - b) / special.gamma(b) * h ** b * special.kv(b, h)
            return np.where(h > 0, np.nan_to_num(value, nan=0.0), 1.0)
        raise AssertionError(f"unhandled correlation family {family}")

    def matrix(self, X, Y=None) -> np.ndarray:
        return self.from_distance(spaces.model_distances(self.host, X, Y))

    def value(self, x, y) -> float:
        return float(self.matrix([x], [y])[0, 0])

    def variogram_from_distance(self, d) -> np.ndarray:
        """gamma = 1 - rho"""
        return 1.0 - self.from_distance(d)
