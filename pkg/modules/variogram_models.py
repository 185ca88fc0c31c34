"""Indicator variogram and madogram model catalog.

Every model is a function of the model distance of its host (Euclidean
distance, great-circle distance, sqrt of the resistance distance or the
communicability distance), so evaluation reduces to `from_distance`. Models
are immutable; combinators and mixtures evaluate their children recursively.
"""

import logging
import math
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import special, stats

from config.config_loader import get_config
from models.data_models import SpaceRef
from modules import spaces
from modules.catalog import resolve_params
from modules.correlations import GaussianCorrelation
from utils.errors import ConstructionError, InputError

logger = logging.getLogger(__name__)

# Families whose value depends on the host distance directly (not through a child)
_RADIAL = {"tanh1", "tanh2", "ibessel", "exponential", "gamma", "stable", "matern",
           "sphere_linear", "sphere_exponential", "triangular_wave", "quadratic_circle"}
_COMBINATORS = {"scale", "mix", "prod_comb", "exp_comp"}

SERIES_CHUNK = 4096


class MixtureAtom(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    weight: float = Field(..., gt=0)
    component: Any

    @model_validator(mode="after")
    def _check_component(self):
        if not isinstance(self.component, (GaussianCorrelation, VariogramModel)):
            raise ValueError("mixture components are correlations or variogram models")
        return self


class MixtureSpec(BaseModel):
    """Discrete mixing distribution: g = sum_i w_i g_i with sum_i w_i <= 1"""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    atoms: Tuple[MixtureAtom, ...]

    @model_validator(mode="after")
    def _check_weights(self):
        if not self.atoms:
            raise ValueError("a mixture needs at least one atom")
        total = sum(a.weight for a in self.atoms)
        if total > 1 + 1e-12:
            raise ValueError(f"mixture weights sum to {total:.12g} > 1")
        return self

    @classmethod
    def of(cls, *pairs: Tuple[float, Any]) -> "MixtureSpec":
        return cls(atoms=tuple(MixtureAtom(weight=w, component=c) for w, c in pairs))

    @property
    def total_weight(self) -> float:
        return float(sum(a.weight for a in self.atoms))

    @property
    def is_gaussian(self) -> bool:
        return all(isinstance(a.component, GaussianCorrelation) for a in self.atoms)

    def normalized(self) -> "MixtureSpec":
        total = self.total_weight
        return MixtureSpec(atoms=tuple(MixtureAtom(weight=a.weight / total, component=a.component)
                                       for a in self.atoms))


class VariogramModel:
    """A catalog family bound to a host space, with validated parameters"""

    def __init__(self, family: str, host: SpaceRef, params: Optional[Dict[str, Any]] = None,
                 correlation: Optional[GaussianCorrelation] = None,
                 operands: Sequence["VariogramModel"] = (),
                 mixture: Optional[MixtureSpec] = None):
        self.family = family
        self.host = host
        self.params = resolve_params("variograms", family, dict(params or {}), host,
                                     uses_distance=family in _RADIAL)
        self.rules = get_config().get_family_rules(family)
        self.correlation = correlation
        self.operands: Tuple[VariogramModel, ...] = tuple(operands)
        self.mixture = mixture
        self._check_structure()

    def _check_structure(self) -> None:
        needs = self.rules.get("correlation", "none")
        if needs == "required" and self.correlation is None:
            raise ConstructionError(f"'{self.family}' needs a correlation block")
        if needs == "none" and self.correlation is not None:
            raise ConstructionError(f"'{self.family}' takes no correlation block")
        if self.correlation is not None and self.correlation.host != self.host:
            raise ConstructionError(
                f"correlation host {self.correlation.host.describe()} differs from model host {self.host.describe()}"
            )

        expected = self.rules.get("operands", 0)
        if len(self.operands) != expected:
            raise ConstructionError(f"'{self.family}' takes {expected} base model(s), got {len(self.operands)}")
        for operand in self.operands:
            if operand.host != self.host:
                raise ConstructionError(f"base model host {operand.host.describe()} differs from {self.host.describe()}")

        if self.family == "mixture":
            if self.mixture is None:
                raise ConstructionError("'mixture' needs atoms")
            for atom in self.mixture.atoms:
                if atom.component.host != self.host:
                    raise ConstructionError("mixture atoms must share the model host")
        elif self.mixture is not None:
            raise ConstructionError(f"'{self.family}' takes no mixture atoms")

        if self.family == "nugget" and self.correlation is not None:
            self._check_nugget_base()

    def _check_nugget_base(self) -> None:
        # C = c0 * rho must be the covariance of a [-1, 1]-valued field
        c0 = self.params["c0"]
        if self.host.kind == "graph" or (self.host.kind == "sphere" and self.host.dim != 1):
            raise ConstructionError("nugget with a correlation is available on R^N and the circle only")
        limit = 0.5
        if self.correlation.family == "cubic":
            limit = 18 / 35
        if c0 > limit + 1e-15:
            raise ConstructionError(f"nugget.c0 = {c0:g} exceeds {limit:.6g} for a {self.correlation.family} base")

    # ---------- description ----------

    @property
    def certified(self) -> bool:
        """False when the model or any child is outside the certified catalog"""
        children: List[Any] = list(self.operands)
        if self.mixture is not None:
            children += [a.component for a in self.mixture.atoms if isinstance(a.component, VariogramModel)]
        return bool(self.rules.get("certified", True)) and all(c.certified for c in children)

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {"family": self.family, "params": dict(self.params), "host": self.host.describe()}
        if self.correlation is not None:
            out["correlation"] = {"family": self.correlation.family, "params": dict(self.correlation.params)}
        if self.operands:
            out["base"] = [op.to_dict() for op in self.operands]
        if self.mixture is not None:
            out["atoms"] = [
                {"weight": a.weight,
                 "component": a.component.to_dict() if isinstance(a.component, VariogramModel)
                 else {"family": a.component.family, "params": dict(a.component.params)}}
                for a in self.mixture.atoms
            ]
        return out

    def __repr__(self) -> str:
        args = ", ".join(f"{k}={v:g}" for k, v in self.params.items())
        return f"VariogramModel({self.family}{', ' if args else ''}{args}, host={self.host.describe()})"

    # ---------- evaluation ----------

    def from_distance(self, d) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        family = self.family
        p = self.params

        if family == "zero":
            return np.zeros_like(d)
        if family in _RADIAL:
            return _radial(family, p, d)
        if family == "median_indicator":
            return median_indicator_transform(self.correlation.from_distance(d))
        if family == "sill_scaled":
            return p["varpi"] / 4 * (1.0 - self.correlation.from_distance(d))
        if family == "nugget":
            c = p["c0"] * (self.correlation.from_distance(d) if self.correlation is not None else 1.0)
            at_zero = d < get_config().get_tolerance("nugget_distance")
            return np.where(at_zero, 0.0, p["varpi"] / 4 * (1.0 - c))
        if family == "erf_model1":
            ag = p["a"] * self.correlation.variogram_from_distance(d)
            return p["varpi"] / 4 * (1.0 - special.erfcx(np.sqrt(np.maximum(ag, 0.0))) ** p["k"])
        if family == "erf_model2":
            return p["varpi"] / 4 * (1.0 - _tent_factor(p["a"] * self.correlation.variogram_from_distance(d)) ** p["k"])
        if family == "series_odd":
            return series_g_examples("odd", self.correlation, d, p["varpi"], p["tol"])
        if family == "series_even":
            return series_g_examples("even", self.correlation, d, p["varpi"], p["tol"])
        if family == "mixture":
            total = np.zeros_like(d)
            for atom in self.mixture.atoms:
                if isinstance(atom.component, GaussianCorrelation):
                    total = total + atom.weight * median_indicator_transform(atom.component.from_distance(d))
                else:
                    total = total + atom.weight * atom.component.from_distance(d)
            return total
        if family == "scale":
            return p["varpi"] * self.operands[0].from_distance(d)
        if family == "mix":
            w = p["varpi"]
            return w * self.operands[0].from_distance(d) + (1 - w) * self.operands[1].from_distance(d)
        if family == "prod_comb":
            g1 = self.operands[0].from_distance(d)
            g2 = self.operands[1].from_distance(d)
            return g1 + g2 - 4 * g1 * g2
        if family == "exp_comp":
            return p["varpi"] / 4 * -np.expm1(-p["t"] * self.operands[0].from_distance(d))
        raise AssertionError(f"unhandled variogram family {family}")

    def matrix(self, X, Y=None) -> np.ndarray:
        """Values at all pairs; a single point set yields a symmetric matrix with zero diagonal"""
        D = spaces.model_distances(self.host, X, Y)
        G = self.from_distance(D)
        if Y is None:
            G = 0.5 * (G + G.T)
            np.fill_diagonal(G, 0.0)
        return G

    def eval(self, x, y) -> float:
        return float(self.matrix([x], [y])[0, 0])


# ==================== CLOSED FORMS ====================

def _radial(family: str, p: Dict[str, float], d: np.ndarray) -> np.ndarray:
    varpi = p["varpi"]
    positive = d > 0
    safe = np.where(positive, d, 1.0)

    if family == "tanh1":
        value = safe / (4 * p["lam"]) * np.tanh(p["lam"] / safe)
        return varpi * np.where(positive, value, 0.0)
    if family == "tanh2":
        th = np.tanh(p["lam"] / safe)
        value = (3 * safe / p["lam"] * th + th ** 2 - 1) / 8
        return varpi * np.where(positive, value, 0.0)
    if family == "ibessel":
        u = p["lam"] / (2 * safe)
        value = (3 * np.sqrt(np.pi * safe) / (2 * np.sqrt(p["lam"]) * -np.expm1(-2 * u))) * _scaled_i32(u)
        return varpi * np.where(positive, value, 0.0)
    if family == "exponential":
        return varpi / 4 * -np.expm1(-p["a"] * d)
    if family == "gamma":
        return varpi / 4 * (1.0 - (1.0 + d / p["a"]) ** (-p["b"]))
    if family == "stable":
        return varpi / 4 * -np.expm1(-p["a"] * d ** p["b"])
    if family == "matern":
        h = safe / p["a"]
        b = p["b"]
        with np.errstate(over="ignore", invalid="ignore"):
            corr = np.nan_to_num(2 ** (1 - b) / special.gamma(b) * h ** b * special.kv(b, h), nan=0.0)
        return varpi / 4 * np.where(positive, 1.0 - corr, 0.0)
    if family == "sphere_linear":
        return varpi * d / (2 * np.pi)
    if family == "sphere_exponential":
        return varpi / 4 * -np.expm1(-p["t"] * d)
    if family == "triangular_wave":
        # arccos(cos x) is the distance from x to the nearest multiple of 2*pi
        return varpi / (2 * np.pi) * np.arccos(np.clip(np.cos(p["k"] * d), -1.0, 1.0))
    if family == "quadratic_circle":
        return 3 * varpi / (8 * np.pi ** 2) * d * (2 * np.pi - d)
    raise AssertionError(family)


def _scaled_i32(u: np.ndarray) -> np.ndarray:
    """exp(-u) I_{3/2}(u) from sqrt(2/pi) (u cosh u - sinh u) / u^{3/2}"""
    u = np.asarray(u, dtype=float)
    small = u < 0.1
    us = np.where(small, u, 0.1)
    # u cosh u - sinh u = sum_k 2k u^(2k+1) / (2k+1)!
    series = us ** 3 / 3 + us ** 5 / 30 + us ** 7 / 840 + us ** 9 / 45360 + us ** 11 / 3991680
    ul = np.where(small, 1.0, u)
    e2 = np.exp(-2 * ul)
    large = ul * (1 + e2) / 2 - (1 - e2) / 2
    core = np.where(small, series * np.exp(-us), large)
    return np.sqrt(2 / np.pi) * core / np.where(small, us, ul) ** 1.5


def _tent_factor(ag: np.ndarray) -> np.ndarray:
    """E[max(0, 1 - |X|/2)] for X ~ N(0, 2 a gamma)"""
    ag = np.maximum(np.asarray(ag, dtype=float), 0.0)
    positive = ag > 0
    s = np.where(positive, ag, 1.0)
    value = special.erf(1 / np.sqrt(s)) - np.sqrt(s / np.pi) * -np.expm1(-1 / s)
    return np.where(positive, value, 1.0)


# ==================== GAUSSIAN TRANSFORMS ====================

def median_indicator_transform(rho: Union[GaussianCorrelation, float, np.ndarray]):
    """Median indicator variogram arccos(rho) / (2 pi) of a Gaussian field

    Given a GaussianCorrelation, returns the corresponding VariogramModel;
    given values, returns values.
    """
    if isinstance(rho, GaussianCorrelation):
        return VariogramModel("median_indicator", rho.host, correlation=rho)
    values = np.asarray(rho, dtype=float)
    bound = get_config().get_tolerance("correlation_bound")
    if np.any(np.abs(values) > 1 + bound):
        raise InputError(f"correlation outside [-1, 1]: {values.flat[np.argmax(np.abs(values))]:.12g}")
    result = np.arccos(np.clip(values, -1.0, 1.0)) / (2 * np.pi)
    return float(result) if result.ndim == 0 else result


def median_indicator_arcsin(gamma) -> np.ndarray:
    """Equivalent form arcsin(sqrt(gamma / 2)) / pi with gamma = 1 - rho"""
    gamma = np.clip(np.asarray(gamma, dtype=float), 0.0, 2.0)
    return np.arcsin(np.sqrt(gamma / 2)) / np.pi


def gaussian_order_alpha(gamma_value, alpha: float):
    """Order-alpha variogram of a Gaussian field with variogram gamma

    2^(alpha-1) / sqrt(pi) * Gamma((alpha + 1) / 2) * gamma^(alpha / 2); alpha = 1
    is the madogram sqrt(gamma / pi), alpha = 2 the variogram itself.
    """
    if not alpha > 0:
        raise InputError(f"alpha must be positive, got {alpha}")
    gamma_value = np.asarray(gamma_value, dtype=float)
    if np.any(gamma_value < 0):
        raise InputError("variogram values must be nonnegative")
    coeff = 2 ** (alpha - 1) / math.sqrt(math.pi) * math.gamma((alpha + 1) / 2)
    result = coeff * gamma_value ** (alpha / 2)
    return float(result) if result.ndim == 0 else result


def series_g_examples(kind: str, correlation: GaussianCorrelation, d, varpi: float = 1.0,
                      tol: float = 1e-10) -> np.ndarray:
    """Indicator variograms built as series in the Gaussian variogram gamma = 1 - rho

    odd:  2 varpi / pi^2 * sum_{k>=0} gamma((2k+1) d) / (2k+1)^2
    even: 4 varpi / pi^2 * sum_{k>=1} gamma(2k d) / (4k^2 - 1)

    The tail is summed exactly for gamma = 1 and corrected by the correlation,
    which is nonnegative and non-increasing for every family allowed here, so
    rho at the first omitted lag bounds the remaining error.
    """
    if kind not in ("odd", "even"):
        raise InputError(f"unknown series kind '{kind}'")
    if not tol > 0:
        raise InputError("series tolerance must be positive")
    d = np.asarray(d, dtype=float)
    if correlation.family == "constant":
        return np.zeros_like(d)
    flat = d.reshape(-1)
    max_terms = int(get_config().get_section("excursion").get("max_terms", 10 ** 6))
    prefactor = (2 if kind == "odd" else 4) * varpi / np.pi ** 2

    partial = np.zeros_like(flat)
    done = flat <= 0
    result = np.zeros_like(flat)
    start = 0
    while not np.all(done) and start < max_terms:
        k = np.arange(start, start + SERIES_CHUNK)
        if kind == "odd":
            mult, weight = 2 * k + 1, 1.0 / (2 * k + 1) ** 2
        else:
            mult, weight = 2 * (k + 1), 1.0 / (4 * (k + 1) ** 2 - 1)
        active = ~done
        gammas = correlation.variogram_from_distance(flat[active, None] * mult[None, :])
        partial[active] += gammas @ weight
        start += SERIES_CHUNK

        K = start
        if kind == "odd":
            tail = 0.25 * special.polygamma(1, K + 0.5)
            next_lag = 2 * K + 1
        else:
            tail = 1.0 / (2 * (2 * (K + 1) - 1))
            next_lag = 2 * (K + 1)
        bound = prefactor * tail * np.abs(correlation.from_distance(flat[active] * next_lag))
        idx = np.flatnonzero(active)
        converged = bound < tol
        result[idx[converged]] = prefactor * (partial[idx[converged]] + tail)
        done[idx[converged]] = True
        if not np.all(done) and start >= max_terms:
            left = idx[~converged]
            result[left] = prefactor * (partial[left] + tail)
            logger.warning(f"[SERIES] {kind} stopped at {max_terms} terms with error bound {bound.max():.3g}")
    return result.reshape(d.shape)


# ==================== COMBINATORS ====================

def zero_model(host: SpaceRef) -> VariogramModel:
    return VariogramModel("zero", host)


def combine(op: str, g: VariogramModel, g2: Optional[VariogramModel] = None, **params: float) -> VariogramModel:
    """Closure operations: scale(varpi), mix(varpi), prod_comb, exp_comp(t, varpi)"""
    if op not in _COMBINATORS:
        raise ConstructionError(f"unknown combinator '{op}'; known: {', '.join(sorted(_COMBINATORS))}")
    operands = (g,) if g2 is None else (g, g2)
    return VariogramModel(op, g.host, params=params, operands=operands)


def sphere_exponential_as_composite(t: float, varpi: float = 1.0,
                                    host: Optional[SpaceRef] = None) -> VariogramModel:
    """varpi/4 (1 - exp(-t d)) on S^N(1) as exp_comp of the linear sphere model

    The linear model is d / (2 pi), so the exp_comp rate is 2 pi t.
    """
    linear = VariogramModel("sphere_linear", host or SpaceRef.sphere(2), params={"varpi": 1.0})
    return combine("exp_comp", linear, t=2 * np.pi * t, varpi=varpi)


def completely_monotone_mixture(model: VariogramModel, n_atoms: Optional[int] = None) -> MixtureSpec:
    """Bernstein mixture of a completely monotone model over sine-exponential correlations

    varpi/4 (1 - phi(d)) with phi = int exp(-s d) dF(s) becomes weight varpi
    spread over sin(pi/2 exp(-s d)) atoms plus a constant atom of weight
    1 - varpi. Gamma mixing rates are discretised at equal-probability
    quantiles, so the mixture approximates the gamma model.
    """
    if n_atoms is None:
        n_atoms = int(get_config().get_section("simulation").get("mixture_atoms", 16))
    family, p, host = model.family, model.params, model.host
    if family == "exponential" or (family == "stable" and p["b"] == 1.0):
        rates = np.array([p["a"]])
    elif family == "matern" and p["b"] == 0.5:
        rates = np.array([1.0 / p["a"]])
    elif family == "gamma":
        probs = (np.arange(n_atoms) + 0.5) / n_atoms
        rates = stats.gamma.ppf(probs, a=p["b"], scale=1.0 / p["a"])
    else:
        raise ConstructionError(f"no completely monotone mixture for family '{family}'")

    varpi = p["varpi"]
    pairs = [(varpi / len(rates), GaussianCorrelation("sine_exponential", host, scale=1.0 / r)) for r in rates]
    if varpi < 1.0:
        pairs.append((1.0 - varpi, GaussianCorrelation("constant", host)))
    return MixtureSpec.of(*[(w, c) for w, c in pairs if w > 0])


def gaussian_mixture_of(model: VariogramModel) -> MixtureSpec:
    """Mixture of Gaussian correlations whose median indicators reproduce the model"""
    if model.family == "median_indicator":
        return MixtureSpec.of((1.0, model.correlation))
    if model.family == "mixture" and model.mixture.is_gaussian:
        rest = 1.0 - model.mixture.total_weight
        if rest <= 1e-12:
            return model.mixture
        return MixtureSpec(atoms=model.mixture.atoms + (
            MixtureAtom(weight=rest, component=GaussianCorrelation("constant", model.host)),))
    if model.family in ("exponential", "gamma", "stable", "matern"):
        return completely_monotone_mixture(model)
    if model.family == "zero":
        return MixtureSpec.of((1.0, GaussianCorrelation("constant", model.host)))
    if model.family == "sphere_linear" and model.host.kind == "sphere":
        pairs = [(model.params["varpi"], GaussianCorrelation("cosine", model.host))]
        if model.params["varpi"] < 1:
            pairs.append((1 - model.params["varpi"], GaussianCorrelation("constant", model.host)))
        return MixtureSpec.of(*pairs)
    raise ConstructionError(f"'{model.family}' has no Gaussian mixture representation in the catalog")
