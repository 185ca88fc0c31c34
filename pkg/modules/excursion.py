"""
excursion.py - Indicator variogram of the excursion set {Y >= lambda} of a standard Gaussian field

    g_lambda(rho) = 1/(2 pi) int_rho^1 exp(-lambda^2 / (1 + u)) du / sqrt(1 - u^2)

evaluated three ways:
- quadrature after u = cos(theta), which removes the endpoint singularity
- the Hermite series  exp(-lambda^2)/pi  sum_k (1 - rho^k) H_{k-1}(lambda/sqrt2)^2 / (2^k k!)
- the tan substitution  exp(-lambda^2/2)/pi  int_0^{v*} exp(-lambda^2 tan^2 v / 2) dv

Hermite polynomials are the physicists' ones (H_1(x) = 2x).
"""

import csv
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np
from pydantic import ValidationError
from scipy import integrate, stats

from config.config_loader import get_config
from models.data_models import ExcursionQuery, HermiteEval
from utils.errors import InputError, NumericalError

logger = logging.getLogger(__name__)

# Cramer: |H_n(x)| exp(-x^2/2) <= K sqrt(2^n n!)
CRAMER_K = 1.086435


def _excursion_config() -> Dict:
    return get_config().get_section("excursion")


def hermite_poly(k: Union[int, HermiteEval], x):
    """Physicists' Hermite polynomial H_k(x) by the three-term recurrence"""
    if isinstance(k, HermiteEval):
        k = k.degree
    if k < 0:
        raise InputError(f"Hermite degree must be nonnegative, got {k}")
    x = np.asarray(x, dtype=float)
    prev, cur = np.ones_like(x), 2 * x
    if k == 0:
        return prev if prev.ndim else float(prev)
    for n in range(1, k):
        prev, cur = cur, 2 * x * cur - 2 * n * prev
    return cur if cur.ndim else float(cur)


def excursion_mean(lam: float) -> float:
    """P(Y >= lambda) = 1 - Phi(lambda)"""
    return float(stats.norm.sf(lam))


# ==================== METHODS ====================

def _quadrature(rho: float, lam: float, tol: float) -> float:
    if rho >= 1.0:
        return 0.0
    upper = float(np.arccos(rho))
    if lam == 0.0:
        return upper / (2 * np.pi)
    lam2 = lam * lam

    def integrand(theta):
        # 1 + cos(theta) = 2 cos^2(theta / 2)
        c = np.cos(theta / 2)
        with np.errstate(divide="ignore", over="ignore"):
            return np.exp(-lam2 / (2 * c * c)) if c > 0 else 0.0

    value, err = integrate.quad(integrand, 0.0, upper, epsabs=tol / 10, epsrel=1e-13, limit=200)
    return value / (2 * np.pi)


def _tan_integral(rho: float, lam: float, tol: float) -> float:
    if rho >= 1.0:
        return 0.0
    upper = float(np.arctan2(np.sqrt(1 - rho), np.sqrt(1 + rho)))
    if lam == 0.0:
        return upper / np.pi
    half = lam * lam / 2

    def integrand(v):
        t = np.tan(v)
        with np.errstate(over="ignore"):
            return np.exp(-half * t * t)

    value, err = integrate.quad(integrand, 0.0, upper, epsabs=tol / 10, epsrel=1e-13, limit=200)
    return np.exp(-half) * value / np.pi


def _hermite(rho: float, lam: float, tol: float, n_terms: Optional[int]) -> float:
    """Series over normalized h_n = H_n(x) / sqrt(2^n n!), x = lambda / sqrt(2)

    Term k is (1 - rho^k) h_{k-1}^2 / (2k). The unweighted terms sum to
    pi exp(lambda^2) p (1 - p) exactly, which closes that part of the tail;
    the rho^k part is bounded through Cramer's inequality.
    """
    if rho >= 1.0:
        return 0.0
    x = lam / np.sqrt(2)
    prefactor = np.exp(-lam * lam) / np.pi
    max_terms = int(_excursion_config().get("max_terms", 10 ** 6))
    limit = n_terms if n_terms is not None else max_terms

    h_prev, h_cur = 0.0, 1.0           # h_{-1}, h_0
    weighted = 0.0                     # sum (1 - rho^k) h_{k-1}^2 / (2k)
    plain = 0.0                        # sum h_{k-1}^2 / (2k)
    rho_k = 1.0
    a = abs(rho)
    for k in range(1, limit + 1):
        rho_k *= rho
        term = h_cur * h_cur / (2 * k)
        weighted += (1 - rho_k) * term
        plain += term
        # advance to h_k
        h_prev, h_cur = h_cur, np.sqrt(2.0 / k) * x * h_cur - np.sqrt((k - 1) / k) * h_prev
        if n_terms is None and a < 1.0:
            bound = prefactor * CRAMER_K ** 2 * np.exp(x * x) * a ** (k + 1) / (2 * (k + 1) * (1 - a))
            if bound < tol:
                p = excursion_mean(lam)
                tail = np.pi * np.exp(lam * lam) * p * (1 - p) - plain
                return float(prefactor * (weighted + max(tail, 0.0)))
    if n_terms is not None:
        return float(prefactor * weighted)
    raise NumericalError(
        f"Hermite series for rho={rho:g}, lambda={lam:g} did not reach tol={tol:g} in {max_terms} terms; "
        "use the quadrature method"
    )


_METHODS = ("quadrature", "hermite", "tan_integral")


def g_lambda(q: ExcursionQuery) -> float:
    """Excursion indicator variogram at correlation rho and threshold lambda, in [0, 1/2]"""
    if q.method == "quadrature":
        value = _quadrature(q.rho, q.lam, q.tol)
    elif q.method == "tan_integral":
        value = _tan_integral(q.rho, q.lam, q.tol)
    else:
        value = _hermite(q.rho, q.lam, q.tol, q.n_terms)
    return float(min(max(value, 0.0), 0.5))


def g_lambda_value(rho: float, lam: float, method: str = "quadrature", tol: Optional[float] = None,
                   n_terms: Optional[int] = None) -> float:
    if tol is None:
        tol = float(_excursion_config().get("tol", 1e-10))
    try:
        query = ExcursionQuery(rho=rho, lam=lam, method=method, tol=tol, n_terms=n_terms)
    except ValidationError as e:
        raise InputError(f"bad excursion query: {e.errors()[0]['msg']}") from e
    return g_lambda(query)


def g_lambda_grid(rhos: Sequence[float], lambdas: Sequence[float],
                  methods: Iterable[str] = _METHODS, tol: Optional[float] = None) -> List[Dict]:
    """Rows {rho, lambda, method, value} over the full grid"""
    rows = []
    for method in methods:
        if method not in _METHODS:
            raise InputError(f"unknown method '{method}'; known: {', '.join(_METHODS)}")
        for rho in rhos:
            for lam in lambdas:
                rows.append({"rho": float(rho), "lambda": float(lam), "method": method,
                             "value": g_lambda_value(rho, lam, method, tol)})
    logger.info(f"[EXCURSION] Evaluated {len(rows)} grid values")
    return rows


def integrate_over_threshold(rho: float, cutoff: Optional[float] = None, tol: Optional[float] = None) -> float:
    """int g_lambda d lambda over [-cutoff, cutoff]; tends to sqrt((1 - rho) / pi)"""
    if cutoff is None:
        cutoff = float(_excursion_config().get("threshold_cutoff", 8))
    value, err = integrate.quad(lambda lam: g_lambda_value(rho, lam, "quadrature", tol), 0.0, cutoff,
                                epsabs=1e-11, limit=200)
    return 2 * value


def monte_carlo_g_lambda(rho: float, lam: float, n_samples: int, rng: np.random.Generator) -> float:
    """Direct estimate from correlated standard normal pairs"""
    z1 = rng.standard_normal(n_samples)
    z2 = rho * z1 + np.sqrt(max(1 - rho * rho, 0.0)) * rng.standard_normal(n_samples)
    return float(np.mean((z1 >= lam) != (z2 >= lam)) / 2)


def write_grid_csv(rows: List[Dict], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = get_config().get_section("output").get("float_format", "%.10g")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["rho", "lambda", "method", "value"])
        for row in rows:
            writer.writerow([fmt % row["rho"], fmt % row["lambda"], row["method"], fmt % row["value"]])
    return path
