"""Exact realizability of a small variogram matrix as an indicator variogram.

g is realizable on n points iff some distribution over sign vectors
eps in {-1, 1}^n has E[eps_k eps_l] = 1 - 4 g_kl. The phase-1 LP over the
2^(n-1) atoms (eps and -eps merged) decides it; when infeasible, the LP duals
give a corner-positive matrix M with <M, eps eps^T> >= 0 for every eps and
<M, 1 - 4g> < 0, checked by full enumeration before it is reported.
"""

import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel
from scipy.optimize import linprog

from config.config_loader import get_config
from modules import enumeration
from utils.errors import EnumerationLimitError, InputError, NumericalError

logger = logging.getLogger(__name__)

_HIGHS_OPTIONS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


class RealizabilityResult(BaseModel):
    feasible: bool
    objective: float
    atoms: List[Tuple[List[int], float]] = []
    moment_residual: Optional[float] = None
    certificate: Optional[List[List[float]]] = None
    certificate_value: Optional[float] = None
    certificate_min_corner: Optional[float] = None


def sign_atoms(n: int) -> np.ndarray:
    """All eps in {-1, 1}^n with eps_1 = +1, shape (2^(n-1), n)"""
    rest = enumeration._sign_block(0, 2 ** (n - 1), n - 1)
    return np.hstack([np.ones((len(rest), 1), dtype=np.int64), rest])


def _moment_system(g: np.ndarray, E: np.ndarray) -> Tuple[np.ndarray, np.ndarray, List[Tuple[int, int]]]:
    n = g.shape[0]
    pairs = [(k, l) for k in range(n) for l in range(k + 1, n)]
    rows = [np.ones(len(E))] + [E[:, k] * E[:, l] for k, l in pairs]
    b = np.array([1.0] + [1.0 - 4.0 * g[k, l] for k, l in pairs])
    return np.vstack(rows).astype(float), b, pairs


def realizability_small(g: np.ndarray) -> RealizabilityResult:
    """Decide membership of g in the indicator variogram cone on n <= 10 points"""
    g = np.asarray(g, dtype=float)
    n = g.shape[0]
    if g.ndim != 2 or g.shape[1] != n or n < 2:
        raise InputError("realizability needs a square matrix on at least 2 points")
    max_n = int(get_config().get_section("validity").get("limits", {}).get("realizability_max_n", 10))
    if n > max_n:
        raise EnumerationLimitError(
            f"exact realizability is limited to n <= {max_n} (got {n}); use the inequality families"
        )

    E = sign_atoms(n)
    A, b, pairs = _moment_system(g, E)
    m, n_atoms = A.shape
    # min sum(s+ + s-)  s.t.  A p + s+ - s- = b,  p, s+, s- >= 0
    c = np.concatenate([np.zeros(n_atoms), np.ones(2 * m)])
    A_eq = np.hstack([A, np.eye(m), -np.eye(m)])
    res = linprog(c, A_eq=A_eq, b_eq=b, bounds=(0, None), method="highs", options=_HIGHS_OPTIONS)
    if res.status != 0:
        raise NumericalError(f"realizability LP did not solve: {res.message}")

    tol = get_config().get_tolerance("lp_feasibility")
    objective = float(res.fun)
    if objective <= tol:
        p = np.clip(res.x[:n_atoms], 0.0, None)
        p /= p.sum()
        residual = float(np.abs(A @ p - b).max())
        atoms = [(E[i].tolist(), float(p[i])) for i in np.flatnonzero(p > 1e-12)]
        logger.debug(f"[LP] n={n} feasible on {len(atoms)} atoms, residual {residual:.2e}")
        return RealizabilityResult(feasible=True, objective=objective, atoms=atoms, moment_residual=residual)

    M, value, min_corner = _dual_certificate(res.eqlin.marginals, A, b, pairs, n)
    logger.debug(f"[LP] n={n} infeasible, objective {objective:.3e}, certificate <M, 1-4g> = {value:.3e}")
    return RealizabilityResult(feasible=False, objective=objective, certificate=M.tolist(),
                               certificate_value=value, certificate_min_corner=min_corner)


def _dual_certificate(y: np.ndarray, A: np.ndarray, b: np.ndarray, pairs, n: int):
    y = np.array(y, dtype=float)
    # push A^T y onto the nonpositive orthant through the sum-to-one row
    excess = float((A.T @ y).max())
    if excess > 0:
        y[0] -= excess
    if b @ y <= 0:
        raise NumericalError("realizability LP duals do not separate the target moments")

    M = np.zeros((n, n))
    for (k, l), y_kl in zip(pairs, y[1:]):
        M[k, l] = M[l, k] = -y_kl / 2
    np.fill_diagonal(M, -y[0] / n)
    M /= np.abs(M).max()

    value, min_corner = verify_certificate(M, target_moments(b, pairs, n))
    if min_corner < -1e-12 or value >= 0:
        raise NumericalError(
            f"corner-positive certificate failed verification (min corner {min_corner:.3e}, value {value:.3e})"
        )
    return M, value, min_corner


def target_moments(b: np.ndarray, pairs, n: int) -> np.ndarray:
    C = np.eye(n)
    for (k, l), v in zip(pairs, b[1:]):
        C[k, l] = C[l, k] = v
    return C


def verify_certificate(M: np.ndarray, C: np.ndarray) -> Tuple[float, float]:
    """(<M, C>, min over all eps of <M, eps eps^T>) by full enumeration"""
    M = np.asarray(M, dtype=float)
    E = sign_atoms(M.shape[0]).astype(float)
    corners = np.einsum("ij,ij->i", E @ M, E)
    return float(np.sum(M * C)), float(corners.min())


def certificate_margin(M: np.ndarray, g: np.ndarray) -> float:
    """Violation of the corner-positive inequality <M, 1 - 4g> >= 0 (positive when violated)"""
    g = np.asarray(g, dtype=float)
    C = 1.0 - 4.0 * g
    np.fill_diagonal(C, 1.0)
    value, _ = verify_certificate(M, C)
    return -value


def search_matheron_counterexample(n: int, trials: int, rng: np.random.Generator,
                                   workers: int = 1) -> Optional[Dict[str, Any]]:
    """Random search for a matrix satisfying Matheron's inequalities that is not realizable

    Candidates are realizable matrices pushed outward along a random direction.
    Returns the first hit, or None.
    """
    E = sign_atoms(n).astype(float)
    for trial in range(trials):
        p = rng.dirichlet(np.full(len(E), 0.3))
        C = (E.T * p) @ E
        g = (1.0 - C) / 4
        direction = rng.uniform(-1, 1, size=(n, n))
        direction = (direction + direction.T) / 2
        np.fill_diagonal(direction, 0.0)
        g = np.clip(g + rng.uniform(0.0, 0.1) * direction, 0.0, 0.5)
        np.fill_diagonal(g, 0.0)

        if enumeration.enumerate_family(g, "matheron", workers=workers)["verdict"] != "pass":
            continue
        result = realizability_small(g)
        if not result.feasible:
            logger.info(f"[LP] Matheron-passing unrealizable matrix found at trial {trial}")
            return {"trial": trial, "g": g.tolist(), "certificate": result.certificate,
                    "certificate_value": result.certificate_value}
    logger.info(f"[LP] No counterexample in {trials} trials at n={n}")
    return None
