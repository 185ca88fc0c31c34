"""Exhaustive weight-vector enumeration for the cut-cone inequality families.

Every family is a set of integer vectors lambda with a right-hand side
depending on sigma = sum(lambda) (and on the gap for the gap family); the
inequality is  sum_{k,l} lambda_k lambda_l g_kl <= RHS.  Candidates are
generated in lexicographic order from integer indices, evaluated in chunks,
and aggregated in chunk order, so the worst margin and the first violating
vector do not depend on the worker count.
"""

import logging
from itertools import combinations
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from config.config_loader import get_config
from models.data_models import WeightVector
from utils.errors import EnumerationLimitError, InputError
from utils.workers import ordered_map

logger = logging.getLogger(__name__)


def _rhs_zero(sigma, lams):
    return np.zeros(len(sigma))


def _rhs_quarter_square(sigma, lams):
    return sigma.astype(float) ** 2 / 4


def _rhs_rounded(sigma, lams):
    return np.floor_divide(sigma.astype(np.int64) ** 2, 4).astype(float)


def _rhs_shepp(sigma, lams):
    return (sigma.astype(float) ** 2 - 1) / 4


def _rhs_gap(sigma, lams):
    gaps = gaps_of(lams)
    return (sigma.astype(float) ** 2 - gaps.astype(float) ** 2) / 4


# values: "ternary" {-1,0,1}, "signs" {-1,1}, "bounded" [-bound, bound]
FAMILIES: Dict[str, Dict[str, Any]] = {
    "matheron": {"values": "ternary", "sigma": lambda s: s == 1, "rhs": _rhs_zero},
    "odd_clique": {"values": "ternary", "sigma": lambda s: s % 2 == 1, "rhs": _rhs_rounded},
    "odd_clique_homogeneous": {"values": "ternary", "sigma": lambda s: np.abs(s) == 1, "rhs": _rhs_zero},
    "hypermetric": {"values": "bounded", "sigma": lambda s: s == 1, "rhs": _rhs_zero},
    "psd": {"values": "bounded", "sigma": None, "rhs": _rhs_quarter_square},
    "rounded_psd": {"values": "bounded", "sigma": None, "rhs": _rhs_rounded},
    "shepp": {"values": "signs", "sigma": None, "rhs": _rhs_shepp},
    "polygonal": {"values": "ternary", "sigma": lambda s: np.abs(s) <= 1, "rhs": _rhs_zero, "min_support": 3},
    "gap": {"values": "bounded", "sigma": None, "rhs": _rhs_gap},
}


def quadratic_forms(G: np.ndarray, lams: np.ndarray) -> np.ndarray:
    """sum_{k,l} lambda_k lambda_l G_kl for every row of lams"""
    lams = np.asarray(lams, dtype=float)
    return np.einsum("ij,ij->i", lams @ G, lams)


def _alphabet(values: str, bound: int) -> Tuple[int, int]:
    """(base, offset): digit d maps to d - offset, or to 2d - 1 for signs"""
    if values == "ternary":
        return 3, 1
    if values == "signs":
        return 2, -1
    return 2 * bound + 1, bound


def _decode(start: int, stop: int, n: int, values: str, bound: int) -> np.ndarray:
    base, offset = _alphabet(values, bound)
    idx = np.arange(start, stop, dtype=np.int64)
    powers = base ** np.arange(n - 1, -1, -1, dtype=np.int64)
    digits = (idx[:, None] // powers[None, :]) % base
    if values == "signs":
        return 2 * digits - 1
    return digits - offset


def candidate_count(n: int, family: str, bound: int) -> int:
    base, _ = _alphabet(FAMILIES[family]["values"], bound)
    return base ** n


def _filter(lams: np.ndarray, spec: Dict[str, Any]) -> np.ndarray:
    keep = np.any(lams != 0, axis=1)
    if spec.get("sigma") is not None:
        keep &= spec["sigma"](lams.sum(axis=1))
    if spec.get("min_support"):
        keep &= np.count_nonzero(lams, axis=1) >= spec["min_support"]
    return lams[keep]


def _evaluate_block(G: np.ndarray, lams: np.ndarray, rhs: Callable, tol: float) -> Dict[str, Any]:
    if len(lams) == 0:
        return {"count": 0, "worst": None, "worst_lambda": None, "first_violation": None}
    lhs = quadratic_forms(G, lams)
    margins = lhs - rhs(lams.sum(axis=1), lams)
    worst = int(np.argmax(margins))
    violating = np.flatnonzero(margins > tol)
    first = None
    if violating.size:
        i = int(violating[0])
        first = (tuple(int(v) for v in lams[i]), float(margins[i]))
    return {
        "count": len(lams),
        "worst": float(margins[worst]),
        "worst_lambda": tuple(int(v) for v in lams[worst]),
        "first_violation": first,
    }


def _aggregate(blocks: List[Dict[str, Any]]) -> Dict[str, Any]:
    count = sum(b["count"] for b in blocks)
    worst, worst_lambda, first = None, None, None
    for b in blocks:
        if b["worst"] is not None and (worst is None or b["worst"] > worst):
            worst, worst_lambda = b["worst"], b["worst_lambda"]
        if first is None and b["first_violation"] is not None:
            first = b["first_violation"]
    return {"count": count, "worst": worst, "worst_lambda": worst_lambda, "first_violation": first}


def enumerate_family(G: np.ndarray, family: str, bound: int = 3, workers: int = 1,
                     tol: Optional[float] = None) -> Dict[str, Any]:
    """Evaluate every vector of a family on the matrix G

    Returns {"verdict", "margin", "certificate", "n_candidates"}; verdict is
    None when the family has no candidate at this n.
    Raises EnumerationLimitError when the candidate count exceeds the limit.
    """
    if family not in FAMILIES:
        raise InputError(f"unknown inequality family '{family}'; known: {', '.join(sorted(FAMILIES))}")
    spec = FAMILIES[family]
    G = np.asarray(G, dtype=float)
    n = G.shape[0]
    limits = get_config().get_section("validity").get("limits", {})
    if tol is None:
        tol = get_config().get_tolerance("slack_absolute")

    total = candidate_count(n, family, bound)
    if total > int(limits.get("max_candidates", 10 ** 8)):
        raise EnumerationLimitError(f"{family}: {total} candidates at n={n} exceed the enumeration limit")

    chunk = int(limits.get("chunk_size", 65536))
    ranges = [(s, min(s + chunk, total)) for s in range(0, total, chunk)]

    def run(span):
        lams = _filter(_decode(span[0], span[1], n, spec["values"], bound), spec)
        return _evaluate_block(G, lams, spec["rhs"], tol)

    summary = _aggregate(ordered_map(run, ranges, workers))
    return _outcome(family, summary, tol)


def evaluate_candidates(G: np.ndarray, family: str, lams: np.ndarray, tol: Optional[float] = None,
                        workers: int = 1) -> Dict[str, Any]:
    """Same as enumerate_family over an explicit candidate list (kept in the given order)"""
    spec = FAMILIES[family]
    if tol is None:
        tol = get_config().get_tolerance("slack_absolute")
    lams = _filter(np.asarray(lams, dtype=np.int64), spec)
    chunk = int(get_config().get_section("validity").get("limits", {}).get("chunk_size", 65536))
    pieces = [lams[s:s + chunk] for s in range(0, len(lams), chunk)]
    summary = _aggregate(ordered_map(lambda part: _evaluate_block(G, part, spec["rhs"], tol), pieces, workers))
    return _outcome(family, summary, tol)


def _outcome(family: str, summary: Dict[str, Any], tol: float) -> Dict[str, Any]:
    if summary["count"] == 0:
        return {"verdict": None, "margin": None, "certificate": None, "n_candidates": 0}
    certificate = None
    if summary["first_violation"] is not None:
        lam, margin = summary["first_violation"]
        weights = WeightVector(lambdas=lam)
        certificate = {"lambdas": list(weights.lambdas), "sigma": weights.sigma, "margin": margin}
    verdict = "fail" if certificate is not None else "pass"
    logger.debug(f"[ENUM] {family}: {verdict} over {summary['count']} vectors, worst margin {summary['worst']:.3e}")
    return {"verdict": verdict, "margin": summary["worst"], "certificate": certificate,
            "n_candidates": summary["count"], "worst_lambdas": list(summary["worst_lambda"])}


def polygonal_samples(n: int, n_random: int, rng: np.random.Generator) -> np.ndarray:
    """All triangle vectors plus seeded random balanced bipartitions of all n points"""
    triples = []
    for i, j, k in combinations(range(n), 3):
        for neg in (i, j, k):
            lam = np.zeros(n, dtype=np.int64)
            lam[[i, j, k]] = 1
            lam[neg] = -1
            triples.append(lam)
    random_rows = np.ones((n_random, n), dtype=np.int64)
    for row in random_rows:
        row[rng.permutation(n)[: n // 2]] = -1
    return np.vstack([np.array(triples).reshape(-1, n), random_rows])


# ==================== GAP ====================

def _sign_block(start: int, stop: int, m: int) -> np.ndarray:
    idx = np.arange(start, stop, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(m - 1, -1, -1, dtype=np.int64)[None, :]) & 1
    return 1 - 2 * bits


def gaps_of(lams: np.ndarray) -> np.ndarray:
    """Exact gap of every row: min |lambda . z| over z in {-1, 1}^n (z_1 = 1 by symmetry)"""
    lams = np.atleast_2d(np.asarray(lams, dtype=np.int64))
    n = lams.shape[1]
    if n == 1:
        return np.abs(lams[:, 0])
    Z = _sign_block(0, 2 ** (n - 1), n - 1)
    values = lams[:, :1] + lams[:, 1:] @ Z.T
    return np.abs(values).min(axis=1)


def gap(lambdas: Union[WeightVector, Sequence[int]]) -> int:
    """Exact gap of one integer weight vector, n <= 24"""
    if isinstance(lambdas, WeightVector):
        lambdas = lambdas.lambdas
    lam = np.asarray(lambdas, dtype=np.int64)
    n = lam.size
    max_n = int(get_config().get_section("validity").get("limits", {}).get("gap_max_n", 24))
    if n > max_n:
        raise EnumerationLimitError(
            f"gap of a length-{n} vector needs 2^{n - 1} sign vectors; use the rounded_psd family instead"
        )
    if n == 0:
        return 0
    if n == 1:
        return int(abs(lam[0]))
    # the gap has the parity of sigma, so that parity floor ends the search
    floor = int(abs(lam.sum()) % 2)
    best = int(abs(lam.sum()))
    chunk = 1 << 16
    total = 1 << (n - 1)
    for start in range(0, total, chunk):
        Z = _sign_block(start, min(start + chunk, total), n - 1)
        best = min(best, int(np.abs(lam[0] + Z @ lam[1:]).min()))
        if best == floor:
            break
    return best
