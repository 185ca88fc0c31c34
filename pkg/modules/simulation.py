"""
simulation.py - Realizations of indicator random fields

Algorithms:
- general mixture algorithm: pick a Gaussian correlation from the mixture,
  draw the Gaussian vector by Cholesky, keep its median indicator
- excursion sets 1{Y >= lambda} and plain Gaussian ensembles
- sphere exponential model: Poisson number of products of CLT sign fields
- Poisson products of median-indicator sign fields (exp_comp construction)
- sequential indicator simulation on a regular grid with simple kriging

Realization i always draws from RngSpec.child(i), so ensembles do not
depend on the worker count.
"""

import logging
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from config.config_loader import get_config
from models.data_models import GridSpec, RealizationEnsemble, RngSpec, SpaceRef
from modules import spaces
from modules.correlations import GaussianCorrelation
from modules.variogram_models import MixtureSpec, VariogramModel, gaussian_mixture_of
from utils.errors import InputError, NumericalError
from utils.workers import ordered_map, resolve_workers

logger = logging.getLogger(__name__)


def _sim_config() -> Dict[str, Any]:
    return get_config().get_section("simulation")


# ==================== GAUSSIAN VECTORS ====================

def cholesky_factor(cov: np.ndarray, label: str = "covariance") -> Tuple[np.ndarray, float]:
    """Lower factor L with L L^T = cov + ridge I, escalating the ridge on failure

    Returns (L, ridge). The ridge starts at ridge_initial * trace / n and grows
    by ridge_factor up to ridge_max * trace / n.
    """
    if isinstance(cov, spaces.SymmetricMatrix):
        cov = cov.dense()
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[0]
    if cov.ndim != 2 or cov.shape[1] != n:
        raise InputError(f"{label} must be a square matrix")
    if np.any(np.diag(cov) < 0) or not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
        raise InputError(f"{label} must be symmetric with a nonnegative diagonal")

    scale = float(np.trace(cov)) / n
    if scale == 0.0:
        return np.zeros_like(cov), 0.0

    cfg = _sim_config()
    ridge = 0.0
    factor, info = lapack.dpotrf(cov, lower=1, clean=1)
    next_ridge = float(cfg.get("ridge_initial", 1e-10))
    while info != 0:
        if next_ridge > float(cfg.get("ridge_max", 1e-6)) * (1 + 1e-12):
            raise NumericalError(
                f"Cholesky of {label} failed at leading minor {info} of {n} "
                f"even with ridge {ridge:.1e} (not positive semidefinite)"
            )
        ridge = next_ridge * scale
        factor, info = lapack.dpotrf(cov + ridge * np.eye(n), lower=1, clean=1)
        next_ridge *= float(cfg.get("ridge_factor", 10))
    if ridge > 0:
        logger.debug(f"[SIMULATE] {label}: Cholesky needed ridge {ridge:.1e}")
    return np.tril(factor), ridge


def sample_gaussian_vector(cov, rng: RngSpec) -> np.ndarray:
    """One zero-mean Gaussian vector with covariance cov"""
    if isinstance(cov, spaces.SymmetricMatrix):
        cov = cov.dense()
    L, _ = cholesky_factor(cov)
    w = rng.generator().standard_normal(L.shape[0])
    return L @ w


def _factors(correlations: List[GaussianCorrelation], X) -> List[Optional[np.ndarray]]:
    """Cholesky factor per correlation; None marks the constant (comonotone) field"""
    out = []
    for i, rho in enumerate(correlations):
        if rho.family == "constant":
            out.append(None)
            continue
        C = rho.matrix(X)
        np.fill_diagonal(C, 1.0)
        try:
            L, _ = cholesky_factor(C, label=f"atom {i} ({rho.family})")
        except NumericalError as e:
            raise NumericalError(f"atom {i} {rho!r}: {e}") from e
        out.append(L)
    return out


def _draw(L: Optional[np.ndarray], n: int, gen: np.random.Generator) -> np.ndarray:
    if L is None:
        return np.full(n, gen.standard_normal())
    return L @ gen.standard_normal(n)


def _ensemble(rows: List[np.ndarray], binary: bool, points, provenance: Dict[str, Any],
              grid: Optional[GridSpec] = None) -> RealizationEnsemble:
    values = np.vstack(rows) if rows else np.zeros((0, 0))
    if binary:
        values = values.astype(np.uint8)
    return RealizationEnsemble(values=values, binary=binary, grid=grid,
                               points=None if grid is not None else np.asarray(points),
                               provenance=provenance)


# ==================== MIXTURE ALGORITHM ====================

def simulate_median_indicator(mix: MixtureSpec, points, n_real: int, rng: RngSpec,
                              workers: Optional[int] = None) -> RealizationEnsemble:
    """General simulation algorithm for a Gaussian mixture of median indicators

    Per realization: draw the atom index T from the normalized weights, draw
    the Gaussian vector with correlation rho_T, return 1{Y >= 0}.
    """
    if not mix.is_gaussian:
        raise InputError("median indicator simulation needs Gaussian correlation atoms")
    mix = mix.normalized()
    correlations = [atom.component for atom in mix.atoms]
    weights = np.array([atom.weight for atom in mix.atoms])
    weights /= weights.sum()
    X = spaces.as_coordinates(correlations[0].host, points)
    n = len(X)
    factors = _factors(correlations, X)
    workers = resolve_workers(workers)
    logger.info(f"[SIMULATE] Median indicator: {len(correlations)} atom(s), {n} points, {n_real} realizations")

    def realization(i: int) -> np.ndarray:
        gen = rng.child(i).generator()
        t = int(gen.choice(len(weights), p=weights)) if len(weights) > 1 else 0
        return _draw(factors[t], n, gen) >= 0

    rows = ordered_map(realization, range(n_real), workers)
    provenance = {
        "algorithm": "median_indicator_mixture",
        "atoms": [{"weight": float(w), "correlation": repr(c)} for w, c in zip(weights, correlations)],
        "n_real": n_real, "seed": rng.seed, "stream": rng.stream,
    }
    return _ensemble(rows, True, X, provenance)


def simulate_excursion(rho: GaussianCorrelation, threshold: float, points, n_real: int, rng: RngSpec,
                       workers: Optional[int] = None) -> RealizationEnsemble:
    """Excursion-set indicator 1{Y(x) >= threshold} of a standard Gaussian field"""
    X = spaces.as_coordinates(rho.host, points)
    n = len(X)
    L = _factors([rho], X)[0]
    logger.info(f"[SIMULATE] Excursion at lambda={threshold:g}: {n} points, {n_real} realizations")

    def realization(i: int) -> np.ndarray:
        return _draw(L, n, rng.child(i).generator()) >= threshold

    rows = ordered_map(realization, range(n_real), resolve_workers(workers))
    provenance = {"algorithm": "excursion", "correlation": repr(rho), "threshold": threshold,
                  "n_real": n_real, "seed": rng.seed, "stream": rng.stream}
    return _ensemble(rows, True, X, provenance)


def simulate_gaussian(rho: GaussianCorrelation, points, n_real: int, rng: RngSpec,
                      workers: Optional[int] = None) -> RealizationEnsemble:
    """Real-valued standard Gaussian realizations"""
    X = spaces.as_coordinates(rho.host, points)
    n = len(X)
    L = _factors([rho], X)[0]

    def realization(i: int) -> np.ndarray:
        return _draw(L, n, rng.child(i).generator())

    rows = ordered_map(realization, range(n_real), resolve_workers(workers))
    provenance = {"algorithm": "gaussian", "correlation": repr(rho), "n_real": n_real,
                  "seed": rng.seed, "stream": rng.stream}
    return _ensemble(rows, False, X, provenance)


# ==================== PRODUCT CONSTRUCTIONS ====================

def clt_gaussian(X: np.ndarray, Q: int, gen: np.random.Generator) -> np.ndarray:
    """Y_i = sqrt((N+1)/Q) sum_q eps_q x_{i,L_q}; E[Y_i Y_j] = x_i . x_j for every Q"""
    dim = X.shape[1]
    columns = gen.integers(0, dim, size=Q)
    signs = gen.choice(np.array([-1.0, 1.0]), size=Q)
    w = np.bincount(columns, weights=signs, minlength=dim)
    return np.sqrt(dim / Q) * (X @ w)


def simulate_sphere_exponential(t: float, points, n_real: int, rng: RngSpec, Q: Optional[int] = None,
                                radius: float = 1.0, workers: Optional[int] = None) -> RealizationEnsemble:
    """Indicator field with variogram (1 - exp(-t d_GC)) / 4 on the unit sphere

    K ~ Poisson(pi t / 2) independent sign fields sign(Y_k) with Gram
    correlation are multiplied together; K = 0 gives a constant field.
    """
    if not t > 0:
        raise InputError(f"t must be positive, got {t}")
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise InputError("sphere points must be an (n, N+1) array")
    X = spaces.as_coordinates(SpaceRef.sphere(X.shape[1] - 1, radius), X) / radius
    if Q is None:
        Q = int(_sim_config().get("sphere_clt_terms", 500))
    if Q < 1:
        raise InputError("Q must be a positive integer")
    n = len(X)
    logger.info(f"[SIMULATE] Sphere exponential t={t:g}, Q={Q}: {n} points, {n_real} realizations")

    def realization(i: int) -> np.ndarray:
        gen = rng.child(i).generator()
        z = np.full(n, gen.choice(np.array([-1.0, 1.0])))
        for _ in range(int(gen.poisson(np.pi * t / 2))):
            z *= np.where(clt_gaussian(X, Q, gen) >= 0, 1.0, -1.0)
        return (1 + z) / 2

    rows = ordered_map(realization, range(n_real), resolve_workers(workers))
    provenance = {"algorithm": "sphere_exponential", "t": t, "Q": Q, "n_real": n_real,
                  "seed": rng.seed, "stream": rng.stream}
    return _ensemble(rows, True, X * radius, provenance)


def simulate_poisson_product(base: VariogramModel, t: float, points, n_real: int, rng: RngSpec,
                             workers: Optional[int] = None) -> RealizationEnsemble:
    """(1 + Z)/2 with Z a product of K ~ Poisson(t) independent +-1 fields of variogram base

    Each factor has covariance 1 - 4 g, so Z has covariance exp(-4 t g) and
    the delivered indicator has the exp_comp(4 t, varpi=1) variogram of base.
    """
    if not t > 0:
        raise InputError(f"t must be positive, got {t}")
    mix = gaussian_mixture_of(base).normalized()
    correlations = [atom.component for atom in mix.atoms]
    weights = np.array([atom.weight for atom in mix.atoms])
    weights /= weights.sum()
    X = spaces.as_coordinates(base.host, points)
    n = len(X)
    factors = _factors(correlations, X)
    logger.info(f"[SIMULATE] Poisson product t={t:g} over {base!r}: {n} points, {n_real} realizations")

    def realization(i: int) -> np.ndarray:
        gen = rng.child(i).generator()
        z = np.full(n, gen.choice(np.array([-1.0, 1.0])))
        for _ in range(int(gen.poisson(t))):
            k = int(gen.choice(len(weights), p=weights)) if len(weights) > 1 else 0
            z *= np.where(_draw(factors[k], n, gen) >= 0, 1.0, -1.0)
        return (1 + z) / 2

    rows = ordered_map(realization, range(n_real), resolve_workers(workers))
    provenance = {"algorithm": "poisson_product", "base": base.to_dict(), "t": t, "n_real": n_real,
                  "seed": rng.seed, "stream": rng.stream}
    return _ensemble(rows, True, X, provenance)


# ==================== SEQUENTIAL INDICATOR SIMULATION ====================

class _SearchTemplate:
    """Grid offsets sorted by distance, scanned in growing prefixes"""

    PREFIXES = (128, 1024, 8192)

    def __init__(self, grid: GridSpec, radius: Optional[float]):
        dy, dx = np.mgrid[-(grid.ny - 1):grid.ny, -(grid.nx - 1):grid.nx]
        dx, dy = dx.ravel(), dy.ravel()
        dist = np.hypot(dx, dy) * grid.spacing
        keep = dist > 0
        if radius is not None:
            keep &= dist <= radius
        order = np.lexsort((dx[keep], dy[keep], dist[keep]))
        self.dx = dx[keep][order]
        self.dy = dy[keep][order]
        self.nx, self.ny = grid.nx, grid.ny

    def neighbours(self, ix: int, iy: int, done: np.ndarray, max_data: int) -> np.ndarray:
        total = len(self.dx)
        for stop in [p for p in self.PREFIXES if p < total] + [total]:
            tx = ix + self.dx[:stop]
            ty = iy + self.dy[:stop]
            inside = (tx >= 0) & (tx < self.nx) & (ty >= 0) & (ty < self.ny)
            idx = ty[inside] * self.nx + tx[inside]
            found = idx[done[idx]]
            if len(found) >= max_data or stop == total:
                return found[:max_data]
        return np.zeros(0, dtype=np.int64)


def _covariance_table(model: VariogramModel, grid: GridSpec, mean: float) -> np.ndarray:
    """C(dx, dy) = m(1 - m) - g(|(dx, dy)|) for every grid offset, indexed [dy + ny - 1, dx + nx - 1]"""
    dy, dx = np.mgrid[-(grid.ny - 1):grid.ny, -(grid.nx - 1):grid.nx]
    d = np.hypot(dx, dy) * grid.spacing
    g = model.from_distance(d)
    g[grid.ny - 1, grid.nx - 1] = 0.0
    return mean * (1 - mean) - g


def _krige(C: np.ndarray, c0: np.ndarray, ridge_rel: float) -> np.ndarray:
    try:
        return linalg.cho_solve(linalg.cho_factor(C, lower=True), c0)
    except linalg.LinAlgError:
        pass
    ridge = ridge_rel * max(float(np.trace(C)) / len(C), 1e-300)
    try:
        return linalg.cho_solve(linalg.cho_factor(C + ridge * np.eye(len(C)), lower=True), c0)
    except linalg.LinAlgError:
        return np.linalg.lstsq(C + ridge * np.eye(len(C)), c0, rcond=None)[0]


def sequential_indicator_grid(model: VariogramModel, grid: GridSpec, n_real: int, rng: RngSpec,
                              max_data: Optional[int] = None, radius: Optional[float] = None,
                              mean: Optional[float] = None, workers: Optional[int] = None) -> RealizationEnsemble:
    """Unconditional sequential indicator simulation with simple kriging

    Nodes are visited along a random path; each node draws 1 with the simple
    kriging probability from up to max_data previously simulated nodes,
    clamped to [0, 1]. Node index is iy * nx + ix.
    """
    cfg = _sim_config()
    max_data = int(max_data if max_data is not None else cfg.get("sis_max_data", 24))
    radius = radius if radius is not None else cfg.get("sis_radius")
    mean = float(mean if mean is not None else cfg.get("sis_mean", 0.5))
    ridge_rel = float(cfg.get("sis_kriging_ridge", 1e-10))
    if not 0 < mean < 1:
        raise InputError(f"indicator mean must lie in (0, 1), got {mean}")
    if model.host.kind != "euclidean" or model.host.dim != 2:
        raise InputError(f"grid simulation needs a model on R^2, got {model.host.describe()}")

    table = _covariance_table(model, grid, mean)
    template = _SearchTemplate(grid, radius)
    nx, ny, n = grid.nx, grid.ny, grid.n_nodes
    logger.info(f"[SIS] {nx}x{ny} grid, {n_real} realizations, max_data={max_data}, "
                f"radius={'inf' if radius is None else radius}, mean={mean:g}")

    def realization(i: int) -> Tuple[np.ndarray, int]:
        gen = rng.child(i).generator()
        path = gen.permutation(n)
        u = gen.random(n)
        values = np.zeros(n)
        done = np.zeros(n, dtype=bool)
        clamped = 0
        for node, draw in zip(path, u):
            iy, ix = divmod(int(node), nx)
            nb = template.neighbours(ix, iy, done, max_data)
            p = mean
            if len(nb):
                nby, nbx = np.divmod(nb, nx)
                C = table[nby[:, None] - nby[None, :] + ny - 1, nbx[:, None] - nbx[None, :] + nx - 1]
                c0 = table[nby - iy + ny - 1, nbx - ix + nx - 1]
                w = _krige(C, c0, ridge_rel)
                p = mean + float(w @ (values[nb] - mean))
                if p < 0.0 or p > 1.0:
                    clamped += 1
                    p = min(max(p, 0.0), 1.0)
            values[node] = 1.0 if draw < p else 0.0
            done[node] = True
        return values, clamped

    results = ordered_map(realization, range(n_real), resolve_workers(workers))
    clamped = [c for _, c in results]
    total_clamped = int(sum(clamped))
    if total_clamped:
        logger.warning(f"[SIS] {total_clamped} kriging probabilities clamped to [0, 1]")
    provenance = {
        "algorithm": "sequential_indicator", "model": model.to_dict(),
        "grid": {"nx": nx, "ny": ny, "spacing": grid.spacing},
        "max_data": max_data, "radius": radius, "mean": mean, "path": "random",
        "clamped_probabilities": total_clamped, "clamped_per_realization": clamped,
        "n_real": n_real, "seed": rng.seed, "stream": rng.stream,
    }
    return _ensemble([v for v, _ in results], True, None, provenance, grid=grid)
