"""Point-hosting spaces and their distances.

Euclidean spaces, spheres S^N(r) embedded in R^(N+1), and finite weighted
graphs carrying one of three metrics: shortest path, resistance and
communicability. Graph distance matrices are cached per graph.
"""

import logging
from functools import lru_cache
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel
from scipy import linalg
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial.distance import cdist

from config.config_loader import get_config
from models.data_models import Graph, Point, SpaceRef
from utils.errors import ConfigError, InputError

logger = logging.getLogger(__name__)

PointsLike = Union[np.ndarray, Sequence[Point], Sequence[Sequence[float]], Sequence[int]]


class SymmetricMatrix:
    """Dense symmetric matrix kept as its packed lower triangle (diagonal included)"""

    def __init__(self, n: int, packed: np.ndarray):
        packed = np.asarray(packed, dtype=float)
        if packed.shape != (n * (n + 1) // 2,):
            raise InputError(f"packed storage of a {n}x{n} symmetric matrix needs {n * (n + 1) // 2} entries")
        self.n = n
        self._packed = packed

    @classmethod
    def from_dense(cls, matrix: np.ndarray, atol: float = 1e-12) -> "SymmetricMatrix":
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise InputError(f"expected a square matrix, got shape {matrix.shape}")
        finite = np.isfinite(matrix)
        if not np.array_equal(finite, finite.T):
            raise InputError("matrix is not symmetric")
        scale = max(1.0, float(np.abs(matrix[finite]).max(initial=0.0)))
        if not np.allclose(matrix[finite], matrix.T[finite], rtol=0.0, atol=atol * scale):
            raise InputError("matrix is not symmetric")
        rows, cols = np.tril_indices(matrix.shape[0])
        return cls(matrix.shape[0], matrix[rows, cols])

    def dense(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        rows, cols = np.tril_indices(self.n)
        out[rows, cols] = self._packed
        out[cols, rows] = self._packed
        return out

    def __getitem__(self, index) -> float:
        k, l = index
        if k < l:
            k, l = l, k
        return float(self._packed[k * (k + 1) // 2 + l])

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"SymmetricMatrix(n={self.n})"


class SphereMatrixDiagnostics(BaseModel):
    valid: bool
    eigenvalues: List[float]
    min_eigenvalue: float
    rank: int
    reason: Optional[str] = None


# ==================== POINTS ====================

def as_coordinates(space: SpaceRef, points: PointsLike) -> np.ndarray:
    """Validate points against the space and return them as an array

    Euclidean: (n, N) floats; sphere: (n, N+1) floats projected exactly onto
    the sphere; graph: (n,) vertex indices.
    """
    if isinstance(points, np.ndarray):
        raw = points
    else:
        points = list(points)
        if points and isinstance(points[0], Point):
            if space.kind == "graph":
                if any(p.vertex is None for p in points):
                    raise InputError("graph spaces take vertex points")
                raw = np.array([p.vertex for p in points])
            else:
                if any(p.coords is None for p in points):
                    raise InputError(f"{space.kind} spaces take coordinate points")
                raw = np.array([p.coords for p in points], dtype=float)
        else:
            raw = np.asarray(points)

    if space.kind == "graph":
        idx = np.asarray(raw).reshape(-1)
        if idx.size and (not np.all(np.equal(np.mod(idx, 1), 0)) or idx.min() < 0 or idx.max() >= space.graph.n_vertices):
            raise InputError(f"vertex indices must lie in 0..{space.graph.n_vertices - 1}")
        return idx.astype(np.int64)

    X = np.asarray(raw, dtype=float)
    if X.ndim == 1 and space.ambient_dim == 1:
        X = X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[1] != space.ambient_dim:
        raise InputError(
            f"points of {space.describe()} need {space.ambient_dim} coordinates, got array of shape {X.shape}"
        )
    if space.kind == "sphere":
        tol = get_config().get_tolerance("sphere_radius_relative")
        norms = np.linalg.norm(X, axis=1)
        off = np.abs(norms - space.radius) > tol * space.radius
        if np.any(off):
            bad = int(np.argmax(off))
            raise InputError(f"point {bad} has norm {norms[bad]:.12g}, not on the sphere of radius {space.radius:g}")
        X = X * (space.radius / norms)[:, None]
    return X


def random_points(space: SpaceRef, n: int, rng: np.random.Generator, box: float = 10.0) -> np.ndarray:
    """Uniform points: in [0, box]^N, on the sphere, or over the graph's vertices"""
    if space.kind == "euclidean":
        return rng.uniform(0.0, box, size=(n, space.dim))
    if space.kind == "sphere":
        X = rng.standard_normal((n, space.dim + 1))
        return space.radius * X / np.linalg.norm(X, axis=1, keepdims=True)
    return rng.integers(0, space.graph.n_vertices, size=n)


def sphere_grid(nlon: int, nlat: int) -> np.ndarray:
    """Cell-centre lon/lat grid on S^2(1), rows from north to south (index = ilat * nlon + ilon)"""
    lat = np.pi / 2 - (np.arange(nlat) + 0.5) * np.pi / nlat
    lon = (np.arange(nlon) + 0.5) * 2 * np.pi / nlon
    LAT, LON = np.meshgrid(lat, lon, indexing="ij")
    return np.column_stack([
        (np.cos(LAT) * np.cos(LON)).ravel(),
        (np.cos(LAT) * np.sin(LON)).ravel(),
        np.sin(LAT).ravel(),
    ])


# ==================== GRAPHS ====================

def parse_graph(text: str, name: Optional[str] = None) -> Graph:
    """Edge-list text: vertex count on the first data line, then `k l weight` per line"""
    n_vertices = None
    edges = []
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        try:
            if n_vertices is None:
                if len(fields) != 1:
                    raise ValueError("expected the vertex count")
                n_vertices = int(fields[0])
                continue
            if len(fields) not in (2, 3):
                raise ValueError("expected 'k l weight'")
            k, l = int(fields[0]), int(fields[1])
            w = float(fields[2]) if len(fields) == 3 else 1.0
        except ValueError as e:
            raise ConfigError(f"bad graph line '{raw_line.strip()}': {e}", line=lineno) from e
        if k == l:
            raise ConfigError(f"self-loop at vertex {k}", line=lineno)
        if not 0 <= min(k, l) or max(k, l) >= n_vertices:
            raise ConfigError(f"vertex out of range 0..{n_vertices - 1}", line=lineno)
        if not w > 0:
            raise ConfigError(f"non-positive weight {w}", line=lineno)
        if any({k, l} == {a, b} for a, b, _ in edges):
            raise ConfigError(f"duplicate edge ({k}, {l})", line=lineno)
        edges.append((k, l, w))
    if n_vertices is None:
        raise ConfigError("graph file holds no vertex count")
    return Graph(n_vertices=n_vertices, edges=edges, name=name)


def read_graph(path: Union[str, Path]) -> Graph:
    path = Path(path)
    if not path.exists():
        raise InputError(f"graph file not found: {path}")
    graph = parse_graph(path.read_text(encoding="utf-8"), name=path.name)
    logger.info(f"[SPACES] Loaded graph {path.name}: {graph.n_vertices} vertices, {len(graph.edges)} edges")
    return graph


def _laplacian(graph: Graph) -> np.ndarray:
    W = graph.weight_matrix()
    return np.diag(W.sum(axis=1)) - W


@lru_cache(maxsize=32)
def _shortest_path_dense(graph: Graph) -> np.ndarray:
    D = dijkstra(csr_matrix(graph.weight_matrix()), directed=False)
    D.setflags(write=False)
    return D


@lru_cache(maxsize=32)
def _resistance_dense(graph: Graph) -> np.ndarray:
    n = graph.n_vertices
    if n == 1:
        return np.zeros((1, 1))
    mu, V = linalg.eigh(_laplacian(graph))
    cutoff = get_config().get_tolerance("pinv_cutoff") * mu.max()
    if np.sum(mu < cutoff) > 1:
        raise InputError(f"graph is disconnected (Laplacian null space of dimension {int(np.sum(mu < cutoff))})")
    inv = np.where(mu >= cutoff, 1.0 / np.where(mu >= cutoff, mu, 1.0), 0.0)
    L_plus = (V * inv) @ V.T
    diag = np.diag(L_plus)
    D = np.maximum(diag[:, None] + diag[None, :] - 2 * L_plus, 0.0)
    np.fill_diagonal(D, 0.0)
    D.setflags(write=False)
    return D


@lru_cache(maxsize=32)
def _communicability_dense(graph: Graph) -> np.ndarray:
    if not graph.is_unweighted:
        raise InputError("communicability distance is defined on unweighted graphs only")
    n_comp, _ = connected_components(csr_matrix(graph.weight_matrix()), directed=False)
    if n_comp > 1:
        raise InputError(f"graph is disconnected ({n_comp} components)")
    mu, V = linalg.eigh(graph.weight_matrix())
    G = (V * np.exp(mu)) @ V.T
    diag = np.diag(G)
    D = np.sqrt(np.maximum(diag[:, None] + diag[None, :] - 2 * G, 0.0))
    np.fill_diagonal(D, 0.0)
    D.setflags(write=False)
    return D


def shortest_path_distance_matrix(graph: Graph) -> SymmetricMatrix:
    """Minimum path weight between vertices, +inf between components"""
    return SymmetricMatrix.from_dense(_shortest_path_dense(graph))


def resistance_distance_matrix(graph: Graph) -> SymmetricMatrix:
    """Effective resistance from the Laplacian pseudoinverse"""
    return SymmetricMatrix.from_dense(_resistance_dense(graph))


def communicability_distance_matrix(graph: Graph) -> SymmetricMatrix:
    """sqrt(G_kk + G_ll - 2 G_kl) with G = exp(adjacency)"""
    return SymmetricMatrix.from_dense(_communicability_dense(graph))


def _graph_metric(space: SpaceRef) -> np.ndarray:
    if space.metric == "shortest_path":
        return _shortest_path_dense(space.graph)
    if space.metric == "resistance":
        return _resistance_dense(space.graph)
    return _communicability_dense(space.graph)


# ==================== DISTANCES ====================

def _great_circle(X: np.ndarray, Y: np.ndarray, radius: float) -> np.ndarray:
    clamp = get_config().get_tolerance("arccos_clamp")
    cos = (X @ Y.T) / radius ** 2
    if np.any(np.abs(cos) > 1 + clamp):
        raise InputError("great-circle cosine outside [-1, 1]")
    # half-chord arcsine equals the clamped arccos and stays exact at zero
    chord = cdist(X, Y)
    return 2 * radius * np.arcsin(np.clip(chord / (2 * radius), 0.0, 1.0))


def pairwise_distances(space: SpaceRef, X: PointsLike, Y: Optional[PointsLike] = None) -> np.ndarray:
    """Raw distance matrix of the space between two point sets (Y defaults to X)"""
    X = as_coordinates(space, X)
    Y = X if Y is None else as_coordinates(space, Y)
    if space.kind == "euclidean":
        return cdist(X, Y)
    if space.kind == "sphere":
        return _great_circle(X, Y, space.radius)
    return _graph_metric(space)[np.ix_(X, Y)]


def model_distances(space: SpaceRef, X: PointsLike, Y: Optional[PointsLike] = None) -> np.ndarray:
    """Distance seen by radial models: sqrt(d_R) on resistance graphs, the raw metric elsewhere"""
    D = pairwise_distances(space, X, Y)
    if space.kind == "graph" and space.metric == "resistance":
        return np.sqrt(D)
    return D


def distance(space: SpaceRef, x, y) -> float:
    return float(pairwise_distances(space, [x], [y])[0, 0])


def distance_matrix(space: SpaceRef, points: PointsLike) -> SymmetricMatrix:
    return SymmetricMatrix.from_dense(pairwise_distances(space, points))


def validate_sphere_distance_matrix(D: Union[SymmetricMatrix, np.ndarray], N: int, r: float = 1.0) -> SphereMatrixDiagnostics:
    """Is D the great-circle distance matrix of points on S^N(r)?

    Holds iff r^2 cos(D / r) is positive semidefinite with rank at most N + 1.
    """
    if N < 1 or r <= 0:
        raise InputError("sphere dimension must be >= 1 and radius > 0")
    dense = D.dense() if isinstance(D, SymmetricMatrix) else SymmetricMatrix.from_dense(D).dense()
    clamp = get_config().get_tolerance("arccos_clamp")
    if np.any(dense < -clamp) or np.any(dense > np.pi * r * (1 + clamp)):
        raise InputError(f"distance entries must lie in [0, pi*r] = [0, {np.pi * r:.12g}]")
    if np.any(np.abs(np.diag(dense)) > clamp):
        raise InputError("distance matrix needs a zero diagonal")

    eigenvalues = linalg.eigvalsh(r ** 2 * np.cos(dense / r))
    tol = get_config().get_tolerance("sphere_rank_relative") * max(np.abs(eigenvalues).max(), 1e-300)
    rank = int(np.sum(eigenvalues > tol))
    reason = None
    if eigenvalues.min() < -tol:
        reason = f"cosine matrix has negative eigenvalue {eigenvalues.min():.6g}"
    elif rank > N + 1:
        reason = f"cosine matrix rank {rank} exceeds N + 1 = {N + 1}"
    logger.debug(f"[SPACES] Sphere matrix check n={dense.shape[0]} N={N}: rank={rank} reason={reason}")
    return SphereMatrixDiagnostics(
        valid=reason is None,
        eigenvalues=eigenvalues.tolist(),
        min_eigenvalue=float(eigenvalues.min()),
        rank=rank,
        reason=reason,
    )
