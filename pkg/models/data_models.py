from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List, Dict, Any, Optional, Tuple, Literal
from datetime import datetime

import numpy as np

from config.config_loader import get_config

# ==================== SPACE MODELS ====================

SpaceKind = Literal["euclidean", "sphere", "graph"]
GraphMetric = Literal["shortest_path", "resistance", "communicability"]


class Graph(BaseModel):
    """Undirected simple finite weighted graph; edges stored as (k, l, w) with k < l"""
    model_config = ConfigDict(frozen=True)

    n_vertices: int = Field(..., ge=1)
    edges: Tuple[Tuple[int, int, float], ...] = ()
    name: Optional[str] = None

    @field_validator("edges", mode="before")
    @classmethod
    def _normalize_edges(cls, value):
        normalized = []
        for edge in value:
            if len(edge) == 2:
                k, l, w = edge[0], edge[1], 1.0
            else:
                k, l, w = edge
            k, l = int(k), int(l)
            normalized.append((min(k, l), max(k, l), float(w)))
        return tuple(sorted(normalized))

    @model_validator(mode="after")
    def _check_simple(self):
        seen = set()
        for k, l, w in self.edges:
            if k == l:
                raise ValueError(f"self-loop at vertex {k}")
            if k < 0 or l >= self.n_vertices:
                raise ValueError(f"edge ({k}, {l}) outside vertex range 0..{self.n_vertices - 1}")
            if not w > 0:
                raise ValueError(f"edge ({k}, {l}) has non-positive weight {w}")
            if (k, l) in seen:
                raise ValueError(f"duplicate edge ({k}, {l})")
            seen.add((k, l))
        return self

    @property
    def is_unweighted(self) -> bool:
        return all(w == 1.0 for _, _, w in self.edges)

    def weight_matrix(self) -> np.ndarray:
        W = np.zeros((self.n_vertices, self.n_vertices))
        for k, l, w in self.edges:
            W[k, l] = W[l, k] = w
        return W


class SpaceRef(BaseModel):
    """A point-hosting space: R^N, S^N(r) or a finite graph with a chosen metric"""
    model_config = ConfigDict(frozen=True)

    kind: SpaceKind
    dim: int = Field(1, ge=1)
    radius: float = Field(1.0, gt=0)
    graph: Optional[Graph] = None
    metric: GraphMetric = "resistance"

    @model_validator(mode="after")
    def _check_graph(self):
        if self.kind == "graph" and self.graph is None:
            raise ValueError("graph space needs a graph")
        if self.kind != "graph" and self.graph is not None:
            raise ValueError(f"{self.kind} space cannot carry a graph")
        return self

    @classmethod
    def euclidean(cls, dim: int = 1) -> "SpaceRef":
        return cls(kind="euclidean", dim=dim)

    @classmethod
    def sphere(cls, dim: int = 2, radius: float = 1.0) -> "SpaceRef":
        return cls(kind="sphere", dim=dim, radius=radius)

    @classmethod
    def on_graph(cls, graph: Graph, metric: GraphMetric = "resistance") -> "SpaceRef":
        return cls(kind="graph", graph=graph, metric=metric)

    @property
    def ambient_dim(self) -> int:
        """Length of coordinate vectors (N for R^N, N+1 for the embedded S^N)"""
        if self.kind == "sphere":
            return self.dim + 1
        return self.dim

    def describe(self) -> str:
        if self.kind == "euclidean":
            return f"euclidean(dim={self.dim})"
        if self.kind == "sphere":
            return f"sphere(dim={self.dim}, radius={self.radius:g})"
        return f"graph(n={self.graph.n_vertices}, metric={self.metric})"


class Point(BaseModel):
    model_config = ConfigDict(frozen=True)

    coords: Optional[Tuple[float, ...]] = None
    vertex: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def _exactly_one(self):
        if (self.coords is None) == (self.vertex is None):
            raise ValueError("a point has either coords or a vertex index")
        return self

    @classmethod
    def at(cls, *coords: float) -> "Point":
        return cls(coords=tuple(float(c) for c in coords))

    @classmethod
    def vertex_of(cls, index: int) -> "Point":
        return cls(vertex=index)


# ==================== SIMULATION MODELS ====================

class RngSpec(BaseModel):
    """Counter-based stream: identical (seed, stream) gives bit-identical draws"""
    model_config = ConfigDict(frozen=True)

    seed: int = Field(0, ge=0, lt=2 ** 64)
    stream: int = Field(0, ge=0, lt=2 ** 64)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=(self.stream << 64) | self.seed))

    def child(self, index: int) -> "RngSpec":
        return RngSpec(seed=self.seed, stream=self.stream + index)


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    nx: int = Field(..., ge=1)
    ny: int = Field(..., ge=1)
    spacing: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _check_cap(self):
        cap = int(get_config().get_section("simulation").get("grid_cap", 10 ** 6))
        if self.nx * self.ny > cap:
            raise ValueError(f"grid {self.nx}x{self.ny} exceeds the configured cap of {cap} nodes")
        return self

    @property
    def n_nodes(self) -> int:
        return self.nx * self.ny

    def coords(self) -> np.ndarray:
        """Node coordinates, row-major: node index = iy * nx + ix"""
        iy, ix = np.divmod(np.arange(self.n_nodes), self.nx)
        return np.column_stack([ix, iy]).astype(float) * self.spacing


class RealizationEnsemble(BaseModel):
    """n_real realizations over a point set or a grid; values has shape (n_real, n_points)"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray
    binary: bool = True
    grid: Optional[GridSpec] = None
    points: Optional[np.ndarray] = None
    provenance: Dict[str, Any] = {}

    @model_validator(mode="after")
    def _check_layout(self):
        if self.values.ndim != 2:
            raise ValueError("ensemble values must be a (n_real, n_points) array")
        if self.grid is not None and self.values.shape[1] != self.grid.n_nodes:
            raise ValueError("ensemble width does not match the grid")
        if self.binary and not np.all((self.values == 0) | (self.values == 1)):
            raise ValueError("binary ensemble holds values outside {0, 1}")
        return self

    @property
    def n_real(self) -> int:
        return self.values.shape[0]

    @property
    def n_points(self) -> int:
        return self.values.shape[1]


# ==================== ESTIMATION MODELS ====================

class LagBins(BaseModel):
    centers: List[float]
    tolerance: float = Field(..., gt=0)
    direction: Literal["x", "y", "omnidirectional"] = "x"

    @model_validator(mode="after")
    def _check_bins(self):
        centers = np.asarray(self.centers, dtype=float)
        if centers.size == 0 or np.any(centers <= 0):
            raise ValueError("lag centers must be positive")
        steps = np.diff(centers)
        if np.any(steps <= 0):
            raise ValueError("lag centers must be increasing")
        if steps.size and self.tolerance > steps.min() / 2 + 1e-12:
            raise ValueError("lag bins overlap")
        return self

    @classmethod
    def regular(cls, n_lags: int, spacing: float = 1.0, direction: str = "x") -> "LagBins":
        return cls(centers=[spacing * (i + 1) for i in range(n_lags)],
                   tolerance=spacing / 2, direction=direction)


class CurvePoint(BaseModel):
    lag: float
    estimate: float
    pair_count: int = Field(..., gt=0)
    realization: int = -1


class ExperimentalCurve(BaseModel):
    alpha: float
    average: List[CurvePoint] = []
    per_realization: List[List[CurvePoint]] = []
    warnings: List[str] = []

    def lags(self) -> np.ndarray:
        return np.array([p.lag for p in self.average])

    def estimates(self) -> np.ndarray:
        return np.array([p.estimate for p in self.average])


# ==================== VALIDITY MODELS ====================

Verdict = Literal["pass", "fail", "skipped"]


class Configuration(BaseModel):
    """Candidate values g(x_k, x_l) on n >= 2 points"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    g: np.ndarray
    space: Optional[SpaceRef] = None
    points: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def _check_matrix(self):
        g = np.asarray(self.g, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] < 2:
            raise ValueError("a configuration needs a square matrix on at least 2 points")
        if not np.all(np.isfinite(g)):
            raise ValueError("configuration values must be finite")
        if not np.allclose(g, g.T, rtol=0, atol=1e-12):
            raise ValueError("configuration matrix is not symmetric")
        if np.any(g < -1e-12):
            raise ValueError("configuration values must be nonnegative")
        self.g = g
        return self

    @property
    def n(self) -> int:
        return self.g.shape[0]

    def subset(self, indices) -> "Configuration":
        indices = np.asarray(indices)
        return Configuration(
            g=self.g[np.ix_(indices, indices)],
            space=self.space,
            points=None if self.points is None else self.points[indices],
        )


class WeightVector(BaseModel):
    lambdas: Tuple[int, ...]

    @property
    def sigma(self) -> int:
        return int(sum(self.lambdas))

    @property
    def gap(self) -> int:
        from modules.enumeration import gap
        return gap(self.lambdas)


class CheckEntry(BaseModel):
    check: str
    name: str = ""
    verdict: Verdict
    sampled: bool = False
    margin: Optional[float] = None
    certificate: Optional[Dict[str, Any]] = None
    bounds: Dict[str, Any] = {}
    reason: Optional[str] = None

    @model_validator(mode="after")
    def _fail_needs_certificate(self):
        if self.verdict == "fail" and self.certificate is None:
            raise ValueError(f"failed check '{self.check}' has no certificate")
        return self


class CheckReport(BaseModel):
    profile: Literal["indicator", "madogram"] = "indicator"
    n_points: int
    entries: List[CheckEntry] = []

    def entry(self, check: str) -> CheckEntry:
        for item in self.entries:
            if item.check == check:
                return item
        raise KeyError(check)

    @property
    def passed(self) -> int:
        return sum(1 for e in self.entries if e.verdict == "pass")

    @property
    def failed(self) -> int:
        return sum(1 for e in self.entries if e.verdict == "fail")

    @property
    def skipped(self) -> int:
        return sum(1 for e in self.entries if e.verdict == "skipped")

    @property
    def has_failures(self) -> bool:
        return self.failed > 0

    def to_records(self) -> List[Dict[str, Any]]:
        return [
            {
                "check": e.check,
                "verdict": e.verdict + (" (sampled)" if e.sampled and e.verdict != "skipped" else ""),
                "margin": e.margin,
                "certificate": e.certificate,
                "bounds": e.bounds,
            }
            for e in self.entries
        ]


# ==================== EXCURSION MODELS ====================

class ExcursionQuery(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    rho: float
    lam: float = Field(0.0, alias="lambda")
    method: Literal["quadrature", "hermite", "tan_integral"] = "quadrature"
    n_terms: Optional[int] = Field(None, ge=1)
    tol: float = Field(1e-10, gt=0)

    @field_validator("rho")
    @classmethod
    def _check_rho(cls, value):
        if abs(value) > 1 + 1e-12:
            raise ValueError(f"|rho| must not exceed 1, got {value}")
        return float(np.clip(value, -1.0, 1.0))


class HermiteEval(BaseModel):
    degree: int = Field(..., ge=0)
    convention: Literal["physicists"] = "physicists"


# ==================== RUN CONFIG ====================

Command = Literal["eval", "check", "realize", "simulate", "estimate", "excursion",
                  "repro-fig2", "repro-fig3", "catalog"]


class PointsSpec(BaseModel):
    """Where the points of a run come from: explicit list, file, or random draw"""
    n: Optional[int] = Field(None, ge=1)
    coords: Optional[List[List[float]]] = None
    vertices: Optional[List[int]] = None
    file: Optional[str] = None
    box: float = Field(10.0, gt=0)


class RunConfig(BaseModel):
    command: Command
    model: Optional[str] = None
    model_file: Optional[str] = None
    points: Optional[PointsSpec] = None
    grid: Optional[GridSpec] = None
    seed: int = Field(0, ge=0)
    out: str = "out"
    workers: Optional[int] = Field(None, ge=1)
    options: Dict[str, Any] = {}
    timestamp: str = Field(default_factory=lambda: datetime.now().isoformat())
