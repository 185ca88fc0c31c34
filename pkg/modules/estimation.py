"""
estimation.py - Experimental variograms of order alpha over realization ensembles

gamma_alpha(h) = 1/2 mean |Z(x) - Z(y)|^alpha over the pairs of a lag bin.
alpha = 2 is the variogram, alpha = 1 the madogram; on binary ensembles every
alpha gives the indicator variogram.
"""

import csv
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.spatial.distance import pdist, squareform

from config.config_loader import get_config
from models.data_models import CurvePoint, ExperimentalCurve, LagBins, RealizationEnsemble, SpaceRef
from modules import spaces
from utils.errors import InputError

logger = logging.getLogger(__name__)

_AXES = {"x": 0, "y": 1}


def _grid_pairs(ens: RealizationEnsemble, bins: LagBins, alpha: float, warnings: List[str]):
    grid = ens.grid
    V = ens.values.astype(float).reshape(ens.n_real, grid.ny, grid.nx)
    if bins.direction == "omnidirectional":
        raise InputError("grid ensembles are estimated along an axis (direction 'x' or 'y')")
    if bins.direction == "y":
        V = V.transpose(0, 2, 1)
    length = V.shape[2]

    out = []
    for center in bins.centers:
        lags = [k for k in range(1, length) if abs(k * grid.spacing - center) <= bins.tolerance + 1e-12]
        if not lags:
            warnings.append(f"lag {center:g}: no grid pairs, bin omitted")
            continue
        sums = np.zeros(ens.n_real)
        count = 0
        for k in lags:
            diff = np.abs(V[:, :, k:] - V[:, :, :-k]) ** alpha
            sums += diff.sum(axis=(1, 2))
            count += diff.shape[1] * diff.shape[2]
        out.append((center, sums / (2 * count), count))
    return out


def _point_pairs(ens: RealizationEnsemble, bins: LagBins, alpha: float, warnings: List[str],
                 space: Optional[SpaceRef]):
    X = np.asarray(ens.points)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if space is not None:
        D = spaces.pairwise_distances(space, X)
    elif bins.direction == "omnidirectional":
        D = squareform(pdist(X))
    else:
        axis = _AXES[bins.direction]
        if axis >= X.shape[1]:
            raise InputError(f"direction '{bins.direction}' needs {axis + 1}-dimensional points")
        others = np.delete(X, axis, axis=1)
        aligned = squareform(pdist(others)) <= 1e-12 if others.shape[1] else np.ones((len(X), len(X)), bool)
        D = np.where(aligned, np.abs(X[:, axis][:, None] - X[:, axis][None, :]), np.inf)

    iu, ju = np.triu_indices(len(X), k=1)
    d = D[iu, ju]
    V = ens.values.astype(float)
    out = []
    for center in bins.centers:
        mask = np.abs(d - center) <= bins.tolerance
        count = int(mask.sum())
        if count == 0:
            warnings.append(f"lag {center:g}: no point pairs, bin omitted")
            continue
        diff = np.abs(V[:, iu[mask]] - V[:, ju[mask]]) ** alpha
        out.append((center, diff.sum(axis=1) / (2 * count), count))
    return out


def experimental_variogram(ens: RealizationEnsemble, bins: LagBins, alpha: float = 2.0,
                           space: Optional[SpaceRef] = None) -> ExperimentalCurve:
    """Per-realization and ensemble-average curves; empty bins are omitted with a warning

    Grids use exact-axis pairs; point sets use |d - center| <= tolerance with
    the distance of `space` (Euclidean when omitted).
    """
    if not alpha > 0:
        raise InputError(f"alpha must be positive, got {alpha}")
    if ens.n_real == 0:
        raise InputError("empty ensemble")
    warnings: List[str] = []
    if ens.grid is not None:
        rows = _grid_pairs(ens, bins, alpha, warnings)
    elif ens.points is not None:
        rows = _point_pairs(ens, bins, alpha, warnings, space)
    else:
        raise InputError("ensemble has neither a grid nor a point layout")

    for message in warnings:
        logger.warning(f"[ESTIMATE] {message}")

    per_realization = [
        [CurvePoint(lag=center, estimate=float(est[r]), pair_count=count, realization=r)
         for center, est, count in rows]
        for r in range(ens.n_real)
    ]
    # every realization shares the pair set, so the count-weighted average is the plain mean
    average = [CurvePoint(lag=center, estimate=float(est.mean()), pair_count=count * ens.n_real)
               for center, est, count in rows]
    logger.info(f"[ESTIMATE] alpha={alpha:g}: {len(average)} lags over {ens.n_real} realizations")
    return ExperimentalCurve(alpha=alpha, average=average, per_realization=per_realization, warnings=warnings)


def near_origin_exponent(curve: ExperimentalCurve, n_lags: Optional[int] = None) -> float:
    """Least-squares slope of log(estimate) against log(lag) over the first n_lags bins"""
    if n_lags is None:
        n_lags = int(get_config().get_section("estimation").get("near_origin_lags", 4))
    points = curve.average[:n_lags]
    if len(points) < 2:
        raise InputError(f"need at least 2 lags for a slope, got {len(points)}")
    lags = np.array([p.lag for p in points])
    est = np.array([p.estimate for p in points])
    if np.any(est <= 0):
        raise InputError("zero estimate among the near-origin lags, log undefined")
    slope, _ = np.polyfit(np.log(lags), np.log(est), 1)
    return float(slope)


def default_bins(ens: RealizationEnsemble, n_lags: Optional[int] = None, direction: Optional[str] = None) -> LagBins:
    """Regular bins at multiples of the grid spacing (or of 1 for point sets)"""
    if direction is None:
        direction = "x" if ens.grid is not None else "omnidirectional"
    if n_lags is None:
        n_lags = int(get_config().get_section("estimation").get("n_lags", 20))
    spacing = ens.grid.spacing if ens.grid is not None else 1.0
    if ens.grid is not None:
        length = ens.grid.nx if direction == "x" else ens.grid.ny
        n_lags = min(n_lags, length - 1)
    return LagBins.regular(n_lags, spacing, direction)


def _records(curve: ExperimentalCurve) -> List[Tuple[float, float, int, int]]:
    rows = [(p.lag, p.estimate, p.pair_count, p.realization) for points in curve.per_realization for p in points]
    rows += [(p.lag, p.estimate, p.pair_count, -1) for p in curve.average]
    return rows


def write_curve_csv(curve: ExperimentalCurve, path: Union[str, Path], include_realizations: bool = True) -> Path:
    """lag,estimate,pair_count,realization with realization=-1 for the ensemble average"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fmt = get_config().get_section("output").get("float_format", "%.10g")
    rows = _records(curve) if include_realizations else [(p.lag, p.estimate, p.pair_count, -1) for p in curve.average]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["lag", "estimate", "pair_count", "realization"])
        for lag, est, count, real in rows:
            writer.writerow([fmt % lag, fmt % est, count, real])
    logger.debug(f"[ESTIMATE] Wrote {len(rows)} curve rows to {path}")
    return path
