"""
ensemble_io.py - Ensemble persistence

- grids: one binary PGM (P5) per realization, 0 -> 0 and 1 -> 255, row iy = 0 first
- point sets: CSV `point_index,realization,value`
- provenance.json sidecar echoing every resolved parameter plus a timestamp
"""

import csv
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from config.config_loader import get_config
from models.data_models import GridSpec, RealizationEnsemble
from utils.errors import InputError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def write_pgm(image: np.ndarray, path: PathLike, maxval: int = 255) -> Path:
    """Binary greyscale image; a {0, 1} array is scaled to {0, maxval}"""
    image = np.asarray(image)
    if image.ndim != 2:
        raise InputError("PGM images are 2D arrays")
    if np.all((image == 0) | (image == 1)):
        image = image * maxval
    data = np.clip(np.rint(image), 0, maxval).astype(np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n{maxval}\n".encode("ascii"))
        fh.write(data.tobytes())
    return path


def read_pgm(path: PathLike) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    if tokens[0] != b"P5":
        raise InputError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise InputError(f"{path}: 16-bit PGM not supported")
    pixels = np.frombuffer(raw[pos + 1:pos + 1 + width * height], dtype=np.uint8)
    if pixels.size != width * height:
        raise InputError(f"{path}: truncated image data")
    return pixels.reshape(height, width)


def write_ensemble(ens: RealizationEnsemble, out_dir: PathLike, prefix: str = "realization") -> List[Path]:
    """PGM files for binary grid ensembles, one CSV otherwise"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if ens.grid is not None and ens.binary:
        width = max(4, len(str(ens.n_real - 1)))
        paths = []
        for r in range(ens.n_real):
            image = ens.values[r].reshape(ens.grid.ny, ens.grid.nx)
            paths.append(write_pgm(image, out_dir / f"{prefix}_{r:0{width}d}.pgm"))
        logger.info(f"[IO] Wrote {len(paths)} PGM realizations to {out_dir}")
        return paths

    path = out_dir / f"{prefix}s.csv"
    fmt = get_config().get_section("output").get("float_format", "%.10g")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["point_index", "realization", "value"])
        for r in range(ens.n_real):
            for i, v in enumerate(ens.values[r]):
                writer.writerow([i, r, int(v) if ens.binary else fmt % v])
    logger.info(f"[IO] Wrote {ens.n_real} x {ens.n_points} values to {path}")
    return [path]


def read_points_csv(path: PathLike, binary: bool = True, points: Optional[np.ndarray] = None) -> RealizationEnsemble:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["point_index", "realization", "value"]:
            raise InputError(f"{path}: expected header point_index,realization,value")
        for line, row in enumerate(reader, start=2):
            try:
                rows.append((int(row["point_index"]), int(row["realization"]), float(row["value"])))
            except (TypeError, ValueError) as e:
                raise InputError(f"{path} line {line}: {e}") from e
    if not rows:
        raise InputError(f"{path}: no data rows")
    n_points = max(r[0] for r in rows) + 1
    n_real = max(r[1] for r in rows) + 1
    values = np.full((n_real, n_points), np.nan)
    for i, r, v in rows:
        values[r, i] = v
    if np.isnan(values).any():
        raise InputError(f"{path}: missing (point, realization) entries")
    if binary:
        values = values.astype(np.uint8)
    if points is None:
        points = np.arange(n_points, dtype=float).reshape(-1, 1)
    return RealizationEnsemble(values=values, binary=binary, points=points)


def read_grid_ensemble(paths: List[PathLike], spacing: float = 1.0) -> RealizationEnsemble:
    images = [read_pgm(p) for p in sorted(paths, key=str)]
    if not images:
        raise InputError("no PGM files given")
    ny, nx = images[0].shape
    if any(img.shape != (ny, nx) for img in images):
        raise InputError("PGM realizations differ in size")
    values = (np.vstack([img.reshape(1, -1) for img in images]) > 0).astype(np.uint8)
    return RealizationEnsemble(values=values, binary=True, grid=GridSpec(nx=nx, ny=ny, spacing=spacing))


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "model_dump"):
        return _jsonable(value.model_dump())
    return value


def write_provenance(out_dir: PathLike, provenance: Dict[str, Any], filename: str = "provenance.json") -> Path:
    """Sidecar with the resolved parameters; only `timestamp` varies between identical runs"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    record = {**_jsonable(provenance), "timestamp": datetime.now().isoformat()}
    path = out_dir / filename
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
    return path
