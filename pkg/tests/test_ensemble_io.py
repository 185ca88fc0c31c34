import json

import numpy as np
import pytest

from models.data_models import GridSpec, RealizationEnsemble
from modules import ensemble_io
from utils.errors import InputError


def test_pgm_header_and_scaling(tmp_path):
    image = np.array([[0, 1, 1], [1, 0, 0]])
    path = ensemble_io.write_pgm(image, tmp_path / "a.pgm")
    raw = path.read_bytes()
    assert raw.startswith(b"P5\n3 2\n255\n")
    assert raw[len(b"P5\n3 2\n255\n"):] == bytes([0, 255, 255, 255, 0, 0])
    np.testing.assert_array_equal(ensemble_io.read_pgm(path), image * 255)


def test_pgm_comments_are_skipped(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made elsewhere\n2 1\n255\n" + bytes([7, 9]))
    np.testing.assert_array_equal(ensemble_io.read_pgm(path), [[7, 9]])


def test_pgm_rejects_other_formats(tmp_path):
    path = tmp_path / "ascii.pgm"
    path.write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(InputError, match="binary PGM"):
        ensemble_io.read_pgm(path)


def test_grid_ensemble_files(tmp_path):
    values = np.array([[0, 1, 0, 1, 1, 0], [1, 1, 1, 0, 0, 0]], dtype=np.uint8)
    ens = RealizationEnsemble(values=values, grid=GridSpec(nx=3, ny=2))
    paths = ensemble_io.write_ensemble(ens, tmp_path)
    assert [p.name for p in paths] == ["realization_0000.pgm", "realization_0001.pgm"]

    back = ensemble_io.read_grid_ensemble(list(reversed(paths)), spacing=2.0)
    np.testing.assert_array_equal(back.values, values)
    assert back.grid.spacing == 2.0


def test_grid_sizes_must_match(tmp_path):
    a = ensemble_io.write_pgm(np.zeros((2, 2)), tmp_path / "a.pgm")
    b = ensemble_io.write_pgm(np.zeros((2, 3)), tmp_path / "b.pgm")
    with pytest.raises(InputError, match="size"):
        ensemble_io.read_grid_ensemble([a, b])


def test_point_ensemble_csv(tmp_path):
    ens = RealizationEnsemble(values=np.array([[0, 1, 1], [1, 0, 1]], dtype=np.uint8),
                              points=np.array([[0.0], [0.5], [2.0]]))
    [path] = ensemble_io.write_ensemble(ens, tmp_path)
    assert path.name == "realizations.csv"
    lines = path.read_text().splitlines()
    assert lines[0] == "point_index,realization,value"
    assert lines[1:3] == ["0,0,0", "1,0,1"]

    back = ensemble_io.read_points_csv(path, points=ens.points)
    np.testing.assert_array_equal(back.values, ens.values)
    np.testing.assert_array_equal(back.points, ens.points)


def test_real_valued_csv(tmp_path):
    ens = RealizationEnsemble(values=np.array([[0.25, -1.5]]), binary=False, points=np.zeros((2, 1)))
    [path] = ensemble_io.write_ensemble(ens, tmp_path)
    assert path.read_text().splitlines()[2] == "1,0,-1.5"
    back = ensemble_io.read_points_csv(path, binary=False)
    np.testing.assert_allclose(back.values, [[0.25, -1.5]])


def test_points_csv_errors(tmp_path):
    bad_header = tmp_path / "bad.csv"
    bad_header.write_text("index,real,value\n0,0,1\n")
    with pytest.raises(InputError, match="header"):
        ensemble_io.read_points_csv(bad_header)

    missing = tmp_path / "missing.csv"
    missing.write_text("point_index,realization,value\n0,0,1\n1,1,0\n")
    with pytest.raises(InputError, match="missing"):
        ensemble_io.read_points_csv(missing)

    garbled = tmp_path / "garbled.csv"
    garbled.write_text("point_index,realization,value\n0,x,1\n")
    with pytest.raises(InputError, match="line 2"):
        ensemble_io.read_points_csv(garbled)


def test_provenance_sidecar(tmp_path):
    path = ensemble_io.write_provenance(tmp_path, {"seed": np.int64(3), "points": np.eye(2), "out": tmp_path})
    record = json.loads(path.read_text())
    assert record["seed"] == 3
    assert record["points"] == [[1.0, 0.0], [0.0, 1.0]]
    assert record["out"] == str(tmp_path)
    assert "timestamp" in record
    assert list(record) == sorted(record)
