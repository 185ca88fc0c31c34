import csv
import json
import logging

import pytest

from main import EXIT_ERROR, EXIT_OK, EXIT_VIOLATIONS, main

EXPONENTIAL_LINE = "family=exponential;params.a=1;host=euclidean(dim=1)"
GAUSSIAN_LINE = "family=sill_scaled;host=euclidean(dim=1);correlation{;family=gaussian;params.scale=1;}"
EXPONENTIAL_PLANE = "family=exponential;params.a=0.5;host=euclidean(dim=2)"


@pytest.fixture(autouse=True)
def restore_logging():
    """main() installs console and run.log handlers on the root logger"""
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield
    for handler in list(root.handlers):
        if handler not in handlers:
            root.removeHandler(handler)
            handler.close()
    root.setLevel(level)


@pytest.fixture
def line_points(tmp_path):
    path = tmp_path / "points.txt"
    path.write_text("# x\n0\n0.1\n0.2\n")
    return path


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_catalog(tmp_path, capsys):
    assert main(["catalog", "--out", str(tmp_path / "cat")]) == EXIT_OK
    assert "sphere_exponential" in capsys.readouterr().out
    assert not (tmp_path / "cat" / "provenance.json").exists()


def test_eval_writes_matrix_and_provenance(tmp_path, line_points):
    out = tmp_path / "eval"
    code = main(["eval", "--model", EXPONENTIAL_LINE, "--points-file", str(line_points), "--out", str(out)])
    assert code == EXIT_OK
    rows = read_csv(out / "gamma.csv")
    assert rows[0] == ["k", "l", "value"]
    assert len(rows) == 1 + 9
    assert rows[1] == ["0", "0", "0"]

    provenance = json.loads((out / "provenance.json").read_text())
    assert provenance["command"] == "eval"
    assert provenance["resolved"]["n_points"] == 3
    assert (out / "run.log").exists()


def test_check_valid_model(tmp_path):
    out = tmp_path / "check"
    code = main(["check", "--model", EXPONENTIAL_LINE, "--n-points", "6", "--seed", "3", "--out", str(out)])
    assert code == EXIT_OK
    report = json.loads((out / "check_report.json").read_text())
    assert report["status"] == "success"
    assert report["n_points"] == 6


def test_check_reports_violations(tmp_path, line_points):
    out = tmp_path / "gauss"
    code = main(["check", "--model", GAUSSIAN_LINE, "--points-file", str(line_points), "--out", str(out)])
    assert code == EXIT_VIOLATIONS
    report = json.loads((out / "check_report.json").read_text())
    verdicts = {c["check"]: c["verdict"] for c in report["checks"]}
    assert verdicts["polygonal"] == "fail"
    assert verdicts["negative_type"] == "pass"


def test_bad_model_is_an_execution_error(tmp_path):
    code = main(["eval", "--model", "family=nonsense;host=euclidean(dim=1)", "--out", str(tmp_path)])
    assert code == EXIT_ERROR


def test_missing_model(tmp_path):
    assert main(["check", "--out", str(tmp_path)]) == EXIT_ERROR


def test_realize_point_set(tmp_path):
    out = tmp_path / "realize"
    code = main(["realize", "--model", EXPONENTIAL_LINE, "--n-points", "5", "--n-real", "4", "--out", str(out)])
    assert code == EXIT_OK
    rows = read_csv(out / "realizations.csv")
    assert len(rows) == 1 + 5 * 4
    assert {r[2] for r in rows[1:]} <= {"0", "1"}


def test_simulate_then_estimate(tmp_path):
    sim = tmp_path / "sim"
    code = main(["simulate", "--model", EXPONENTIAL_PLANE, "--nx", "10", "--ny", "8", "--n-real", "3",
                 "--n-lags", "4", "--gnuplot", "--out", str(sim)])
    assert code == EXIT_OK
    assert sorted(p.name for p in sim.glob("*.pgm")) == [f"realization_000{r}.pgm" for r in range(3)]
    assert read_csv(sim / "model.csv")[0] == ["lag", "value"]
    assert (sim / "variogram.gp").exists()
    summary = json.loads((sim / "provenance.json").read_text())["summary"]
    assert 0.0 <= summary["realization_mean_min"] <= summary["realization_mean_max"] <= 1.0

    est = tmp_path / "est"
    code = main(["estimate", "--input", str(sim), "--alpha", "1", "--n-lags", "3", "--out", str(est)])
    assert code == EXIT_OK
    rows = read_csv(est / "variogram.csv")
    assert rows[0] == ["lag", "estimate", "pair_count", "realization"]
    assert [r[3] for r in rows[1:]].count("-1") == 3


def test_estimate_needs_input(tmp_path):
    assert main(["estimate", "--out", str(tmp_path)]) == EXIT_ERROR


def test_excursion_from_run_config(tmp_path):
    run_config = tmp_path / "run.json"
    run_config.write_text(json.dumps({"options": {"rhos": [0.5], "lambdas": [0.0, 1.0]}}))
    out = tmp_path / "exc"
    assert main(["excursion", "--run-config", str(run_config), "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "excursion.csv")
    assert len(rows) == 1 + 2 * 3
    integral = read_csv(out / "threshold_integral.csv")
    assert integral[0] == ["rho", "integral", "expected"]
    assert abs(float(integral[1][1]) - float(integral[1][2])) < 1e-6


def test_run_config_json_error_has_line(tmp_path):
    run_config = tmp_path / "run.json"
    run_config.write_text('{\n  "seed": 1,\n  oops\n}')
    assert main(["eval", "--run-config", str(run_config), "--out", str(tmp_path)]) == EXIT_ERROR


def test_repro_fig3_single_image(tmp_path):
    out = tmp_path / "fig3"
    code = main(["repro-fig3", "--t-values", "10", "--clt-terms", "50", "--out", str(out)])
    assert code == EXIT_OK
    image = out / "t10" / "realization_0000.pgm"
    assert image.read_bytes().startswith(b"P5\n240 120\n255\n")


def test_repro_fig2_unknown_model(tmp_path):
    assert main(["repro-fig2", "--model", "wavy", "--out", str(tmp_path)]) == EXIT_ERROR


def data_files(out):
    return {p.name: p.read_bytes() for p in sorted(out.iterdir()) if p.suffix in (".csv", ".pgm")}


def provenance_without_timestamp(out):
    record = json.loads((out / "provenance.json").read_text())
    record.pop("timestamp")
    return record


def test_repeated_runs_are_byte_identical(tmp_path):
    sim, est = tmp_path / "sim", tmp_path / "est"
    simulate = ["simulate", "--model", EXPONENTIAL_PLANE, "--nx", "12", "--ny", "9", "--n-real", "3",
                "--seed", "5", "--n-lags", "4", "--out", str(sim)]
    estimate = ["estimate", "--input", str(sim), "--alpha", "1", "--n-lags", "4", "--out", str(est)]

    assert main(simulate) == EXIT_OK
    assert main(estimate) == EXIT_OK
    first_sim, first_est = data_files(sim), data_files(est)
    first_provenance = provenance_without_timestamp(sim)
    assert {"model.csv", "variogram.csv", "realization_0000.pgm"} <= set(first_sim)

    assert main(simulate) == EXIT_OK
    assert main(estimate) == EXIT_OK
    assert data_files(sim) == first_sim
    assert data_files(est) == first_est
    assert provenance_without_timestamp(sim) == first_provenance


def test_worker_count_does_not_change_outputs(tmp_path):
    outputs = []
    for workers in ("1", "3"):
        out = tmp_path / f"w{workers}"
        code = main(["simulate", "--model", EXPONENTIAL_PLANE, "--nx", "10", "--ny", "10", "--n-real", "4",
                     "--seed", "2", "--n-lags", "3", "--workers", workers, "--out", str(out)])
        assert code == EXIT_OK
        outputs.append(data_files(out))
    assert outputs[0] == outputs[1]
