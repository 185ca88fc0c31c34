#!/usr/bin/env python3
"""
Indicator Variogram Toolkit - Main Application
Run: python3 main.py check --model "family=exponential;params.a=1;host=euclidean(dim=2)" --n-points 50
Or:  python3 main.py repro-fig2 --model cubic --out out/fig2

Exit codes: 0 success, 1 execution error, 2 validation failures found.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

# Setup path
sys.path.insert(0, str(Path(__file__).parent))

from config.config_loader import ConfigLoader
from models.data_models import GridSpec, PointsSpec, RngSpec, RunConfig, SpaceRef
from modules import ensemble_io, estimation, excursion, simulation, spaces
from modules.catalog import catalog_listing
from modules.model_spec_parser import load_model_spec, parse_model_spec
from modules.report_builder import ReportBuilder
from modules.validation_engine import ValidationEngine, configuration_of
from modules.variogram_models import VariogramModel, gaussian_mixture_of
from utils.errors import ConfigError, IndivarError, InputError
from utils.logger_config import setup_logging
from utils.workers import resolve_workers

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_VIOLATIONS = 2

# stream offsets keep point draws and per-figure ensembles apart from realization streams
POINTS_STREAM = 1 << 62
FIGURE_STREAM = 1 << 40


class IndicatorVariogramService:
    """One method per command; each writes its outputs plus provenance.json"""

    def __init__(self, run: RunConfig):
        self.run = run
        self.config = ConfigLoader().load()
        self.out = Path(run.out)
        self.workers = resolve_workers(run.workers)
        self.validation_engine = ValidationEngine()
        self.report_builder = ReportBuilder()

    def execute(self) -> int:
        handlers = {
            "eval": self.eval_model,
            "check": self.check_model,
            "realize": self.realize,
            "simulate": self.simulate_grid,
            "estimate": self.estimate,
            "excursion": self.excursion_grid,
            "repro-fig2": self.repro_fig2,
            "repro-fig3": self.repro_fig3,
            "catalog": self.catalog,
        }
        logger.info(f"[RUN] {self.run.command} (seed={self.run.seed}, workers={self.workers}, out={self.out})")
        result = handlers[self.run.command]()
        if self.run.command != "catalog":
            ensemble_io.write_provenance(self.out, {
                "command": self.run.command,
                "run_config": self.run.model_dump(exclude={"timestamp"}),
                "workers": self.workers,
                "config_file": str(ConfigLoader._path),
                "resolved": result.get("resolved", {}),
                "summary": result.get("summary", {}),
            })
        return result.get("exit_code", EXIT_OK)

    # ---------- inputs ----------

    def _model(self) -> VariogramModel:
        if self.run.model_file:
            return load_model_spec(self.run.model_file)
        if self.run.model:
            return parse_model_spec(self.run.model.replace(";", "\n"))
        raise ConfigError("no model given (use --model or --model-file)")

    def _points(self, space: SpaceRef, default_n: int = 10) -> np.ndarray:
        spec = self.run.points or PointsSpec(n=default_n)
        if spec.coords is not None:
            return spaces.as_coordinates(space, spec.coords)
        if spec.vertices is not None:
            return spaces.as_coordinates(space, spec.vertices)
        if spec.file is not None:
            path = Path(spec.file)
            if not path.exists():
                raise InputError(f"points file not found: {path}")
            text = path.read_text(encoding="utf-8").replace(",", " ")
            data = np.loadtxt(text.splitlines(), comments="#", ndmin=2)
            if space.kind == "graph":
                data = data.reshape(-1)
            return spaces.as_coordinates(space, data)
        rng = RngSpec(seed=self.run.seed, stream=POINTS_STREAM).generator()
        return spaces.random_points(space, spec.n or default_n, rng, box=spec.box)

    def _option(self, name: str, default: Any = None) -> Any:
        value = self.run.options.get(name)
        return default if value is None else value

    def _gnuplot(self, script: str, path: Path) -> None:
        if self._option("gnuplot", False):
            self.report_builder.write_script(script, path)

    # ---------- commands ----------

    def eval_model(self) -> Dict[str, Any]:
        model = self._model()
        X = self._points(model.host)
        G = model.matrix(X)
        self.out.mkdir(parents=True, exist_ok=True)
        fmt = self.config["output"]["float_format"]
        with open(self.out / "gamma.csv", "w", encoding="utf-8") as fh:
            fh.write("k,l,value\n")
            for k in range(len(G)):
                for l in range(len(G)):
                    fh.write(f"{k},{l},{fmt % G[k, l]}\n")
        print(np.array2string(G, precision=6, max_line_width=160))
        return {"resolved": {"model": model.to_dict(), "n_points": len(G)},
                "summary": {"max": float(G.max()), "certified": model.certified}}

    def check_model(self) -> Dict[str, Any]:
        model = self._model()
        X = self._points(model.host, default_n=50)
        cfg = configuration_of(model, X)
        profile = self._option("profile", "indicator")
        report = self.validation_engine.check_configuration(cfg, profile=profile, seed=self.run.seed,
                                                           workers=self.workers)
        document = self.report_builder.build_check_response(
            report, model=model.to_dict(), points={"n": cfg.n, "coords": np.asarray(X).tolist()}
        )
        self.report_builder.write_json(document, self.out / "check_report.json")
        print(self.report_builder.format_table(report))
        if not model.certified:
            logger.warning(f"[RUN] {model.family} is not a certified indicator variogram family")
        return {
            "resolved": {"model": model.to_dict(), "profile": profile, "n_points": cfg.n},
            "summary": document["summary"],
            "exit_code": EXIT_VIOLATIONS if report.has_failures else EXIT_OK,
        }

    def realize(self) -> Dict[str, Any]:
        """Median-indicator mixtures, excursion sets, sphere exponential and Poisson products"""
        model = self._model()
        X = self._points(model.host)
        n_real = int(self._option("n_real", self.config["simulation"]["n_real"]))
        rng = RngSpec(seed=self.run.seed)
        threshold = self._option("threshold")
        p = model.params

        if threshold is not None:
            if model.family != "median_indicator":
                raise ConfigError("--threshold needs a median_indicator model (its correlation is used)")
            ens = simulation.simulate_excursion(model.correlation, float(threshold), X, n_real, rng, self.workers)
        elif model.family == "sphere_exponential" and model.host.kind == "sphere" and p["varpi"] == 1.0:
            ens = simulation.simulate_sphere_exponential(p["t"] * model.host.radius, X, n_real, rng, Q=self._option("clt_terms"),
                                                         radius=model.host.radius, workers=self.workers)
        elif model.family == "exp_comp" and p["varpi"] == 1.0:
            # the +-1 factors have covariance 1 - 4 g
            ens = simulation.simulate_poisson_product(model.operands[0], p["t"] / 4, X, n_real, rng, self.workers)
        else:
            ens = simulation.simulate_median_indicator(gaussian_mixture_of(model), X, n_real, rng, self.workers)

        ensemble_io.write_ensemble(ens, self.out)
        mean = float(ens.values.mean())
        return {"resolved": {"model": model.to_dict(), "n_real": n_real, "threshold": threshold,
                             "ensemble": ens.provenance},
                "summary": {"mean": mean, "n_points": ens.n_points}}

    def _grid(self) -> GridSpec:
        if self.run.grid is not None:
            return self.run.grid
        fig2 = self.config["figures"]["fig2"]
        return GridSpec(nx=fig2["nx"], ny=fig2["ny"], spacing=fig2["spacing"])

    def _sis(self, model: VariogramModel, grid: GridSpec, n_real: int, out: Path, rng: RngSpec,
             n_lags: int, title: str) -> Dict[str, Any]:
        ens = simulation.sequential_indicator_grid(
            model, grid, n_real, rng,
            max_data=self._option("max_data"), radius=self._option("radius"), mean=self._option("mean"),
            workers=self.workers,
        )
        ensemble_io.write_ensemble(ens, out)
        bins = estimation.default_bins(ens, n_lags, "x")
        curve = estimation.experimental_variogram(ens, bins, alpha=2.0)
        estimation.write_curve_csv(curve, out / "variogram.csv")

        lags = np.array(bins.centers)
        fmt = self.config["output"]["float_format"]
        with open(out / "model.csv", "w", encoding="utf-8") as fh:
            fh.write("lag,value\n")
            for h, g in zip(lags, model.from_distance(lags)):
                fh.write(f"{fmt % h},{fmt % g}\n")
        self._gnuplot(self.report_builder.gnuplot_curve("variogram.csv", title, "model.csv"), out / "variogram.gp")

        try:
            exponent = estimation.near_origin_exponent(curve)
        except InputError as e:
            logger.warning(f"[SIS] Near-origin exponent unavailable: {e}")
            exponent = None
        means = ens.values.mean(axis=1)
        summary = {
            "near_origin_exponent": exponent,
            "realization_mean_min": float(means.min()),
            "realization_mean_max": float(means.max()),
            "clamped_probabilities": ens.provenance["clamped_probabilities"],
        }
        logger.info(f"[SIS] {title}: near-origin exponent {exponent}, "
                    f"realization means in [{summary['realization_mean_min']:.3f}, {summary['realization_mean_max']:.3f}]")
        return summary

    def simulate_grid(self) -> Dict[str, Any]:
        model = self._model()
        grid = self._grid()
        n_real = int(self._option("n_real", self.config["simulation"]["n_real"]))
        n_lags = int(self._option("n_lags", self.config["estimation"]["n_lags"]))
        summary = self._sis(model, grid, n_real, self.out, RngSpec(seed=self.run.seed), n_lags, model.family)
        return {"resolved": {"model": model.to_dict(), "grid": grid.model_dump(), "n_real": n_real,
                             "max_data": self._option("max_data", self.config["simulation"]["sis_max_data"]),
                             "radius": self._option("radius", self.config["simulation"]["sis_radius"]),
                             "mean": self._option("mean", self.config["simulation"]["sis_mean"])},
                "summary": summary}

    def estimate(self) -> Dict[str, Any]:
        source = self._option("input")
        if source is None:
            raise ConfigError("estimate needs --input (a directory of PGM files or a points CSV)")
        source = Path(source)
        if source.is_dir():
            spacing = self.run.grid.spacing if self.run.grid is not None else 1.0
            ens = ensemble_io.read_grid_ensemble(sorted(source.glob("*.pgm")), spacing=spacing)
        else:
            points = None
            if self.run.points is not None and self.run.points.file is not None:
                points = np.loadtxt(Path(self.run.points.file).read_text(encoding="utf-8").replace(",", " ").splitlines(),
                                    comments="#", ndmin=2)
            ens = ensemble_io.read_points_csv(source, binary=bool(self._option("binary", True)), points=points)
        alpha = float(self._option("alpha", 2.0))
        bins = estimation.default_bins(ens, self._option("n_lags"), self._option("direction"))
        curve = estimation.experimental_variogram(ens, bins, alpha=alpha)
        estimation.write_curve_csv(curve, self.out / "variogram.csv")
        self._gnuplot(self.report_builder.gnuplot_curve("variogram.csv", f"order {alpha:g}"), self.out / "variogram.gp")
        summary = self.report_builder.build_curve_summary(curve, input=str(source))
        return {"resolved": {"alpha": alpha, "bins": bins.model_dump()}, "summary": summary}

    def excursion_grid(self) -> Dict[str, Any]:
        cfg = self.config["excursion"]
        rhos = self._option("rhos", cfg["rho_grid"])
        lambdas = self._option("lambdas", cfg["lambda_grid"])
        methods = self._option("methods", cfg["methods"])
        rows = excursion.g_lambda_grid(rhos, lambdas, methods, tol=cfg["tol"])
        excursion.write_grid_csv(rows, self.out / "excursion.csv")
        self._gnuplot(self.report_builder.gnuplot_excursion("excursion.csv", methods), self.out / "excursion.gp")

        by_point: Dict[tuple, List[float]] = {}
        for row in rows:
            by_point.setdefault((row["rho"], row["lambda"]), []).append(row["value"])
        spread = max(max(v) - min(v) for v in by_point.values())
        fmt = self.config["output"]["float_format"]
        integrals = []
        with open(self.out / "threshold_integral.csv", "w", encoding="utf-8") as fh:
            fh.write("rho,integral,expected\n")
            for rho in rhos:
                value = excursion.integrate_over_threshold(rho)
                expected = float(np.sqrt((1 - rho) / np.pi))
                integrals.append(abs(value - expected))
                fh.write(f"{fmt % rho},{fmt % value},{fmt % expected}\n")
        summary = {"method_spread": spread, "max_integral_error": max(integrals)}
        logger.info(f"[EXCURSION] Method spread {spread:.2e}, threshold-integral error {max(integrals):.2e}")
        return {"resolved": {"rhos": rhos, "lambdas": lambdas, "methods": methods, "tol": cfg["tol"]},
                "summary": summary}

    def repro_fig2(self) -> Dict[str, Any]:
        fig2 = self.config["figures"]["fig2"]
        grid = self.run.grid or GridSpec(nx=fig2["nx"], ny=fig2["ny"], spacing=fig2["spacing"])
        n_real = int(self._option("n_real", fig2["n_real"]))
        names = sorted(fig2["models"])
        if self.run.model:
            if self.run.model not in fig2["models"]:
                raise ConfigError(f"unknown repro-fig2 model '{self.run.model}'; known: {', '.join(names)}")
            names = [self.run.model]

        summaries = {}
        for name in names:
            model = parse_model_spec(fig2["models"][name])
            index = sorted(fig2["models"]).index(name)
            rng = RngSpec(seed=self.run.seed, stream=(index + 1) * FIGURE_STREAM)
            summaries[name] = self._sis(model, grid, n_real, self.out / name, rng, fig2["n_lags"], name)
        return {"resolved": {"grid": grid.model_dump(), "n_real": n_real, "models": names},
                "summary": summaries}

    def repro_fig3(self) -> Dict[str, Any]:
        fig3 = self.config["figures"]["fig3"]
        t_values = self._option("t_values", fig3["t_values"])
        n_real = int(self._option("n_real", fig3["n_real"]))
        Q = int(self._option("clt_terms", fig3["clt_terms"]))
        points = spaces.sphere_grid(fig3["nlon"], fig3["nlat"])
        summary = {}
        for index, t in enumerate(t_values):
            rng = RngSpec(seed=self.run.seed, stream=(index + 1) * FIGURE_STREAM)
            ens = simulation.simulate_sphere_exponential(float(t), points, n_real, rng, Q=Q, workers=self.workers)
            out = self.out / f"t{t:g}"
            for r in range(ens.n_real):
                image = ens.values[r].reshape(fig3["nlat"], fig3["nlon"])
                ensemble_io.write_pgm(image, out / f"realization_{r:04d}.pgm")
            self._gnuplot(self.report_builder.gnuplot_image(f"t{t:g}/realization_0000.pgm", f"t = {t:g}"),
                          self.out / f"t{t:g}.gp")
            summary[f"t{t:g}"] = {"mean": float(ens.values.mean())}
        return {"resolved": {"t_values": t_values, "n_real": n_real, "Q": Q,
                             "nlon": fig3["nlon"], "nlat": fig3["nlat"]},
                "summary": summary}

    def catalog(self) -> Dict[str, Any]:
        rows = catalog_listing()
        print(f"{'kind':<12} {'family':<20} {'hosts':<28} {'params':<24} certified")
        for row in rows:
            print(f"{row['kind']:<12} {row['family']:<20} {','.join(row['hosts']):<28} "
                  f"{','.join(row['params']):<24} {'yes' if row['certified'] else 'no'}")
        return {"summary": {"families": len(rows)}}


# ==================== ARGUMENTS ====================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Path to config.json (INDIVAR_CONFIG otherwise)")
    common.add_argument("--run-config", help="JSON run config; flags override its values")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--seed", type=int, help="Random seed (default 0)")
    common.add_argument("--workers", type=int, help="Worker threads (INDIVAR_WORKERS wins)")
    common.add_argument("--gnuplot", action="store_true", help="Also write gnuplot scripts")
    common.add_argument("--verbose", action="store_true", help="DEBUG logging")
    common.add_argument("--quiet", action="store_true", help="WARNING logging")
    common.add_argument("--model", help="Inline model spec (';' separates lines) or a repro-fig2 model name")
    common.add_argument("--model-file", help="Model spec file")
    common.add_argument("--points-file", help="Points, one per line")
    common.add_argument("--n-points", type=int, help="Number of random points")
    common.add_argument("--box", type=float, help="Side of the random-point box")
    common.add_argument("--n-real", type=int, help="Number of realizations")
    common.add_argument("--nx", type=int)
    common.add_argument("--ny", type=int)
    common.add_argument("--spacing", type=float)

    parser = argparse.ArgumentParser(description="Indicator variogram toolkit")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("eval", parents=[common], help="Evaluate a model on points")
    check = sub.add_parser("check", parents=[common], help="Run the inequality hierarchy")
    check.add_argument("--profile", choices=["indicator", "madogram"])
    realize = sub.add_parser("realize", parents=[common], help="Simulate on a point set")
    realize.add_argument("--threshold", type=float, help="Excursion threshold lambda")
    realize.add_argument("--clt-terms", type=int, help="Q for the sphere sampler")
    simulate = sub.add_parser("simulate", parents=[common], help="Sequential indicator simulation on a grid")
    simulate.add_argument("--max-data", type=int)
    simulate.add_argument("--radius", type=float)
    simulate.add_argument("--mean", type=float)
    simulate.add_argument("--n-lags", type=int)
    estimate = sub.add_parser("estimate", parents=[common], help="Experimental variogram of an ensemble")
    estimate.add_argument("--input", help="Directory of PGM files or a points CSV")
    estimate.add_argument("--alpha", type=float)
    estimate.add_argument("--n-lags", type=int)
    estimate.add_argument("--direction", choices=["x", "y", "omnidirectional"])
    sub.add_parser("excursion", parents=[common], help="Excursion variogram grid")
    fig2 = sub.add_parser("repro-fig2", parents=[common], help="Sequential simulation of the cubic, exponential and spherical inputs")
    fig2.add_argument("--max-data", type=int)
    fig3 = sub.add_parser("repro-fig3", parents=[common], help="Sphere exponential images")
    fig3.add_argument("--clt-terms", type=int)
    fig3.add_argument("--t-values", type=float, nargs="+")
    sub.add_parser("catalog", parents=[common], help="List model families")
    return parser


_OPTION_FLAGS = ("profile", "threshold", "clt_terms", "max_data", "radius", "mean", "n_lags", "input",
                 "alpha", "direction", "t_values", "n_real")


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Run config file first, then flags"""
    data: Dict[str, Any] = {}
    if args.run_config:
        path = Path(args.run_config)
        if not path.exists():
            raise ConfigError(f"run config not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ConfigError(f"invalid JSON in {path}: {e.msg}", line=e.lineno) from e
    data["command"] = args.command
    for key in ("model", "model_file", "seed", "out", "workers"):
        if getattr(args, key, None) is not None:
            data[key] = getattr(args, key)

    points = dict(data.get("points") or {})
    if args.points_file:
        points["file"] = args.points_file
    if args.n_points:
        points["n"] = args.n_points
    if args.box:
        points["box"] = args.box
    if points:
        data["points"] = points

    if args.nx or args.ny or args.spacing:
        grid = dict(data.get("grid") or {})
        for key in ("nx", "ny", "spacing"):
            if getattr(args, key):
                grid[key] = getattr(args, key)
        data["grid"] = grid

    options = dict(data.get("options") or {})
    for key in _OPTION_FLAGS:
        value = getattr(args, key, None)
        if value is not None:
            options[key] = value
    if args.gnuplot:
        options["gnuplot"] = True
    data["options"] = options
    try:
        return RunConfig(**data)
    except ValueError as e:
        raise ConfigError(f"invalid run config: {e}") from e


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    setup_logging(level)

    try:
        ConfigLoader().reload(args.config)
        run = build_run_config(args)
        setup_logging(level, log_file=Path(run.out) / "run.log" if run.command != "catalog" else None)
        return IndicatorVariogramService(run).execute()
    except IndivarError as e:
        logger.error(f"✗ {e}")
        return EXIT_ERROR
    except Exception as e:
        logger.error(f"✗ Unexpected failure: {e}")
        import traceback
        logger.error(traceback.format_exc())
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
