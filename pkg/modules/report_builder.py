from datetime import datetime
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from models.data_models import CheckReport, ExperimentalCurve

logger = logging.getLogger(__name__)


class ReportBuilder:
    """Build check reports, stdout tables and gnuplot scripts"""

    def build_check_response(self, report: CheckReport, model: Optional[Dict[str, Any]] = None,
                             points: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Full JSON document for one `check` run"""
        total = len(report.entries)
        ran = report.passed + report.failed
        return {
            "date_validated": datetime.now().strftime("%Y-%m-%d"),
            "timestamp": datetime.now().isoformat() + "Z",
            "status": "violations_found" if report.has_failures else "success",
            "profile": report.profile,
            "n_points": report.n_points,
            "model": model,
            "points": points,
            "summary": {
                "total_checks": total,
                "passed": report.passed,
                "failed": report.failed,
                "skipped": report.skipped,
                "success_rate": round(report.passed / ran * 100, 2) if ran else 0,
            },
            "checks": report.to_records(),
        }

    def format_table(self, report: CheckReport) -> str:
        """Fixed-width table: check, verdict, margin, note"""
        header = f"{'check':<24} {'verdict':<16} {'margin':>14}  note"
        lines = [header, "-" * len(header)]
        for entry in report.entries:
            verdict = entry.verdict + (" (sampled)" if entry.sampled and entry.verdict != "skipped" else "")
            margin = "" if entry.margin is None else f"{entry.margin:.6e}"
            lines.append(f"{entry.check:<24} {verdict:<16} {margin:>14}  {self._note(entry)}")
        lines.append("-" * len(header))
        lines.append(f"{report.passed} passed, {report.failed} failed, {report.skipped} skipped "
                     f"({report.profile} profile, n={report.n_points})")
        return "\n".join(lines)

    def _note(self, entry) -> str:
        if entry.verdict == "skipped":
            return entry.reason or ""
        cert = entry.certificate
        if not cert:
            return ""
        if "entry" in cert:
            return f"g{tuple(cert['entry'])} = {cert['value']:.6g}"
        if "lambdas" in cert:
            lam = cert["lambdas"]
            shown = [f"{v:.3g}" if isinstance(v, float) else str(v) for v in lam]
            prefix = f"on {cert['indices']} " if "indices" in cert else ""
            return f"{prefix}lambda = [{', '.join(shown)}]"
        if "matrix" in cert:
            return "corner-positive certificate"
        return ""

    def build_curve_summary(self, curve: ExperimentalCurve, **extra: Any) -> Dict[str, Any]:
        return {
            "alpha": curve.alpha,
            "n_lags": len(curve.average),
            "n_realizations": len(curve.per_realization),
            "warnings": curve.warnings,
            **extra,
        }

    def write_json(self, document: Dict[str, Any], path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(document, fh, indent=2)
        logger.debug(f"[REPORT] Wrote {path}")
        return path

    # ---------- gnuplot ----------

    def gnuplot_curve(self, data_file: str, title: str, model_file: Optional[str] = None) -> str:
        """Per-realization curves in green, ensemble average in blue, input model in red"""
        lines = [
            "set datafile separator ','",
            f"set title '{title}'",
            "set xlabel 'lag'",
            "set ylabel 'variogram'",
            "set key top left",
            f"plot '{data_file}' using 1:($4 >= 0 ? $2 : 1/0) every ::1 with lines lc rgb '#7fbf7f' notitle, \\",
            f"     '{data_file}' using 1:($4 == -1 ? $2 : 1/0) every ::1 with linespoints lw 2 lc rgb 'blue' title 'average'"
            + (", \\" if model_file else ""),
        ]
        if model_file:
            lines.append(f"     '{model_file}' using 1:2 every ::1 with lines lw 2 lc rgb 'red' title 'model'")
        return "\n".join(lines) + "\n"

    def gnuplot_image(self, pgm_file: str, title: str) -> str:
        return "\n".join([
            f"set title '{title}'",
            "unset key",
            "set palette gray",
            "set size ratio -1",
            f"plot '{pgm_file}' binary filetype=pgm flipy with image",
        ]) + "\n"

    def gnuplot_excursion(self, data_file: str, methods: List[str]) -> str:
        lines = [
            "set datafile separator ','",
            "set xlabel 'rho'",
            "set ylabel 'g_lambda'",
        ]
        plots = [f"'{data_file}' using 1:(strcol(3) eq '{m}' ? $4 : 1/0) every ::1 with points title '{m}'"
                 for m in methods]
        lines.append("plot " + ", \\\n     ".join(plots))
        return "\n".join(lines) + "\n"

    def write_script(self, script: str, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(script, encoding="utf-8")
        return path
