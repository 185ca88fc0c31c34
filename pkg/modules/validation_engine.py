"""
validation_engine.py - Inequality hierarchy checks for candidate indicator variograms

Runs the configured check list (config.json `validity.checks`) on a
Configuration and collects one CheckEntry per check:
- negative type (eigenvalues of the centred matrix)
- pointwise upper bound
- polygonal, Matheron, odd-clique, hypermetric, psd, rounded psd, Shepp, gap
- exact realizability by LP (n <= 10)

Failures are verdicts with certificates, never exceptions. Families too
large to enumerate are skipped, or run on seeded random sub-configurations
when `validity.subsample.enabled` is set.
"""

import logging
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from scipy import linalg

from config.config_loader import get_config
from models.data_models import CheckEntry, CheckReport, Configuration, RngSpec, WeightVector
from modules import enumeration, spaces
from modules.realizability import certificate_margin, realizability_small
from modules.variogram_models import VariogramModel
from utils.errors import EnumerationLimitError, InputError
from utils.workers import resolve_workers

logger = logging.getLogger(__name__)

SIGN_FAMILIES = {"matheron", "odd_clique", "odd_clique_homogeneous", "shepp", "polygonal"}
BOUNDED_FAMILIES = {"hypermetric", "psd", "rounded_psd", "gap"}


def configuration_of(model: VariogramModel, points) -> Configuration:
    """Configuration holding g(x_k, x_l) for every pair of points"""
    X = spaces.as_coordinates(model.host, points)
    return Configuration(g=model.matrix(X), space=model.host, points=X)


def _tol() -> float:
    return get_config().get_tolerance("slack_absolute")


def _limits() -> Dict[str, Any]:
    return get_config().get_section("validity").get("limits", {})


# ==================== INDIVIDUAL CHECKS ====================

def check_negative_type(cfg: Configuration, name: str = "negative_type") -> CheckEntry:
    """sum lambda_k lambda_l g_kl <= 0 for every real zero-sum lambda"""
    g = cfg.g
    n = cfg.n
    Q = linalg.null_space(np.ones((1, n)))
    mu, V = linalg.eigh(Q.T @ (-g) @ Q)
    tol = get_config().get_tolerance("psd_relative") * max(1.0, float(np.linalg.norm(g)))
    margin = float(-mu[0])
    bounds = {"weights": "real, zero-sum", "eigen_tolerance": tol}
    if mu[0] >= -tol:
        return CheckEntry(check=name, verdict="pass", margin=margin, bounds=bounds)

    lam = Q @ V[:, 0]
    lam /= np.abs(lam).max()
    certificate = {"family": "negative_type", "lambdas": lam.tolist(),
                   "margin": float(enumeration.quadratic_forms(g, lam[None, :])[0])}
    return CheckEntry(check=name, verdict="fail", margin=margin, certificate=certificate, bounds=bounds)


def check_pointwise(cfg: Configuration, name: str = "pointwise") -> CheckEntry:
    """0 <= g <= 1/2 entrywise with an exactly zero diagonal"""
    g = cfg.g
    tol = _tol()
    diag = np.abs(np.diag(g))
    over = g - 0.5
    under = -g
    margin = float(max(over.max(), under.max(), diag.max()))

    certificate = None
    if diag.max() > 0:
        k = int(np.argmax(diag))
        certificate = {"entry": [k, k], "value": float(g[k, k]), "margin": float(diag[k])}
    elif over.max() > tol or under.max() > tol:
        worst = over if over.max() >= under.max() else under
        k, l = (int(i) for i in np.unravel_index(np.argmax(worst), g.shape))
        certificate = {"entry": [min(k, l), max(k, l)], "value": float(g[k, l]), "margin": float(worst[k, l])}
    verdict = "fail" if certificate is not None else "pass"
    return CheckEntry(check=name, verdict=verdict, margin=margin, certificate=certificate,
                      bounds={"upper": 0.5, "tolerance": tol})


def _family_entry(name: str, family: str, outcome: Dict[str, Any], bounds: Dict[str, Any],
                  sampled: bool = False) -> CheckEntry:
    if outcome["verdict"] is None:
        return CheckEntry(check=name, verdict="skipped", bounds=bounds,
                          reason=f"no {family} vectors at this size")
    certificate = outcome["certificate"]
    if certificate is not None:
        certificate = {"family": family, **certificate}
        if family == "polygonal":
            lam = certificate["lambdas"]
            certificate["partition"] = [[i for i, v in enumerate(lam) if v > 0],
                                        [i for i, v in enumerate(lam) if v < 0]]
    bounds = {**bounds, "n_candidates": outcome["n_candidates"]}
    return CheckEntry(check=name, verdict=outcome["verdict"], margin=outcome["margin"],
                      certificate=certificate, bounds=bounds, sampled=sampled)


def check_polygonal(cfg: Configuration, seed: int = 0, workers: int = 1, name: str = "polygonal") -> CheckEntry:
    """Cross-partition sums dominate within-partition sums (triangle inequality at n = 3)"""
    n = cfg.n
    if n < 3:
        return CheckEntry(check=name, verdict="skipped", reason="polygonal inequalities need n >= 3")
    limits = _limits()
    if n <= int(limits.get("polygonal_exhaustive_max_n", 12)):
        outcome = enumeration.enumerate_family(cfg.g, "polygonal", workers=workers)
        return _family_entry(name, "polygonal", outcome, {"values": "{-1,0,1}", "exhaustive": True})

    n_random = int(limits.get("polygonal_samples", 10000))
    rng = RngSpec(seed=seed).generator()
    candidates = enumeration.polygonal_samples(n, n_random, rng)
    outcome = enumeration.evaluate_candidates(cfg.g, "polygonal", candidates, workers=workers)
    logger.info(f"[VALIDITY] Polygonal at n={n}: all triples plus {n_random} random bipartitions")
    return _family_entry(name, "polygonal", outcome,
                         {"values": "{-1,0,1}", "exhaustive": False, "random_bipartitions": n_random, "seed": seed},
                         sampled=True)


def check_integer_weights(cfg: Configuration, family: str, bound: Optional[int] = None,
                          workers: int = 1, name: Optional[str] = None,
                          weights: Optional[Sequence[WeightVector]] = None) -> CheckEntry:
    """Matheron, odd-clique, hypermetric, psd, rounded psd and Shepp inequalities

    With weights, only those vectors are tested (vectors outside the family
    are dropped); otherwise the family is enumerated up to bound.
    """
    name = name or family
    if family not in enumeration.FAMILIES or family in ("polygonal", "gap"):
        raise InputError(f"unknown integer-weight family '{family}'")
    n = cfg.n
    if weights is not None:
        return _given_weights(cfg, family, weights, workers, name)
    limits = _limits()
    if bound is None:
        bound = int(get_config().get_section("validity").get("default_bound", 3))

    if family in SIGN_FAMILIES:
        values = "{-1,1}" if family == "shepp" else "{-1,0,1}"
        bounds = {"values": values, "n": n}
        max_n = int(limits.get("sign_family_max_n", 16))
    else:
        bounds = {"values": f"[-{bound},{bound}]", "bound": bound, "n": n}
        max_n = int(limits.get("integer_family_max_n", 8))

    if family == "shepp" and n % 2 == 0:
        return CheckEntry(check=name, verdict="skipped", bounds=bounds, reason="Shepp's inequalities need odd n")
    if n > max_n:
        return CheckEntry(check=name, verdict="skipped", bounds=bounds,
                          reason=f"{family} enumeration limited to n <= {max_n}")
    try:
        outcome = enumeration.enumerate_family(cfg.g, family, bound=bound, workers=workers)
    except EnumerationLimitError as e:
        return CheckEntry(check=name, verdict="skipped", bounds=bounds, reason=str(e))
    return _family_entry(name, family, outcome, bounds)


def _given_weights(cfg: Configuration, family: str, weights: Sequence[WeightVector], workers: int,
                   name: str) -> CheckEntry:
    bad = [list(w.lambdas) for w in weights if len(w.lambdas) != cfg.n]
    if bad:
        raise InputError(f"weight vectors must have length {cfg.n}; got {bad[0]}")
    lams = np.array([w.lambdas for w in weights], dtype=np.int64).reshape(-1, cfg.n)
    outcome = enumeration.evaluate_candidates(cfg.g, family, lams, workers=workers)
    return _family_entry(name, family, outcome, {"values": "given", "n": cfg.n, "n_given": len(weights)})


def check_gap(cfg: Configuration, bound: int = 2, workers: int = 1, name: str = "gap") -> CheckEntry:
    """LHS <= (sigma^2 - gap^2) / 4 with the exact gap of every enumerated lambda"""
    n = cfg.n
    bounds = {"values": f"[-{bound},{bound}]", "bound": bound, "n": n}
    max_n = int(_limits().get("gap_check_max_n", 8))
    if n > max_n:
        return CheckEntry(check=name, verdict="skipped", bounds=bounds, reason=f"gap enumeration limited to n <= {max_n}")
    try:
        outcome = enumeration.enumerate_family(cfg.g, "gap", bound=bound, workers=workers)
    except EnumerationLimitError as e:
        return CheckEntry(check=name, verdict="skipped", bounds=bounds, reason=str(e))
    return _family_entry(name, "gap", outcome, bounds)


def check_realizability(cfg: Configuration, name: str = "realizability") -> CheckEntry:
    try:
        result = realizability_small(cfg.g)
    except EnumerationLimitError as e:
        return CheckEntry(check=name, verdict="skipped", reason=str(e), bounds={"n": cfg.n})
    bounds = {"n": cfg.n, "atoms": 2 ** (cfg.n - 1), "lp_objective": result.objective}
    if result.feasible:
        return CheckEntry(check=name, verdict="pass", margin=result.objective, bounds=bounds)
    margin = -result.certificate_value
    certificate = {"family": "corner_positive", "matrix": result.certificate, "margin": margin}
    return CheckEntry(check=name, verdict="fail", margin=margin, certificate=certificate, bounds=bounds)


# ==================== CERTIFICATES ====================

def recheck_certificate(cfg: Configuration, entry: CheckEntry) -> float:
    """Recompute a failure margin from the certificate alone"""
    cert = entry.certificate
    if cert is None:
        raise InputError(f"check '{entry.check}' carries no certificate")
    g = cfg.g
    if "indices" in cert:
        idx = np.asarray(cert["indices"])
        g = g[np.ix_(idx, idx)]
    family = cert.get("family")

    if "entry" in cert:
        k, l = cert["entry"]
        return float(abs(g[k, k])) if k == l else float(max(g[k, l] - 0.5, -g[k, l]))
    if family == "corner_positive":
        return certificate_margin(np.asarray(cert["matrix"]), g)
    lam = np.asarray(cert["lambdas"], dtype=float)[None, :]
    lhs = float(enumeration.quadratic_forms(g, lam)[0])
    if family == "negative_type":
        return lhs
    rhs = enumeration.FAMILIES[family]["rhs"]
    lam_int = np.asarray(cert["lambdas"], dtype=np.int64)[None, :]
    return lhs - float(rhs(lam_int.sum(axis=1), lam_int)[0])


# ==================== ENGINE ====================

class ValidationEngine:
    """
    Config-driven runner for the inequality hierarchy

    Check definitions come from config.json `validity.checks`; each one is
    routed on its `check_type` and filtered by profile ("indicator" or
    "madogram", the latter without the 1/2 upper bound).
    """

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        self.config = config if config is not None else get_config().get_section("validity")
        self.checks: List[Dict[str, Any]] = self.config.get("checks", [])
        self.subsample = self.config.get("subsample", {})
        logger.debug(f"[INIT] ValidationEngine with {len(self.checks)} configured checks")

    def check_configuration(self, cfg: Configuration, profile: str = "indicator", seed: int = 0,
                            workers: Optional[int] = None) -> CheckReport:
        """Run every enabled check of the profile and build the report"""
        if profile not in ("indicator", "madogram"):
            raise InputError(f"unknown check profile '{profile}'")
        workers = resolve_workers(workers)
        logger.info(f"[VALIDITY] Checking n={cfg.n} points, profile={profile}, workers={workers}")

        entries = []
        for check in self.checks:
            if not check.get("enabled", True) or profile not in check.get("profiles", ["indicator"]):
                continue
            entry = self._execute_check(check, cfg, seed, workers)
            if entry.verdict == "skipped" and self._can_subsample(check, cfg):
                entry = self._subsampled(check, cfg, seed, workers)
            entry.name = check.get("name", check["id"])
            logger.info(f"[VALIDITY] {check['id']}: {entry.verdict}{' (sampled)' if entry.sampled else ''}"
                        + (f" - {entry.reason}" if entry.reason else ""))
            entries.append(entry)

        report = CheckReport(profile=profile, n_points=cfg.n, entries=entries)
        status = "PASSED" if not report.has_failures else "FAILED"
        logger.info(f"[VALIDITY] Results: {status} ({report.passed} passed, {report.failed} failed, "
                    f"{report.skipped} skipped)")
        return report

    def _execute_check(self, check: Dict[str, Any], cfg: Configuration, seed: int, workers: int) -> CheckEntry:
        """Route a configured check on its check_type"""
        check_type = check.get("check_type")
        name = check["id"]
        if check_type == "negative_type":
            return check_negative_type(cfg, name=name)
        if check_type == "pointwise":
            return check_pointwise(cfg, name=name)
        if check_type == "polygonal":
            return check_polygonal(cfg, seed=seed, workers=workers, name=name)
        if check_type == "integer_weights":
            weights = check.get("weights")
            if weights is not None:
                weights = [WeightVector(lambdas=w) for w in weights]
            return check_integer_weights(cfg, check["family"], check.get("bound"), workers=workers, name=name,
                                         weights=weights)
        if check_type == "gap":
            return check_gap(cfg, bound=int(check.get("bound", 2)), workers=workers, name=name)
        if check_type == "realizability":
            return check_realizability(cfg, name=name)
        logger.warning(f"[VALIDITY] Unknown check type: {check_type}")
        return CheckEntry(check=name, verdict="skipped", reason=f"unknown check type '{check_type}'")

    def _can_subsample(self, check: Dict[str, Any], cfg: Configuration) -> bool:
        size = int(self.subsample.get("subset_size", 7))
        if not self.subsample.get("enabled", False) or cfg.n <= size:
            return False
        return check.get("check_type") in ("integer_weights", "gap", "realizability")

    def _subsampled(self, check: Dict[str, Any], cfg: Configuration, seed: int, workers: int) -> CheckEntry:
        """Run a check on seeded random sub-configurations; certificates carry original indices"""
        size = int(self.subsample.get("subset_size", 7))
        n_subsets = int(self.subsample.get("n_subsets", 10))
        rng = RngSpec(seed=seed, stream=1).generator()

        worst, failing, subsets_run, last = None, None, 0, None
        for _ in range(n_subsets):
            indices = np.sort(rng.choice(cfg.n, size=size, replace=False))
            entry = self._execute_check(check, cfg.subset(indices), seed, workers)
            if entry.verdict == "skipped":
                last = entry
                continue
            subsets_run += 1
            if entry.margin is not None and (worst is None or entry.margin > worst):
                worst = entry.margin
            if entry.verdict == "fail" and failing is None:
                failing = entry
                failing.certificate = {**failing.certificate, "indices": indices.tolist()}

        bounds = {"subset_size": size, "n_subsets": n_subsets, "subsets_run": subsets_run, "seed": seed}
        if subsets_run == 0:
            return CheckEntry(check=check["id"], verdict="skipped", bounds=bounds,
                              reason=last.reason if last else "no sub-configuration could be checked")
        if failing is not None:
            return CheckEntry(check=check["id"], verdict="fail", sampled=True, margin=worst,
                              certificate=failing.certificate, bounds={**failing.bounds, **bounds})
        return CheckEntry(check=check["id"], verdict="pass", sampled=True, margin=worst, bounds=bounds)
