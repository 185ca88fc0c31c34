"""Catalog restrictions from config.json applied at model construction."""

import logging
import math
from typing import Any, Dict, List

from config.config_loader import get_config
from models.data_models import SpaceRef
from utils.errors import ConstructionError

logger = logging.getLogger(__name__)

GRAPH_MODEL_METRICS = ("resistance", "communicability")


def known_families(kind: str = "variograms") -> List[str]:
    return sorted(get_config().get_section("catalog").get(kind, {}))


def resolve_params(kind: str, family: str, params: Dict[str, Any], host: SpaceRef,
                   uses_distance: bool = True) -> Dict[str, float]:
    """Check family, host and parameters against the catalog; return params with defaults filled

    Raises ConstructionError naming the known families or parameters.
    """
    rules = get_config().get_family_rules(family, kind)
    label = "correlation" if kind == "correlations" else "variogram"
    if not rules:
        raise ConstructionError(
            f"unknown {label} family '{family}'; known: {', '.join(known_families(kind))}"
        )

    if host.kind not in rules.get("hosts", []):
        raise ConstructionError(
            f"{label} family '{family}' is not available on {host.kind} hosts "
            f"(allowed: {', '.join(rules.get('hosts', []))})"
        )
    if "max_dim" in rules and host.kind != "graph" and host.dim > rules["max_dim"]:
        raise ConstructionError(f"{label} family '{family}' needs dim <= {rules['max_dim']}, got {host.dim}")
    if rules.get("unit_sphere") and host.kind == "sphere" and host.radius != 1.0:
        raise ConstructionError(f"{label} family '{family}' is defined on the unit sphere only")
    if uses_distance and host.kind == "graph" and host.metric not in GRAPH_MODEL_METRICS:
        raise ConstructionError(
            f"{label} family '{family}' on graphs needs metric resistance or communicability, got {host.metric}"
        )

    declared = dict(rules.get("params", {}))
    if host.kind == "sphere":
        for name, override in rules.get("sphere_params", {}).items():
            declared[name] = {**declared.get(name, {}), **override}

    unknown = sorted(set(params) - set(declared))
    if unknown:
        allowed = ", ".join(sorted(declared)) or "none"
        raise ConstructionError(f"unknown parameter(s) {', '.join(unknown)} for '{family}'; allowed: {allowed}")

    resolved = {}
    for name, rule in declared.items():
        if name in params:
            value = params[name]
        elif "default" in rule:
            value = rule["default"]
        else:
            raise ConstructionError(f"'{family}' needs parameter '{name}'")
        try:
            value = float(value)
        except (TypeError, ValueError):
            raise ConstructionError(f"parameter {family}.{name} must be a number, got {value!r}")
        _check_value(family, name, value, rule)
        resolved[name] = int(value) if rule.get("integer") else value
    return resolved


def _check_value(family: str, name: str, value: float, rule: Dict[str, Any]) -> None:
    if not math.isfinite(value):
        raise ConstructionError(f"{family}.{name} must be finite")
    if "min" in rule and value < rule["min"]:
        raise ConstructionError(f"{family}.{name} = {value:g} is below {rule['min']}")
    if "max" in rule and value > rule["max"]:
        raise ConstructionError(f"{family}.{name} = {value:g} exceeds {rule['max']}")
    if "min_exclusive" in rule and value <= rule["min_exclusive"]:
        raise ConstructionError(f"{family}.{name} = {value:g} must be > {rule['min_exclusive']}")
    if "max_exclusive" in rule and value >= rule["max_exclusive"]:
        raise ConstructionError(f"{family}.{name} = {value:g} must be < {rule['max_exclusive']}")
    if rule.get("integer") and value != int(value):
        raise ConstructionError(f"{family}.{name} must be an integer, got {value:g}")


def catalog_listing() -> List[Dict[str, Any]]:
    """One row per catalog family, variograms first"""
    catalog = get_config().get_section("catalog")
    rows = []
    for kind in ("variograms", "correlations"):
        for family, rules in sorted(catalog.get(kind, {}).items()):
            rows.append({
                "kind": kind[:-1],
                "family": family,
                "hosts": rules.get("hosts", []),
                "params": sorted(rules.get("params", {})),
                "correlation": rules.get("correlation", "none"),
                "operands": rules.get("operands", 0),
                "certified": rules.get("certified", True),
            })
    return rows
