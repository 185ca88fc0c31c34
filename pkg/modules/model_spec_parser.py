"""Plain-text model specifications.

    family=exp_comp
    params.t=3
    host=sphere(dim=2, radius=1)
    base{
      family=sphere_linear
    }

Blocks: `base{}` (combinator operands, in order), `correlation{}` (the
Gaussian correlation of a transform), `atom{}` (mixture atoms, holding
`weight=` plus either a `correlation{}` block or model keys). Nested blocks
inherit the host of their parent. `#` starts a comment.
"""

import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from models.data_models import SpaceRef
from modules.correlations import GaussianCorrelation
from modules.spaces import read_graph
from modules.variogram_models import MixtureAtom, MixtureSpec, VariogramModel
from utils.errors import ConfigError, IndivarError

logger = logging.getLogger(__name__)

_BLOCKS = ("base", "correlation", "atom")
_HOST_RE = re.compile(r"^(euclidean|sphere|graph)\s*\((.*)\)$")


@dataclass
class _Block:
    kind: str
    line: int
    keys: Dict[str, Any] = field(default_factory=dict)
    key_lines: Dict[str, int] = field(default_factory=dict)
    children: List["_Block"] = field(default_factory=list)


def _tokenize(text: str) -> _Block:
    root = _Block("model", 1)
    stack = [root]
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.endswith("{"):
            name = line[:-1].strip()
            if name not in _BLOCKS:
                raise ConfigError(f"unknown block '{name}' (expected one of {', '.join(_BLOCKS)})", line=lineno)
            child = _Block(name, lineno)
            stack[-1].children.append(child)
            stack.append(child)
            continue
        if line == "}":
            if len(stack) == 1:
                raise ConfigError("unmatched '}'", line=lineno)
            stack.pop()
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key=value', got '{line}'", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        block = stack[-1]
        if key in block.keys:
            raise ConfigError(f"duplicate key '{key}'", line=lineno)
        block.keys[key] = value
        block.key_lines[key] = lineno
    if len(stack) != 1:
        raise ConfigError(f"block '{stack[-1].kind}' opened here is never closed", line=stack[-1].line)
    return root


def parse_host(text: str, base_dir: Optional[Path] = None, line: Optional[int] = None) -> SpaceRef:
    """euclidean(dim=2) | sphere(dim=2, radius=1) | graph(file=g.txt, metric=resistance)"""
    match = _HOST_RE.match(text.strip())
    if not match:
        raise ConfigError(f"bad host '{text}'", line=line)
    kind, body = match.groups()
    args = {}
    for item in filter(None, (part.strip() for part in body.split(","))):
        if "=" not in item:
            raise ConfigError(f"bad host argument '{item}'", line=line)
        k, v = (s.strip() for s in item.split("=", 1))
        args[k] = v
    try:
        if kind == "euclidean":
            _only(args, {"dim"}, line)
            return SpaceRef.euclidean(int(args.get("dim", 1)))
        if kind == "sphere":
            _only(args, {"dim", "radius"}, line)
            return SpaceRef.sphere(int(args.get("dim", 2)), float(args.get("radius", 1.0)))
        _only(args, {"file", "metric"}, line)
        if "file" not in args:
            raise ConfigError("graph host needs file=", line=line)
        path = Path(args["file"])
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        return SpaceRef.on_graph(read_graph(path), metric=args.get("metric", "resistance"))
    except ConfigError:
        raise
    except (ValueError, IndivarError) as e:
        raise ConfigError(f"bad host '{text}': {e}", line=line) from e


def _only(args: Dict[str, str], allowed: set, line: Optional[int]) -> None:
    extra = sorted(set(args) - allowed)
    if extra:
        raise ConfigError(f"unknown host argument(s) {', '.join(extra)}; allowed: {', '.join(sorted(allowed))}", line=line)


def _params(block: _Block) -> Dict[str, float]:
    params = {}
    for key, value in block.keys.items():
        if key.startswith("params."):
            try:
                params[key[len("params."):]] = float(value)
            except ValueError:
                raise ConfigError(f"parameter '{key}' is not a number: '{value}'", line=block.key_lines[key])
    return params


def _check_keys(block: _Block, allowed: set) -> None:
    for key in block.keys:
        if key not in allowed and not key.startswith("params."):
            raise ConfigError(f"unknown key '{key}' in {block.kind} block", line=block.key_lines[key])


def _host_of(block: _Block, inherited: Optional[SpaceRef], base_dir: Optional[Path]) -> SpaceRef:
    if "host" in block.keys:
        return parse_host(block.keys["host"], base_dir, block.key_lines["host"])
    if inherited is None:
        raise ConfigError("no host given (add host=...)", line=block.line)
    return inherited


def _build_correlation(block: _Block, host: SpaceRef, base_dir: Optional[Path]) -> GaussianCorrelation:
    _check_keys(block, {"family", "host"})
    if block.children:
        raise ConfigError("correlation blocks cannot nest", line=block.children[0].line)
    if "family" not in block.keys:
        raise ConfigError("correlation block needs family=", line=block.line)
    host = _host_of(block, host, base_dir)
    params = _params(block)
    try:
        return GaussianCorrelation(block.keys["family"], host, **params)
    except IndivarError as e:
        raise ConfigError(str(e), line=block.key_lines["family"]) from e


def _build_model(block: _Block, host: Optional[SpaceRef], base_dir: Optional[Path]) -> VariogramModel:
    _check_keys(block, {"family", "host", "weight"} if block.kind == "atom" else {"family", "host"})
    if "family" not in block.keys:
        raise ConfigError(f"{block.kind} block needs family=", line=block.line)
    host = _host_of(block, host, base_dir)

    correlation = None
    operands = []
    atoms = []
    for child in block.children:
        if child.kind == "correlation":
            if correlation is not None:
                raise ConfigError("only one correlation block per model", line=child.line)
            correlation = _build_correlation(child, host, base_dir)
        elif child.kind == "base":
            operands.append(_build_model(child, host, base_dir))
        else:
            atoms.append(_build_atom(child, host, base_dir))

    params = _params(block)
    try:
        return VariogramModel(
            block.keys["family"], host, params=params, correlation=correlation,
            operands=operands, mixture=MixtureSpec(atoms=tuple(atoms)) if atoms else None,
        )
    except IndivarError as e:
        raise ConfigError(str(e), line=block.key_lines["family"]) from e
    except ValueError as e:
        raise ConfigError(f"bad mixture: {e}", line=block.line) from e


def _build_atom(block: _Block, host: SpaceRef, base_dir: Optional[Path]) -> MixtureAtom:
    if "weight" not in block.keys:
        raise ConfigError("atom block needs weight=", line=block.line)
    try:
        weight = float(block.keys["weight"])
    except ValueError:
        raise ConfigError(f"atom weight is not a number: '{block.keys['weight']}'", line=block.key_lines["weight"])
    if not weight > 0:
        raise ConfigError("atom weight must be positive", line=block.key_lines["weight"])

    if "family" in block.keys:
        component = _build_model(block, host, base_dir)
    else:
        if len(block.children) != 1 or block.children[0].kind != "correlation":
            raise ConfigError("atom block needs model keys or exactly one correlation block", line=block.line)
        _check_keys(block, {"weight"})
        component = _build_correlation(block.children[0], host, base_dir)
    return MixtureAtom(weight=weight, component=component)


def parse_model_spec(text: str, base_dir: Optional[Union[str, Path]] = None,
                     default_host: Optional[SpaceRef] = None) -> VariogramModel:
    """Build a VariogramModel from specification text; errors carry line numbers"""
    root = _tokenize(text)
    model = _build_model(root, default_host, Path(base_dir) if base_dir is not None else None)
    logger.debug(f"[SPEC] Parsed {model!r}")
    return model


def load_model_spec(path: Union[str, Path]) -> VariogramModel:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"model file not found: {path}")
    return parse_model_spec(path.read_text(encoding="utf-8"), base_dir=path.parent)
