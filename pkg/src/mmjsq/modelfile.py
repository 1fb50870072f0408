"""Model files: a JSON document describing one Markov-modulated JSQ system.

Required keys: ``n`` (server count), ``alpha`` (m x m matrix of modulation
rates; diagonals are ignored), ``lambda_base`` (length-m arrival-rate vector)
and ``mu`` (m x n service-rate matrix).  Optional keys: ``rho`` (target mean
load; the arrival vector is rescaled to hit it exactly), ``alpha_scale``
(scalar multiplying every modulation rate), ``name``, ``description`` and
``reference`` (externally published constants to compare analysis output
against).  Three example files ship with the package; see ``list_bundled``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib.resources import files
from pathlib import Path

import numpy as np

from .chain import validate_generator
from .errors import InvalidModel, MmJsqError, ParseError
from .model import MmJsqModel, scale_to_load

_REQUIRED = ("n", "alpha", "lambda_base", "mu")
_OPTIONAL = ("rho", "alpha_scale", "name", "description", "reference")


@dataclass(frozen=True)
class ParsedModel:
    """A model file after validation.

    ``base_model`` keeps the arrival vector exactly as written (its mean load
    may exceed one); ``model`` has it rescaled to ``rho`` when the file or an
    override provides one.
    """

    name: str
    base_model: MmJsqModel
    model: MmJsqModel
    rho: float | None
    alpha_scale: float
    reference: dict
    raw: dict


def load_model_file(
    path, rho: float | None = None, alpha_scale: float | None = None
) -> ParsedModel:
    """Parse and validate a model file, with optional load/modulation overrides."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read model file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path} is not valid JSON: {exc}") from exc
    return parse_model_dict(raw, rho=rho, alpha_scale=alpha_scale, origin=str(path))


def parse_model_dict(
    raw: dict,
    rho: float | None = None,
    alpha_scale: float | None = None,
    origin: str = "<dict>",
) -> ParsedModel:
    if not isinstance(raw, dict):
        raise ParseError(f"{origin}: top level must be a JSON object")
    missing = [k for k in _REQUIRED if k not in raw]
    if missing:
        raise ParseError(f"{origin}: missing keys {missing}")
    unknown = [k for k in raw if k not in _REQUIRED + _OPTIONAL]
    if unknown:
        raise ParseError(f"{origin}: unknown keys {unknown}")
    try:
        n = int(raw["n"])
        alpha = np.asarray(raw["alpha"], dtype=np.float64)
        lam = np.asarray(raw["lambda_base"], dtype=np.float64)
        mu = np.asarray(raw["mu"], dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{origin}: malformed numeric field: {exc}") from exc
    scale = alpha_scale if alpha_scale is not None else float(raw.get("alpha_scale", 1.0))
    if not scale > 0.0:
        raise ParseError(f"{origin}: alpha_scale must be positive, got {scale}")
    target_rho = rho if rho is not None else raw.get("rho")
    if target_rho is not None:
        target_rho = float(target_rho)
        if not 0.0 < target_rho <= 1.0:
            raise ParseError(f"{origin}: rho must lie in (0, 1], got {target_rho}")
    try:
        chain = validate_generator(alpha * scale)
        base = MmJsqModel(chain, n, lam, mu)
        model = base if target_rho is None else scale_to_load(base, target_rho)
    except InvalidModel:
        raise
    except MmJsqError as exc:
        raise InvalidModel(f"{origin}: {exc}") from exc
    reference = raw.get("reference", {})
    if not isinstance(reference, dict):
        raise ParseError(f"{origin}: reference must be an object")
    return ParsedModel(
        name=str(raw.get("name", Path(origin).stem)),
        base_model=base,
        model=model,
        rho=target_rho,
        alpha_scale=scale,
        reference=dict(reference),
        raw=raw,
    )


def bundled_model_path(name: str) -> Path:
    """Filesystem path of a bundled example model file."""
    resource = files("mmjsq").joinpath("models", f"{name}.json")
    path = Path(str(resource))
    if not path.exists():
        raise ParseError(f"no bundled model named {name!r}; see list_bundled()")
    return path


def list_bundled() -> list[str]:
    folder = Path(str(files("mmjsq").joinpath("models")))
    return sorted(p.stem for p in folder.glob("*.json"))


def load_bundled(
    name: str, rho: float | None = None, alpha_scale: float | None = None
) -> ParsedModel:
    """Shortcut for ``load_model_file(bundled_model_path(name), ...)``."""
    return load_model_file(bundled_model_path(name), rho=rho, alpha_scale=alpha_scale)
