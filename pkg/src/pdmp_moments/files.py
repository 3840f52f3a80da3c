"""Model and result files.

Models are JSON with matrices as row-major nested arrays. Parsing is strict:
unknown keys are errors, so a misspelt matrix name cannot silently default to
zero. Results are JSON validated against a bundled schema and written
atomically (temporary file, then rename).
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from dataclasses import asdict
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from . import distributions as dists
from .errors import InputError, ModelError
from .model import GeneralResetFamily, LinearDynamics, PDMPModel, PoissonResetFamily, ensure_valid

RESULT_SCHEMA_VERSION = "1.0.0"


def load_schema(name):
    return json.loads(resources.files("pdmp_moments").joinpath("schemas", f"{name}.schema.json").read_text())


def _reject_constant(token):
    raise InputError(f"non-finite number {token} is not valid JSON")


def digest(raw: bytes) -> str:
    return "sha256:" + hashlib.sha256(raw).hexdigest()


def parse_json(text, source="<input>"):
    try:
        return json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise InputError(f"{source}:{exc.lineno}:{exc.colno}: malformed JSON: {exc.msg}") from exc


def _path_str(path):
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "(top level)"


def _schema_errors(doc, schema):
    v = jsonschema.Draft202012Validator(schema)
    errs = sorted(v.iter_errors(doc), key=lambda e: (list(map(str, e.absolute_path)), e.message))
    return [f"{_path_str(e.absolute_path)}: {e.message}" for e in errs]


def _array(value, path, ndim):
    try:
        arr = np.array(value, dtype=float)
    except (ValueError, TypeError) as exc:
        raise ModelError(f"{path}: ragged or non-numeric array") from exc
    if arr.ndim != ndim:
        raise ModelError(f"{path}: expected a {'matrix' if ndim == 2 else 'vector'}, got an array of depth {arr.ndim}")
    return arr


def model_from_dict(doc) -> PDMPModel:
    """Build and validate a model from its JSON document."""
    errors = _schema_errors(doc, load_schema("model"))
    if errors:
        raise ModelError("invalid model file:\n" + "\n".join(errors))
    n = doc["dimension"]
    dyn = doc["dynamics"]
    a_hat = _array(dyn["a_hat"], "dynamics.a_hat", 1)
    if a_hat.shape[0] != n:
        raise ModelError(f"dynamics.a_hat: dimension mismatch: length {a_hat.shape[0]}, dimension is {n}")
    poisson = []
    for i, fam in enumerate(doc.get("poisson_resets", [])):
        p = f"poisson_resets[{i}]"
        poisson.append(PoissonResetFamily(
            rate=fam["rate"],
            J=_array(fam["J"], f"{p}.J", 2),
            R_mean=_array(fam["R_mean"], f"{p}.R_mean", 1),
            R_second=_array(fam["R_second"], f"{p}.R_second", 2) if "R_second" in fam else None,
        ))
    g = doc["general_reset"]
    try:
        dist = dists.from_dict(g["distribution"])
    except InputError as exc:
        raise ModelError(f"general_reset.distribution: {exc}") from exc
    shapes = {"J": 2, "R": 1, "Q": 2, "B": 2, "C": 1, "D": 2}
    kw = {k: _array(g[k], f"general_reset.{k}", d) for k, d in shapes.items() if k in g}
    model = PDMPModel(
        dynamics=LinearDynamics(a_hat=a_hat, A=_array(dyn["A"], "dynamics.A", 2)),
        general=GeneralResetFamily(dist=dist, **kw),
        poisson=poisson,
    )
    return ensure_valid(model)


def _matrix_list(M):
    return np.asarray(M, dtype=float).tolist()


def model_to_dict(m: PDMPModel) -> dict:
    g = m.general
    return {
        "dimension": m.dim,
        "dynamics": {"a_hat": _matrix_list(m.dynamics.a_hat), "A": _matrix_list(m.dynamics.A)},
        "poisson_resets": [
            {"rate": f.rate, "J": _matrix_list(f.J), "R_mean": _matrix_list(f.R_mean), "R_second": _matrix_list(f.R_second)}
            for f in m.poisson
        ],
        "general_reset": {
            "distribution": g.dist.to_dict(),
            **{k: _matrix_list(getattr(g, k)) for k in ("J", "R", "Q", "B", "C", "D")},
        },
    }


def read_model(path):
    """Returns ``(model, input_digest)``."""
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise InputError(f"cannot read model file {path}: {exc.strerror}") from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InputError(f"{path}: not UTF-8 text") from exc
    return model_from_dict(parse_json(text, str(path))), digest(raw)


def _finite_or_none(values):
    return [v if math.isfinite(v) else None for v in np.asarray(values, dtype=float).tolist()]


def result_to_dict(sol, input_digest, tol) -> dict:
    doc = {
        "schema_version": RESULT_SCHEMA_VERSION,
        "tool_version": __version__,
        "input_digest": input_digest,
        "order": sol.order,
        "tolerances": asdict(tol),
        "mean": _matrix_list(sol.mean),
        "second_moment": None if sol.second_moment is None else _matrix_list(sol.second_moment),
        "covariance": None if sol.covariance is None else _matrix_list(sol.covariance),
        "cv2": None if sol.cv2 is None else _finite_or_none(sol.cv2),
        "stability": sol.stability[-1].to_dict(),
        "stability_checks": [s.to_dict() for s in sol.stability],
        "numerical_error_estimate": float(sol.numerical_error_estimate),
        "condition_number": float(sol.condition_number),
    }
    jsonschema.validate(doc, load_schema("result"))
    return doc


def read_result(path) -> dict:
    """Load a result file, validating it; arrays come back as numpy arrays."""
    doc = parse_json(Path(path).read_text(encoding="utf-8"), str(path))
    errors = _schema_errors(doc, load_schema("result"))
    if errors:
        raise InputError("invalid result file:\n" + "\n".join(errors))
    out = dict(doc)
    for key in ("mean", "second_moment", "covariance"):
        if out[key] is not None:
            out[key] = np.array(out[key], dtype=float)
    if out["cv2"] is not None:
        out["cv2"] = np.array([np.nan if v is None else v for v in out["cv2"]], dtype=float)
    return out


def dumps(doc) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def write_atomic(path, text: str):
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    directory = path.parent if str(path.parent) else Path(".")
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=directory)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise
