"""JSON state and triple files.

A state is ``{"dims": [...], "matrix": [[[re, im], ...], ...]}``; a triple
is ``{"dims": [dA, dB, dC], "rho_ab": state, "rho_ac": state, "rho_bc": state}``.
Floats are written with Python's shortest round-trip representation, so a
written file parses back to the identical matrix.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .marginals import MarginalTriple
from .operators import DensityMatrix, DimensionError, Operator


class FormatError(ValueError):
    """A JSON document does not describe a state or triple."""


def state_to_json(X: Operator) -> dict:
    return {
        "dims": list(X.dims),
        "matrix": [[[float(z.real), float(z.imag)] for z in row] for row in X.mat],
    }


def operator_from_json(doc: dict) -> Operator:
    try:
        dims = [int(d) for d in doc["dims"]]
        raw = np.asarray(doc["matrix"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed state document: {exc}") from exc
    if raw.ndim != 3 or raw.shape[2] != 2:
        raise FormatError(f"matrix entries must be [re, im] pairs, got shape {raw.shape}")
    try:
        return Operator(raw[..., 0] + 1j * raw[..., 1], tuple(dims))
    except DimensionError as exc:
        raise FormatError(str(exc)) from exc


def state_from_json(doc: dict) -> DensityMatrix:
    op = operator_from_json(doc)
    try:
        return DensityMatrix(op.mat, op.dims)
    except ValueError as exc:
        raise FormatError(f"not a density matrix: {exc}") from exc


def triple_to_json(E: MarginalTriple) -> dict:
    return {
        "dims": list(E.dims),
        "rho_ab": state_to_json(E.rho_ab),
        "rho_ac": state_to_json(E.rho_ac),
        "rho_bc": state_to_json(E.rho_bc),
    }


def triple_from_json(doc: dict) -> MarginalTriple:
    """Read a triple document, or reduce a tripartite state document."""
    if not isinstance(doc, dict):
        raise FormatError("expected a JSON object")
    if "matrix" in doc:
        rho = state_from_json(doc)
        if rho.n_sites != 3:
            raise FormatError("a state used as a triple source must be tripartite")
        return MarginalTriple.from_state(rho)
    try:
        E = MarginalTriple(*(state_from_json(doc[k]) for k in ("rho_ab", "rho_ac", "rho_bc")))
    except KeyError as exc:
        raise FormatError(f"missing key {exc}") from exc
    except DimensionError as exc:
        raise FormatError(str(exc)) from exc
    if "dims" in doc and list(doc["dims"]) != list(E.dims):
        raise FormatError(f"declared dims {doc['dims']} do not match pair states {list(E.dims)}")
    return E


def dumps(doc) -> str:
    return json.dumps(doc, sort_keys=True, indent=1)


def read_json(path: str | Path):
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


def load_state(path: str | Path) -> DensityMatrix:
    return state_from_json(read_json(path))


def load_triple(path: str | Path) -> MarginalTriple:
    return triple_from_json(read_json(path))


def save(doc, path: str | Path) -> None:
    Path(path).write_text(dumps(doc) + "\n")
