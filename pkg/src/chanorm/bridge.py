"""JSON-over-stdio runner used by out-of-process bindings.

Reads one request object from stdin and writes one response object to
stdout. Matrices travel as nested JSON arrays; parameters come from a
parameter file path so the file schema stays the single source of truth.
Errors go to stderr with exit code 2.
"""

from __future__ import annotations

import json
import sys

import numpy as np

from . import __version__
from .errors import ChanormError, EmptyInputError, SchemaMismatchError
from .pcen import pcen_backward, pcen_forward
from .pcmn import pcmn_backward, pcmn_splice_forward
from .pipeline import load_params


def _matrix(doc, key) -> np.ndarray:
    if key not in doc:
        raise SchemaMismatchError(f'request is missing "{key}"')
    value = np.asarray(doc[key], dtype=np.float64)
    if value.ndim != 2 or value.size == 0:
        raise EmptyInputError(f'"{key}" must be a non-empty 2-D array, got shape {value.shape}')
    return value


def _round_trip(array: np.ndarray):
    return np.asarray(array).tolist()


def handle_request(doc: dict) -> dict:
    op = doc.get("op")
    if op == "version":
        return {"version": __version__}
    if op == "pcen":
        params = load_params(doc["params_path"]).pcen
        if params is None:
            raise SchemaMismatchError("parameter file has no pcen block")
        energies = _matrix(doc, "energies")
        output, smoothed = pcen_forward(energies, params)
        response = {"output": _round_trip(output), "smoothed": _round_trip(smoothed)}
        if doc.get("upstream") is not None:
            grads = pcen_backward(energies, smoothed, params, _matrix(doc, "upstream"))
            response.update(
                {
                    "d_alpha": _round_trip(grads.d_alpha),
                    "d_delta": _round_trip(grads.d_delta),
                    "d_r": _round_trip(grads.d_r),
                    "d_input": _round_trip(grads.d_input),
                }
            )
        return response
    if op == "pcmn_splice":
        params = load_params(doc["params_path"]).pcmn_splice
        if params is None:
            raise SchemaMismatchError("parameter file has no splice pcmn block")
        features = _matrix(doc, "input")
        response = {"output": _round_trip(pcmn_splice_forward(features, params))}
        if doc.get("upstream") is not None:
            grads = pcmn_backward(features, params, _matrix(doc, "upstream"))
            response.update(
                {
                    "d_weights": _round_trip(grads.d_weights.reshape(-1)),
                    "d_bias": _round_trip(grads.d_bias),
                    "d_input": _round_trip(grads.d_input),
                }
            )
        return response
    raise SchemaMismatchError(f"unknown op {op!r}; expected 'pcen', 'pcmn_splice' or 'version'")


def main() -> int:
    try:
        doc = json.load(sys.stdin)
        response = handle_request(doc)
    except (ChanormError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"chanorm-bridge: error: {exc}", file=sys.stderr)
        return 2
    json.dump(response, sys.stdout)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
