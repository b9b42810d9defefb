"""Parameter serialization: name -> shape + flat float list, JSON-backed.

Doubles survive the round trip bit-exactly because Python serializes floats
via repr (shortest exact representation) and parses them correctly rounded.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import CheckpointFormatError
from .layers import ParameterSet

FORMAT_VERSION = 1


def params_to_doc(ps: ParameterSet) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "params": {
            name: {"shape": list(t.data.shape), "values": t.data.reshape(-1).tolist()}
            for name, t in ps.items()
        },
    }


def params_from_doc(doc: dict) -> dict[str, np.ndarray]:
    if not isinstance(doc, dict) or "params" not in doc:
        raise CheckpointFormatError("missing 'params' block")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"unsupported format_version {version!r}, expected {FORMAT_VERSION}"
        )
    out = {}
    for name, entry in doc["params"].items():
        try:
            shape = tuple(entry["shape"])
            values = np.array(entry["values"], dtype=np.float64)
        except (KeyError, TypeError) as exc:
            raise CheckpointFormatError(f"malformed parameter entry {name!r}: {exc}")
        if values.size != int(np.prod(shape)) if shape else values.size != 1:
            raise CheckpointFormatError(
                f"parameter {name!r}: {values.size} values for shape {shape}"
            )
        out[name] = values.reshape(shape)
    return out


def save_params(ps: ParameterSet, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params_to_doc(ps)) + "\n")


def load_params_into(ps: ParameterSet, path: str | Path) -> None:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointFormatError(f"{path} is not valid JSON: {exc}")
    ps.load_values(params_from_doc(doc))
