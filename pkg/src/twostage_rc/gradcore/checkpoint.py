"""JSON checkpoint documents (format version "1")."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .tensor import Tensor

FORMAT_VERSION = "1"


class CheckpointError(Exception):
    pass


def encode_array(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": [float(x) for x in a.reshape(-1)]}


def decode_array(doc: Mapping) -> np.ndarray:
    data = np.asarray(doc["data"], dtype=np.float64)
    shape = tuple(doc["shape"])
    if data.size != int(np.prod(shape, dtype=np.int64)):
        raise CheckpointError(f"data length {data.size} does not fit shape {shape}")
    return data.reshape(shape)


def dumps(
    params: Mapping[str, Tensor],
    optimizer: Mapping[str, Any] | None = None,
    rng_state: Any = None,
    extra: Mapping[str, Any] | None = None,
) -> str:
    doc: dict[str, Any] = {
        "version": FORMAT_VERSION,
        "params": {k: encode_array(p.data) for k, p in sorted(params.items())},
        "optimizer": None,
        "rng": rng_state,
    }
    if optimizer is not None:
        doc["optimizer"] = {
            **{k: v for k, v in optimizer.items() if k != "accumulators"},
            "accumulators": {
                k: encode_array(v) for k, v in sorted(optimizer["accumulators"].items())
            },
        }
    if extra:
        doc.update(extra)
    return json.dumps(doc, sort_keys=True)


def loads(text: str) -> dict[str, Any]:
    doc = json.loads(text)
    if doc.get("version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')!r}")
    doc["params"] = {k: decode_array(v) for k, v in doc["params"].items()}
    if doc.get("optimizer"):
        doc["optimizer"]["accumulators"] = {
            k: decode_array(v) for k, v in doc["optimizer"]["accumulators"].items()
        }
    return doc


def save(path: str | Path, params, optimizer=None, rng_state=None, extra=None) -> None:
    Path(path).write_text(dumps(params, optimizer, rng_state, extra), encoding="utf-8")


def load(path: str | Path) -> dict[str, Any]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return loads(text)
