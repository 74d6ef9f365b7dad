"""Policy checkpoints: one JSON header line, then the parameters as raw float64.

Header fields: ``format``, ``version``, ``kind``, ``config`` (constructor
arguments) and ``layers`` (``[name, shape]`` in storage order).  The body is
the flat little-endian float64 concatenation of the arrays in that order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .pinet import PiNet
from .policies import POLICY_CLASSES, Policy

FORMAT = "mpcdagger-checkpoint"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _classes():
    return dict(POLICY_CLASSES, pinet=PiNet)


def save_checkpoint(path, policy: Policy, extra: dict | None = None) -> Path:
    path = Path(path)
    layers = [[name, list(shape)] for name, shape, _ in policy.layout()]
    header = {"format": FORMAT, "version": VERSION, "kind": policy.kind,
              "config": policy.config(), "layers": layers, "extra": extra or {}}
    flat = np.concatenate([policy.params[name].ravel() for name, _ in layers])
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        fh.write(flat.astype("<f8").tobytes())
    return path


def load_checkpoint(path) -> Policy:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    with open(path, "rb") as fh:
        header = json.loads(fh.readline())
        body = fh.read()
    if header.get("format") != FORMAT or header.get("version") != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint header")
    cls = _classes().get(header["kind"])
    if cls is None:
        raise CheckpointError(f"{path}: unknown policy kind {header['kind']!r}")
    flat = np.frombuffer(body, dtype="<f8")
    params, pos = {}, 0
    for name, shape in header["layers"]:
        size = int(np.prod(shape))
        params[name] = flat[pos:pos + size].reshape(shape).astype(np.float64)
        pos += size
    if pos != flat.size:
        raise CheckpointError(f"{path}: {flat.size - pos} trailing values")
    return cls(params=params, **header["config"])


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        return json.loads(fh.readline())
