"""Binary model checkpoints.

Layout:

    offset 0   8 bytes   magic  b"ADVPOSTC"
    offset 8   u32 LE    format version (currently 1)
    offset 12  u32 LE    header length H
    offset 16  H bytes   UTF-8 JSON: {"layers": [{"in","out","activation"}...],
                                      "recipe": {...}}
    then                 parameter payload, float64 little-endian, per layer:
                         weights row-major, then bias
    last 32 bytes        SHA-256 over everything before it

Save followed by load is the identity on parameters, bit for bit. Loading
validates magic, version, length, and checksum before building any model.
"""

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .nn import Classifier, DenseLayer

MAGIC = b"ADVPOSTC"
VERSION = 1
_DIGEST_SIZE = 32


class CheckpointError(ValueError):
    """Base class for unreadable checkpoints."""


class BadMagic(CheckpointError):
    pass


class UnsupportedVersion(CheckpointError):
    pass


class TruncatedCheckpoint(CheckpointError):
    pass


class CorruptChecksum(CheckpointError):
    pass


def save_checkpoint(model: Classifier, recipe: dict, path) -> Path:
    """Serialize the model and its training-recipe metadata."""
    header = json.dumps(
        {
            "layers": [
                {"in": l.in_dim, "out": l.out_dim, "activation": l.activation}
                for l in model.layers
            ],
            "recipe": recipe,
        },
        sort_keys=True,
    ).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(arr, dtype="<f8").tobytes()
        for l in model.layers
        for arr in (l.weights, l.bias)
    )
    body = MAGIC + struct.pack("<II", VERSION, len(header)) + header + payload
    data = body + hashlib.sha256(body).digest()
    path = Path(path)
    path.write_bytes(data)
    return path


def _require(condition: bool, exc_type, message: str):
    if not condition:
        raise exc_type(message)


def load_checkpoint(path) -> Classifier:
    """Reconstruct the saved model; raises before building on any corruption."""
    data = Path(path).read_bytes()
    _require(len(data) >= 16 + _DIGEST_SIZE, TruncatedCheckpoint,
             f"{path}: {len(data)} bytes is too short for a checkpoint")
    _require(data[:8] == MAGIC, BadMagic,
             f"{path}: bad magic {data[:8]!r}, expected {MAGIC!r}")
    version, header_len = struct.unpack_from("<II", data, 8)
    _require(version == VERSION, UnsupportedVersion,
             f"{path}: unsupported checkpoint version {version}")

    body, digest = data[:-_DIGEST_SIZE], data[-_DIGEST_SIZE:]
    _require(hashlib.sha256(body).digest() == digest, CorruptChecksum,
             f"{path}: checksum mismatch, checkpoint is corrupt")

    _require(16 + header_len <= len(body), TruncatedCheckpoint,
             f"{path}: header of {header_len} bytes exceeds file size")
    try:
        header = json.loads(body[16:16 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from exc

    expected = sum(
        (spec["out"] * spec["in"] + spec["out"]) * 8 for spec in header["layers"]
    )
    payload = body[16 + header_len:]
    _require(len(payload) == expected, TruncatedCheckpoint,
             f"{path}: payload is {len(payload)} bytes, expected {expected}")

    layers = []
    offset = 0
    for spec in header["layers"]:
        out_dim, in_dim = spec["out"], spec["in"]
        w_bytes = out_dim * in_dim * 8
        weights = np.frombuffer(payload, dtype="<f8", count=out_dim * in_dim,
                                offset=offset).reshape(out_dim, in_dim)
        offset += w_bytes
        bias = np.frombuffer(payload, dtype="<f8", count=out_dim, offset=offset)
        offset += out_dim * 8
        layers.append(DenseLayer(weights, bias, spec["activation"]))
    return Classifier(layers)


def checkpoint_metadata(path) -> dict:
    """Recipe metadata stored alongside the parameters (validated load)."""
    data = Path(path).read_bytes()
    _require(len(data) >= 16 + _DIGEST_SIZE, TruncatedCheckpoint,
             f"{path}: {len(data)} bytes is too short for a checkpoint")
    _require(data[:8] == MAGIC, BadMagic,
             f"{path}: bad magic {data[:8]!r}, expected {MAGIC!r}")
    version, header_len = struct.unpack_from("<II", data, 8)
    _require(version == VERSION, UnsupportedVersion,
             f"{path}: unsupported checkpoint version {version}")
    body, digest = data[:-_DIGEST_SIZE], data[-_DIGEST_SIZE:]
    _require(hashlib.sha256(body).digest() == digest, CorruptChecksum,
             f"{path}: checksum mismatch, checkpoint is corrupt")
    header = json.loads(body[16:16 + header_len].decode("utf-8"))
    return header["recipe"]
