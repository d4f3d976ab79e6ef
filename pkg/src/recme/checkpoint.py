"""Model checkpoint container.

Layout: magic "RSID", version u16 LE, u32 LE header length, a JSON text
header (architecture, parameter manifest with names/shapes/byte offsets,
speaker registry), the raw little-endian float64 parameter arrays in
manifest order, and finally a CRC-32 of everything before it. Bit-exact
roundtrip: loading and re-running the model reproduces outputs exactly.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .model import InvalidSpec, ModelSpec, ModelState

MAGIC = b"RSID"
VERSION = 1


class BadMagic(ValueError):
    """Not a checkpoint file."""


class VersionMismatch(ValueError):
    """Checkpoint written by an incompatible format version."""


class ChecksumMismatch(ValueError):
    """Checkpoint bytes corrupted or truncated."""


class IoFailure(OSError):
    """Checkpoint could not be read or written."""


def state_to_bytes(state: ModelState) -> bytes:
    manifest = []
    blobs = []
    offset = 0
    for name, tensor in state.params.items():
        blob = np.ascontiguousarray(tensor, dtype="<f8").tobytes()
        manifest.append({"name": name, "shape": list(tensor.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {
            "spec": {
                "num_classes": state.spec.num_classes,
                "input_len": state.spec.input_len,
                "block_filters": list(state.spec.block_filters),
                "dense_sizes": list(state.spec.dense_sizes),
                "dropout_rate": state.spec.dropout_rate,
            },
            "params": manifest,
            "registry": list(state.registry),
        }
    ).encode()
    body = MAGIC + struct.pack("<HI", VERSION, len(header)) + header + b"".join(blobs)
    return body + struct.pack("<I", zlib.crc32(body))


def state_from_bytes(data: bytes) -> ModelState:
    if len(data) < len(MAGIC) + 6 or data[: len(MAGIC)] != MAGIC:
        raise BadMagic("not a checkpoint (bad magic)")
    if len(data) < len(MAGIC) + 6 + 4 or zlib.crc32(data[:-4]) != struct.unpack("<I", data[-4:])[0]:
        raise ChecksumMismatch("checkpoint corrupted or truncated")
    version, header_len = struct.unpack_from("<HI", data, len(MAGIC))
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, expected {VERSION}")
    header_start = len(MAGIC) + 6
    try:
        header = json.loads(data[header_start : header_start + header_len])
    except ValueError as exc:
        raise ChecksumMismatch(f"unparseable header: {exc}") from exc
    spec = ModelSpec(
        num_classes=header["spec"]["num_classes"],
        input_len=header["spec"]["input_len"],
        block_filters=tuple(header["spec"]["block_filters"]),
        dense_sizes=tuple(header["spec"]["dense_sizes"]),
        dropout_rate=header["spec"]["dropout_rate"],
    )
    data_start = header_start + header_len
    params: dict[str, np.ndarray] = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        begin = data_start + entry["offset"]
        end = begin + count * 8
        if end > len(data) - 4:
            raise ChecksumMismatch(f"parameter {entry['name']} extends past the file")
        params[entry["name"]] = (
            np.frombuffer(data[begin:end], dtype="<f8").reshape(shape).copy()
        )
    try:
        return ModelState(spec, params, list(header["registry"]))
    except InvalidSpec as exc:
        raise ChecksumMismatch(f"inconsistent checkpoint contents: {exc}") from exc


def save_checkpoint(state: ModelState, path) -> Path:
    path = Path(path)
    try:
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_bytes(state_to_bytes(state))
        tmp.replace(path)  # readers never observe a half-written file
    except OSError as exc:
        raise IoFailure(f"cannot write checkpoint {path}: {exc}") from exc
    return path


def load_checkpoint(path) -> ModelState:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read checkpoint {path}: {exc}") from exc
    return state_from_bytes(data)
