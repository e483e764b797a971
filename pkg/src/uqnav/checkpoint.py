"""Portable binary checkpoints ("UQP1" format).

Layout, all integers little-endian:

    magic b"UQP1" | u32 version=1 | u32 layer_count
    per layer: u32 in_dim | u32 out_dim | u8 activation code
    payload:   per layer, weights (row-major) then biases, little-endian f32

A file may hold several networks as back-to-back records (the perception
checkpoint stores encoder, image decoder and pose head in one file).
Values are stored at 32-bit precision and widened to float64 on load, so
save->load->save is byte-exact and load(save(p)) == p whenever p sits on
the float32 lattice (see nn.quantize_f32).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .nn import ACT_CODE, ACTIVATIONS, Mlp

MAGIC = b"UQP1"
VERSION = 1


class CheckpointError(Exception):
    """Base class for checkpoint file problems."""


class MagicMismatchError(CheckpointError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


class CheckpointFormatError(CheckpointError):
    pass


def _encode_mlp(mlp: Mlp) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(mlp.weights))]
    for w, act in zip(mlp.weights, mlp.activations):
        out_dim, in_dim = w.shape
        parts.append(struct.pack("<IIB", in_dim, out_dim, ACT_CODE[act]))
    for w, b in zip(mlp.weights, mlp.biases):
        parts.append(np.ascontiguousarray(w, dtype="<f4").tobytes())
        parts.append(np.ascontiguousarray(b, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedCheckpointError(
                f"{self.path}: needed {n} bytes at offset {self.pos}, "
                f"file has {len(self.data)}"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    @property
    def exhausted(self) -> bool:
        return self.pos == len(self.data)


def _decode_mlp(r: _Reader) -> Mlp:
    magic = r.take(4)
    if magic != MAGIC:
        raise MagicMismatchError(f"{r.path}: bad magic {magic!r}, expected {MAGIC!r}")
    version, n_layers = struct.unpack("<II", r.take(8))
    if version != VERSION:
        raise VersionMismatchError(f"{r.path}: version {version}, expected {VERSION}")
    if n_layers == 0:
        raise CheckpointFormatError(f"{r.path}: zero layers")
    dims, acts = [], []
    for _ in range(n_layers):
        in_dim, out_dim, code = struct.unpack("<IIB", r.take(9))
        if in_dim == 0 or out_dim == 0:
            raise CheckpointFormatError(f"{r.path}: zero layer dimension")
        if code >= len(ACTIVATIONS):
            raise CheckpointFormatError(f"{r.path}: unknown activation code {code}")
        dims.append((in_dim, out_dim))
        acts.append(ACTIVATIONS[code])
    for (in_dim, _), (_, prev_out) in zip(dims[1:], dims[:-1]):
        if in_dim != prev_out:
            raise CheckpointFormatError(
                f"{r.path}: layer input {in_dim} != previous output {prev_out}"
            )
    weights, biases = [], []
    for in_dim, out_dim in dims:
        w = np.frombuffer(r.take(4 * in_dim * out_dim), dtype="<f4")
        b = np.frombuffer(r.take(4 * out_dim), dtype="<f4")
        weights.append(w.astype(np.float64).reshape(out_dim, in_dim))
        biases.append(b.astype(np.float64))
    return Mlp(tuple(weights), tuple(biases), tuple(acts))


def save_mlps(path, mlps) -> None:
    """Write one or more networks as concatenated records."""
    data = b"".join(_encode_mlp(m) for m in mlps)
    Path(path).write_bytes(data)


def load_mlps(path, expected_count: int | None = None) -> list:
    data = Path(path).read_bytes()
    reader = _Reader(data, path)
    mlps = []
    while not reader.exhausted:
        mlps.append(_decode_mlp(reader))
    if expected_count is not None and len(mlps) != expected_count:
        raise CheckpointFormatError(
            f"{path}: holds {len(mlps)} networks, expected {expected_count}"
        )
    return mlps


def save_checkpoint(params: Mlp, path) -> None:
    save_mlps(path, [params])


def load_checkpoint(path) -> Mlp:
    return load_mlps(path, expected_count=1)[0]
