"""Binary checkpoint format for a ParamStore and an optional pruning mask.

Layout (all integers unsigned 32-bit little-endian)::

    b"HSNW" | version | layer_count
    per layer: name_len | name (utf-8) | rank | dims[rank] | float32 LE values
    optional:  mask_bits | ceil(mask_bits / 8) bytes, bits packed LSB first

Layers of rank >= 2 are restored as prunable, vectors as non-prunable. The mask's
pruning rate is restored as pruned_count / D.
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import FormatError
from .nn import Layer, ParamStore
from .pruning import SparsityMask

MAGIC = b"HSNW"
VERSION = 1


def encode_checkpoint(params: ParamStore, mask: SparsityMask = None) -> bytes:
    out = [MAGIC, struct.pack("<II", VERSION, len(params.layers))]
    for layer in params.layers:
        name = layer.name.encode("utf-8")
        shape = layer.values.shape
        out.append(struct.pack(f"<I{len(name)}sI{len(shape)}I", len(name), name, len(shape), *shape))
        out.append(np.ascontiguousarray(layer.values, dtype="<f4").tobytes())
    if mask is not None:
        out.append(struct.pack("<I", mask.size))
        out.append(np.packbits(mask.bits, bitorder="little").tobytes())
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise FormatError(f"checkpoint truncated at byte {self.pos} (needed {n} more)")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    @property
    def exhausted(self):
        return self.pos == len(self.buf)


def decode_checkpoint(buf: bytes):
    r = _Reader(buf)
    if r.take(4) != MAGIC:
        raise FormatError("not a checkpoint (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    layers = []
    for _ in range(r.u32()):
        try:
            name = r.take(r.u32()).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError("layer name is not utf-8") from None
        shape = tuple(r.u32() for _ in range(r.u32()))
        n = int(np.prod(shape, dtype=np.int64))
        values = np.frombuffer(r.take(4 * n), dtype="<f4").astype(np.float32).reshape(shape)
        layers.append(Layer(name, values, prunable=len(shape) >= 2))
    params = ParamStore(layers)
    mask = None
    if not r.exhausted:
        nbits = r.u32()
        if nbits != params.num_prunable:
            raise FormatError(f"mask has {nbits} bits, model has {params.num_prunable} prunable weights")
        packed = np.frombuffer(r.take((nbits + 7) // 8), dtype=np.uint8)
        bits = np.unpackbits(packed, count=nbits, bitorder="little").astype(bool)
        mask = SparsityMask(bits, float(nbits - bits.sum()) / nbits if nbits else 0.0)
        if not r.exhausted:
            raise FormatError("trailing bytes after mask section")
    return params, mask


def save_checkpoint(path, params: ParamStore, mask: SparsityMask = None) -> None:
    with open(path, "wb") as f:
        f.write(encode_checkpoint(params, mask))


def load_checkpoint(path):
    """Return ``(params, mask or None)``."""
    with open(path, "rb") as f:
        return decode_checkpoint(f.read())
