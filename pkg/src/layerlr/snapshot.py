"""Byte-level snapshot/restore of a NetworkState.

Layout (all little-endian):
    magic b"LLRS" | version u16 | layer_count u16
    per layer: weight shape (ndim u8, dims u32...), bias shape (ndim u8,
    dims u32...), then float32 arrays in order W, b, m_w, m_b, v_w, v_b
    step counter u64

The canonical state dtype is float32; snapshotting such a state and
restoring it is bitwise lossless. Other dtypes are cast to float32 on write.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import SnapshotError
from .nets import NetworkState

MAGIC = b"LLRS"
VERSION = 1


def snapshot(state: NetworkState) -> bytes:
    parts = [MAGIC, struct.pack("<HH", VERSION, state.num_layers)]
    for i in range(state.num_layers):
        for shaped in (state.weights[i], state.biases[i]):
            parts.append(struct.pack("<B", shaped.ndim))
            parts.append(struct.pack(f"<{shaped.ndim}I", *shaped.shape))
        for arr in (
            state.weights[i], state.biases[i],
            state.m_w[i], state.m_b[i],
            state.v_w[i], state.v_b[i],
        ):
            parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    parts.append(struct.pack("<Q", state.step))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise SnapshotError(
                f"truncated snapshot: wanted {n} bytes at offset {self.pos}, "
                f"have {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, shape) -> np.ndarray:
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(4 * count)
        return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def restore(data: bytes) -> NetworkState:
    r = _Reader(data)
    if r.take(4) != MAGIC:
        raise SnapshotError("bad snapshot magic")
    version, layer_count = r.unpack("<HH")
    if version != VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    weights, biases, m_w, m_b, v_w, v_b = [], [], [], [], [], []
    for _ in range(layer_count):
        (w_ndim,) = r.unpack("<B")
        w_shape = r.unpack(f"<{w_ndim}I")
        (b_ndim,) = r.unpack("<B")
        b_shape = r.unpack(f"<{b_ndim}I")
        weights.append(r.array(w_shape))
        biases.append(r.array(b_shape))
        m_w.append(r.array(w_shape))
        m_b.append(r.array(b_shape))
        v_w.append(r.array(w_shape))
        v_b.append(r.array(b_shape))
    (step,) = r.unpack("<Q")
    if r.pos != len(data):
        raise SnapshotError(f"{len(data) - r.pos} trailing bytes after snapshot payload")
    return NetworkState(
        weights=weights, biases=biases, m_w=m_w, m_b=m_b, v_w=v_w, v_b=v_b, step=step
    )
