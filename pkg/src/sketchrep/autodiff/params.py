"""Named parameter store, fan-in initialization, and the binary checkpoint
format (magic "SFCK").
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import TopologyMismatch
from .tensor import Tensor

_MAGIC = b"SFCK"
_VERSION = 1
_DTYPE_TAGS = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}
_TAG_DTYPES = {v: k for k, v in _DTYPE_TAGS.items()}


class ParameterSet:
    """Insertion-ordered map of trainable Tensors with unique names."""

    def __init__(self):
        self._params = {}

    def add(self, name, values):
        if name in self._params:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.asarray(values), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __len__(self):
        return len(self._params)

    def __iter__(self):
        return iter(self._params)

    def names(self):
        return list(self._params)

    def items(self):
        return self._params.items()

    def tensors(self):
        return self._params.values()

    def zero_grads(self):
        for t in self._params.values():
            t.grad = np.zeros_like(t.values)

    def with_prefix(self, prefix):
        """Sub-view as a list of (name, tensor) whose names start with prefix."""
        return [(n, t) for n, t in self._params.items() if n.startswith(prefix)]

    def subset(self, prefixes):
        """ParameterSet sharing the tensors whose names match any prefix."""
        out = ParameterSet()
        for n, t in self._params.items():
            if any(n.startswith(p) for p in prefixes):
                out._params[n] = t
        return out

    def astype(self, dtype):
        out = ParameterSet()
        for n, t in self._params.items():
            out.add(n, t.values.astype(dtype))
        return out

    def copy(self):
        out = ParameterSet()
        for n, t in self._params.items():
            out.add(n, t.values.copy())
        return out

    def total_sq_norm(self):
        return float(sum((t.values.astype(np.float64) ** 2).sum() for t in self._params.values()))


def uniform_fan_in(rng, shape, fan_in, dtype=np.float64):
    """U(-1/sqrt(fan_in), 1/sqrt(fan_in)) initialization."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def save_checkpoint(path, params):
    """magic, version u32, then per-parameter
    (name_len u32, name, dtype tag u8, rank u32, dims u32..., raw LE values)."""
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        for name, t in params.items():
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<B", _DTYPE_TAGS[t.values.dtype]))
            f.write(struct.pack("<I", t.values.ndim))
            for d in t.values.shape:
                f.write(struct.pack("<I", d))
            f.write(t.values.astype(t.values.dtype.newbyteorder("<"), copy=False).tobytes())


def load_checkpoint(path):
    params = ParameterSet()
    with open(path, "rb") as f:
        if f.read(4) != _MAGIC:
            raise TopologyMismatch(f"{path}: not a parameter checkpoint")
        (version,) = struct.unpack("<I", f.read(4))
        if version != _VERSION:
            raise TopologyMismatch(f"{path}: unsupported checkpoint version {version}")
        while True:
            head = f.read(4)
            if not head:
                break
            (name_len,) = struct.unpack("<I", head)
            name = f.read(name_len).decode("utf-8")
            (tag,) = struct.unpack("<B", f.read(1))
            (rank,) = struct.unpack("<I", f.read(4))
            dims = struct.unpack(f"<{rank}I", f.read(4 * rank)) if rank else ()
            dtype = _TAG_DTYPES[tag]
            count = int(np.prod(dims)) if dims else 1
            values = np.frombuffer(f.read(count * dtype.itemsize), dtype=dtype.newbyteorder("<"))
            params.add(name, values.astype(dtype).reshape(dims))
    return params
