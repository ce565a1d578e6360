"""Parameter containers, layers, costing helpers and the weight file format."""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

MAGIC = b"LNAVWTS\x00"
FORMAT_VERSION = 1


class Module:
    """Base class: parameters are discovered from attributes in insertion order."""

    def named_parameters(self, prefix: str = ""):
        for key, val in vars(self).items():
            if key.startswith("_"):
                continue
            name = f"{prefix}{key}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ad.ShapeError("load_state_dict", p.shape, arr.shape, detail=name)
            p.data = arr.copy()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def uniform_param(rng: np.random.Generator, shape, fan_in: int, gain: float = 1.0, name=None) -> Tensor:
    bound = gain / np.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, gain: float = 1.0):
        self.weight = uniform_param(rng, (n_in, n_out), n_in, gain)
        self.bias = uniform_param(rng, (n_out,), n_in, gain)

    def forward(self, x):
        return ad.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, kernel, rng: np.random.Generator, pad=None):
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        fan_in = c_in * kh * kw
        self.weight = uniform_param(rng, (c_out, c_in, kh, kw), fan_in)
        self.bias = uniform_param(rng, (c_out,), fan_in)
        self._pad = pad if pad is not None else (kh // 2, kw // 2)

    def forward(self, x):
        return ad.conv2d(x, self.weight, stride=1, pad=self._pad, bias=self.bias)


def count_params(model: Module) -> int:
    return int(sum(p.size for p in model.parameters()))


def count_flops(model: Module, *input_shapes) -> int:
    """FLOPs of one forward pass on zero inputs of the given shapes.

    Multiply-adds count as two FLOPs (linear: 2*in*out per row; conv:
    2*k*k*C_in per output element).  Elementwise ops count one per element.
    """
    inputs = [Tensor(np.zeros(s)) for s in input_shapes]
    with ad.no_grad(), ad.flop_counter() as counter:
        model(*inputs)
    return counter[0]


def save_weights(path, tensors: dict[str, np.ndarray]) -> None:
    """Write named float64 tensors in the flat little-endian binary format."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def load_weights(path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[: len(MAGIC)] != MAGIC:
        raise ValueError(f"{path}: not a weight file (bad magic)")
    off = len(MAGIC)
    version, count = struct.unpack_from("<II", data, off)
    off += 8
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported weight format version {version}")
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", data, off)
        off += 4
        name = data[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}Q", data, off)
        off += 8 * rank
        n = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape)
        off += 8 * n
        out[name] = arr.astype(np.float64)
    return out
