"""Tensor helpers, counter-based random streams and weight initialization.

Tensors are plain ``numpy.ndarray`` values (C order, float32 or float64).
"""

import hashlib
import math

import numpy as np

from .errors import ShapeError

DTYPES = {"f32": np.float32, "f64": np.float64}


def as_dtype(dtype):
    if isinstance(dtype, str):
        try:
            return np.dtype(DTYPES[dtype])
        except KeyError:
            raise ValueError(f"unknown dtype {dtype!r}; expected one of {sorted(DTYPES)}") from None
    dt = np.dtype(dtype)
    if dt not in (np.float32, np.float64):
        raise ValueError(f"unsupported dtype {dt}")
    return dt


def tensor_create(shape, fill=0.0, dtype="f64"):
    """Build a tensor of ``shape`` from a scalar fill or a flat list of values."""
    shape = tuple(int(d) for d in shape)
    if not shape or any(d < 1 for d in shape):
        raise ShapeError(f"dimensions must be >= 1, got {shape}")
    dt = as_dtype(dtype)
    if np.isscalar(fill):
        return np.full(shape, fill, dtype=dt)
    values = np.asarray(fill, dtype=dt).ravel()
    if values.size != math.prod(shape):
        raise ShapeError(f"{values.size} values cannot fill shape {shape}")
    return values.reshape(shape).copy()


def matmul(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


class Rng:
    """Counter-based generator keyed by a 64-bit seed.

    ``child(*labels)`` derives an independent, reproducible stream for a
    purpose such as ``("augment", epoch, index)``; the result never depends
    on how many other streams were drawn before it.
    """

    def __init__(self, seed, labels=()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.labels = tuple(_label_int(x) for x in labels)
        ss = np.random.SeedSequence([self.seed, *self.labels])
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, *labels):
        return Rng(self.seed, self.labels + tuple(_label_int(x) for x in labels))

    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def random(self, size=None):
        return self.generator.random(size)

    def permutation(self, n):
        return self.generator.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, labels={self.labels})"


def _label_int(x):
    if isinstance(x, str):
        # stable across processes, unlike hash()
        return int.from_bytes(hashlib.blake2b(x.encode("utf-8"), digest_size=8).digest(), "little")
    return int(x) & 0xFFFFFFFFFFFFFFFF


def kaiming_uniform_init(shape, fan_in, rng, dtype="f64"):
    """Samples i.i.d. from U(-b, b) with b = sqrt(6 / fan_in)."""
    if fan_in < 1:
        raise ValueError(f"fan_in must be >= 1, got {fan_in}")
    shape = tuple(int(d) for d in shape)
    if any(d < 1 for d in shape):
        raise ShapeError(f"dimensions must be >= 1, got {shape}")
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, shape).astype(as_dtype(dtype))
