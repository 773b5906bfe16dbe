"""Binary checkpoint format.

Layout, little-endian throughout::

    b"SCNN"  magic
    u16      format version (1)
    u32      metadata length, then that many bytes of UTF-8 JSON
    u32      tensor count
    per tensor:
      u16 name length, name bytes (UTF-8)
      u8  dtype code (0 = f32, 1 = f64)
      u8  ndim, then ndim x u32 dims
      raw element data, C order

Metadata echoes the model spec, so ``load_checkpoint`` rebuilds the graph
without any other input.
"""

import json
import os
import struct
import tempfile

import numpy as np

from .errors import FormatError, UnsupportedVersionError
from .model import ModelGraph, ModelSpec

MAGIC = b"SCNN"
VERSION = 1
_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def encode_checkpoint(graph, meta=None):
    meta = dict(meta or {})
    meta.update({
        "spec": graph.spec.to_dict(),
        "dtype": "f32" if graph.dtype == np.float32 else "f64",
        "init": "kaiming_uniform, zero output layer",
        "init_seed": graph.seed,
    })
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    state = graph.state()
    parts = [MAGIC, struct.pack("<HI", VERSION, len(meta_bytes)), meta_bytes,
             struct.pack("<I", len(state))]
    for name, arr in state:
        arr = np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<"))
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)) + nb)
        parts.append(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def save_checkpoint(graph, meta, path):
    """Write atomically: a temp file in the target directory is renamed into place."""
    data = encode_checkpoint(graph, meta)
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".ckpt-", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise FormatError(f"truncated checkpoint while reading {what}", offset=self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt, what):
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size, what))


def decode_checkpoint(data):
    """Parse checkpoint bytes into a fresh ModelGraph; nothing is returned on error."""
    r = _Reader(data)
    if r.take(4, "magic") != MAGIC:
        raise FormatError("bad magic: not a checkpoint file", offset=0)
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported checkpoint version {version} (expected {VERSION})", offset=4)
    (meta_len,) = r.unpack("<I", "metadata length")
    meta_at = r.pos
    try:
        meta = json.loads(r.take(meta_len, "metadata").decode("utf-8"))
        spec = ModelSpec.from_dict(meta["spec"])
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(f"unreadable metadata: {exc}", offset=meta_at) from None

    tensors = {}
    (count,) = r.unpack("<I", "tensor count")
    for _ in range(count):
        at = r.pos
        (nlen,) = r.unpack("<H", "tensor name length")
        name = r.take(nlen, "tensor name").decode("utf-8", errors="replace")
        code, ndim = r.unpack("<BB", f"header of {name}")
        if code not in _CODE_DTYPES:
            raise FormatError(f"unknown dtype code {code} for {name}", offset=at)
        dims = r.unpack(f"<{ndim}I", f"dims of {name}")
        dt = _CODE_DTYPES[code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        raw = r.take(nbytes, f"data of {name}")
        tensors[name] = np.frombuffer(raw, dtype=dt).reshape(dims)
    if r.pos != len(data):
        raise FormatError("trailing bytes after last tensor", offset=r.pos)

    graph = ModelGraph(spec, seed=meta.get("init_seed", 0), dtype=meta.get("dtype", "f32"))
    expected = graph.state()
    if [n for n, _ in expected] != list(tensors):
        raise FormatError("tensor names do not match the model spec")
    for name, arr in expected:
        src = tensors[name]
        if src.shape != arr.shape:
            raise FormatError(f"shape mismatch for {name}: {src.shape} vs {arr.shape}")
        arr[...] = src
    graph.metadata = meta
    return graph


def load_checkpoint(path):
    with open(path, "rb") as fh:
        data = fh.read()
    return decode_checkpoint(data)
