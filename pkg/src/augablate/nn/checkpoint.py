"""Binary checkpoint container for named tensors.

Layout, all integers little-endian::

    magic     4 bytes   b"AUGB"
    version   uint32    currently 1
    count     uint64    number of tensors
    then per tensor:
      name_len  uint32, name  UTF-8 bytes
      rank      uint32, extents  rank x uint64
      values    prod(extents) x float32
"""

import struct

import numpy as np

from ..errors import FormatError

MAGIC = b"AUGB"
VERSION = 1


def save_tensors(path, tensors):
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr)
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def _read(f, n):
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError("truncated checkpoint")
    return buf


def load_tensors(path):
    out = {}
    with open(path, "rb") as f:
        if _read(f, 4) != MAGIC:
            raise FormatError(f"{path}: not an AUGB checkpoint")
        version, count = struct.unpack("<IQ", _read(f, 12))
        if version != VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read(f, 4))
            name = _read(f, nlen).decode("utf-8")
            (rank,) = struct.unpack("<I", _read(f, 4))
            shape = struct.unpack(f"<{rank}Q", _read(f, 8 * rank))
            size = int(np.prod(shape, dtype=np.int64))
            data = np.frombuffer(_read(f, 4 * size), dtype="<f4").astype(np.float32)
            out[name] = data.reshape(shape)
        if f.read(1):
            raise FormatError(f"{path}: trailing bytes after {count} tensors")
    return out


def save_network(path, net):
    save_tensors(path, net.state_dict())


def load_network(path, net):
    net.load_state_dict(load_tensors(path))
    return net
