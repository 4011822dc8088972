"""Byte-exact readers/writers for the codec's interchange formats.

The codec side owns these contracts (PVS sample dumps, PVW weight files, PVF
parity fixtures); this module reimplements them from the format documentation
so the trainer never links against the codec package.  All integers are
little-endian.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

PVS_MAGIC = b"PVS1"
PVW_MAGIC = b"PVW1"
PVF_MAGIC = b"PVF1"
VERSION = 1
ARCH_HYBRID_V1 = 1

_PVS_HEAD = "<4sIBBIQ"
_PVF_HEAD = "<4sIIIQI"


def sample_dtype(k: int) -> np.dtype:
    return np.dtype(
        [("vox", "<i1", (64,)), ("pc", "<f4", (k, 3)), ("coord", "<f4", (4,)), ("label", "<u1")]
    )


def read_pvs(path):
    """Load a PVS sample dump; returns (meta dict, structured sample array)."""
    with open(path, "rb") as fh:
        data = fh.read()
    head = struct.calcsize(_PVS_HEAD)
    magic, version, n, d, k, count = struct.unpack_from(_PVS_HEAD, data)
    if magic != PVS_MAGIC or version != VERSION:
        raise ValueError(f"{path}: not a readable PVS file (magic {magic!r}, version {version})")
    dt = sample_dtype(k)
    if len(data) != head + count * dt.itemsize:
        raise ValueError(f"{path}: size mismatch for {count} samples")
    return {"precision": n, "depth": d, "k": k, "count": count}, np.frombuffer(
        data, dtype=dt, count=count, offset=head
    )


def write_pvw(path, arrays: dict, k: int, arch_id: int = ARCH_HYBRID_V1) -> int:
    """Serialize name -> float32 array in PVW layout; returns the 64-bit file hash."""
    out = bytearray()
    out += PVW_MAGIC
    out += struct.pack("<IIII", VERSION, arch_id, k, len(arrays))
    for name, arr in arrays.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<BB", 0, arr.ndim)
        out += struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    data = bytes(out)
    with open(path, "wb") as fh:
        fh.write(data)
    return file_hash_bytes(data)


def read_pvw(path):
    """Load a PVW file; returns (meta dict incl. the 64-bit hash, name -> array)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != PVW_MAGIC:
        raise ValueError(f"{path}: bad PVW magic {data[:4]!r}")
    version, arch_id, k, count = struct.unpack_from("<IIII", data, 4)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported PVW version {version}")
    pos = 20
    arrays = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos: pos + nlen].decode("utf-8")
        pos += nlen
        dtype, rank = struct.unpack_from("<BB", data, pos)
        pos += 2
        if dtype != 0:
            raise ValueError(f"{path}: array {name!r} has unsupported dtype {dtype}")
        dims = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        arrays[name] = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(dims)
        pos += 4 * n
    if pos != len(data):
        raise ValueError(f"{path}: {len(data) - pos} trailing bytes")
    meta = {"arch_id": arch_id, "k": k, "version": version, "hash": file_hash_bytes(data)}
    return meta, arrays


def file_hash_bytes(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def file_hash(path) -> int:
    with open(path, "rb") as fh:
        return file_hash_bytes(fh.read())


def parity_dtype(k: int) -> np.dtype:
    return np.dtype(
        [
            ("vox", "<i1", (64,)),
            ("pc", "<f4", (k, 3)),
            ("coord", "<f4", (4,)),
            ("e_pc", "<f4", (1024,)),
            ("e_vox", "<f4", (512,)),
            ("p_head", "<f4"),
            ("p_predict", "<f4"),
        ]
    )


def write_pvf(path, records: np.ndarray, k: int, weights_hash: int,
              arch_id: int = ARCH_HYBRID_V1) -> None:
    """Write parity fixtures: context inputs plus reference forward outputs."""
    assert records.dtype == parity_dtype(k)
    with open(path, "wb") as fh:
        fh.write(struct.pack(_PVF_HEAD, PVF_MAGIC, VERSION, arch_id, k, weights_hash, len(records)))
        fh.write(records.tobytes())


def read_pvf(path):
    with open(path, "rb") as fh:
        data = fh.read()
    magic, version, arch_id, k, whash, count = struct.unpack_from(_PVF_HEAD, data)
    if magic != PVF_MAGIC or version != VERSION:
        raise ValueError(f"{path}: not a readable PVF file")
    dt = parity_dtype(k)
    off = struct.calcsize(_PVF_HEAD)
    if len(data) != off + count * dt.itemsize:
        raise ValueError(f"{path}: size mismatch")
    meta = {"arch_id": arch_id, "k": k, "weights_hash": whash, "count": count}
    return meta, np.frombuffer(data, dtype=dt, count=count, offset=off)
