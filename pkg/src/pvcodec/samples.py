"""PVS training-sample dumps: the (context, symbol) pairs an encoder codes.

Record stream layout (little-endian, like the other pvcodec formats):

    magic "PVS1" | u32 version | u8 N | u8 D | u32 K | u64 sample count
    | per sample: 64 x i8 voxel window (C order, x-major)
    | K x 3 f32 neighbor offsets | 4 x f32 node coordinate | u8 label.

Sample count always equals the stream's symbol count; contexts are the
encoder-side (equivalently decoder-side) causal contexts, so a model trained
on them sees exactly the coding-time input distribution.
"""

from __future__ import annotations

import struct

import numpy as np

from .codec import replay_contexts
from .errors import FormatError
from .pcio import PointCloud

PVS_MAGIC = b"PVS1"
PVS_VERSION = 1
_HEAD = "<4sIBBIQ"


def sample_dtype(k: int) -> np.dtype:
    return np.dtype(
        [("vox", "<i1", (64,)), ("pc", "<f4", (k, 3)), ("coord", "<f4", (4,)), ("label", "<u1")]
    )


def dump_samples(path, pc: PointCloud, depth: int, k: int) -> int:
    """Stream every coding context of (pc, depth) to a PVS file; returns count."""
    dt = sample_dtype(k)
    count = 0
    with open(path, "wb") as fh:
        fh.write(struct.pack(_HEAD, PVS_MAGIC, PVS_VERSION, pc.precision, depth, k, 0))
        rec = np.zeros(1, dtype=dt)
        for ctx, bit in replay_contexts(pc, depth, k):
            rec["vox"][0] = ctx.vox.flat()
            rec["pc"][0] = ctx.pc.neighbors
            rec["coord"][0] = ctx.coord.values
            rec["label"][0] = bit
            fh.write(rec.tobytes())
            count += 1
        fh.seek(struct.calcsize(_HEAD) - 8)
        fh.write(struct.pack("<Q", count))
    return count


def read_samples(path):
    """Load a PVS file; returns (meta dict, structured array of samples)."""
    with open(path, "rb") as fh:
        data = fh.read()
    head_size = struct.calcsize(_HEAD)
    if len(data) < head_size:
        raise FormatError(f"{path}: truncated PVS header")
    magic, version, n, d, k, count = struct.unpack_from(_HEAD, data)
    if magic != PVS_MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {PVS_MAGIC!r}")
    if version != PVS_VERSION:
        raise FormatError(f"{path}: unsupported PVS version {version}")
    dt = sample_dtype(k)
    expected = head_size + count * dt.itemsize
    if len(data) != expected:
        raise FormatError(f"{path}: {len(data)} bytes, expected {expected} for {count} samples")
    samples = np.frombuffer(data, dtype=dt, count=count, offset=head_size)
    return {"precision": n, "depth": d, "k": k, "count": count}, samples
