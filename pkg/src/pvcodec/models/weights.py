"""PVW weight-file format and the network's parameter inventory.

Layout (all integers little-endian):

    magic "PVW1" | u32 schema version | u32 architecture id | u32 K
    | u32 array count | per array: u16 name length, UTF-8 name,
    u8 dtype (0 = float32 LE), u8 rank, u32 dims[rank], row-major payload.

The architecture id pins every array name and shape, including the 3D-conv
hyperparameters of the voxel encoder, so incompatible weight files are
rejected by name rather than silently misread.  ``synthetic_weights`` fills
the full inventory from a counter-based splitmix64 stream: bit-identical on
every platform, which lets tests regenerate a fixture weight file from a
committed seed instead of committing hundreds of megabytes.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field

import numpy as np

from ..errors import FormatError, ModelError

PVW_MAGIC = b"PVW1"
PVW_VERSION = 1
ARCH_HYBRID_V1 = 1

BN_EPS = 1e-5  # inference-mode normalization epsilon, shared with the trainer

PC_WIDTHS = [(3, 64), (64, 64), (64, 128), (128, 256)]
PC_FUSED = sum(w for _, w in PC_WIDTHS)          # 512
PC_FEATURES = 1024
VOX_CHANNELS = [(1, 32), (32, 64), (64, 128), (128, 256)]
VOX_FEATURES = 512
COORD_FEATURES = 512
HEAD_WIDTH = PC_FEATURES + VOX_FEATURES + COORD_FEATURES  # 2048
RES_BLOCKS = 5


def architecture_arrays(arch_id: int = ARCH_HYBRID_V1) -> dict:
    """name -> shape inventory for one architecture id."""
    if arch_id != ARCH_HYBRID_V1:
        raise ModelError(f"unknown architecture id {arch_id}")
    spec: dict = {}

    def bn(prefix, width):
        for stat in ("gamma", "beta", "mean", "var"):
            spec[f"{prefix}.{stat}"] = (width,)

    for i, (cin, cout) in enumerate(PC_WIDTHS):
        spec[f"pc.mlp{i}.weight"] = (cout, cin)
        spec[f"pc.mlp{i}.bias"] = (cout,)
        bn(f"pc.bn{i}", cout)
    spec["pc.fuse.weight"] = (PC_FEATURES, PC_FUSED)
    spec["pc.fuse.bias"] = (PC_FEATURES,)
    bn("pc.fuse_bn", PC_FEATURES)

    for i, (cin, cout) in enumerate(VOX_CHANNELS):
        spec[f"vox.conv{i}.weight"] = (cout, cin, 3, 3, 3)
        spec[f"vox.conv{i}.bias"] = (cout,)
        bn(f"vox.bn{i}", cout)
    spec["vox.fc.weight"] = (VOX_FEATURES, VOX_CHANNELS[-1][1])
    spec["vox.fc.bias"] = (VOX_FEATURES,)
    bn("vox.fc_bn", VOX_FEATURES)

    spec["dec.coord.weight"] = (COORD_FEATURES, 4)
    spec["dec.coord.bias"] = (COORD_FEATURES,)
    for i in range(RES_BLOCKS):
        for j in (1, 2):
            spec[f"dec.res{i}.norm{j}.mean"] = (HEAD_WIDTH,)
            spec[f"dec.res{i}.norm{j}.var"] = (HEAD_WIDTH,)
            spec[f"dec.res{i}.norm{j}.scale.weight"] = (HEAD_WIDTH, COORD_FEATURES)
            spec[f"dec.res{i}.norm{j}.scale.bias"] = (HEAD_WIDTH,)
            spec[f"dec.res{i}.norm{j}.shift.weight"] = (HEAD_WIDTH, COORD_FEATURES)
            spec[f"dec.res{i}.norm{j}.shift.bias"] = (HEAD_WIDTH,)
            spec[f"dec.res{i}.fc{j}.weight"] = (HEAD_WIDTH, HEAD_WIDTH)
            spec[f"dec.res{i}.fc{j}.bias"] = (HEAD_WIDTH,)
    spec["dec.out.weight"] = (1, HEAD_WIDTH)
    spec["dec.out.bias"] = (1,)
    return spec


@dataclass
class ModelWeights:
    arrays: dict
    arch_id: int = ARCH_HYBRID_V1
    k: int = 1024
    version: int = PVW_VERSION
    file_hash: int = field(default=0, compare=False)

    def validate(self) -> None:
        spec = architecture_arrays(self.arch_id)
        for name, shape in spec.items():
            arr = self.arrays.get(name)
            if arr is None:
                raise ModelError(f"weight file is missing array {name!r}")
            if tuple(arr.shape) != shape:
                raise ModelError(f"array {name!r} has shape {tuple(arr.shape)}, expected {shape}")
            if not np.isfinite(arr).all():
                raise ModelError(f"array {name!r} contains non-finite values")
        extra = set(self.arrays) - set(spec)
        if extra:
            raise ModelError(f"weight file has unexpected arrays: {sorted(extra)[:3]}")

    def to_bytes(self) -> bytes:
        out = bytearray()
        out += PVW_MAGIC
        out += struct.pack("<IIII", self.version, self.arch_id, self.k, len(self.arrays))
        for name, arr in self.arrays.items():
            raw = name.encode("utf-8")
            arr = np.ascontiguousarray(arr, dtype="<f4")
            out += struct.pack("<H", len(raw)) + raw
            out += struct.pack("<BB", 0, arr.ndim)
            out += struct.pack(f"<{arr.ndim}I", *arr.shape)
            out += arr.tobytes()
        return bytes(out)

    def content_hash(self) -> int:
        if self.file_hash:
            return self.file_hash
        self.file_hash = _hash_bytes(self.to_bytes())
        return self.file_hash


def _hash_bytes(data: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little")


def save_weights(weights: ModelWeights, path) -> None:
    data = weights.to_bytes()
    with open(path, "wb") as fh:
        fh.write(data)
    weights.file_hash = _hash_bytes(data)


def load_weights(path) -> ModelWeights:
    with open(path, "rb") as fh:
        data = fh.read()
    return weights_from_bytes(data, origin=str(path))


def weights_from_bytes(data: bytes, origin: str = "<bytes>") -> ModelWeights:
    if data[:4] != PVW_MAGIC:
        raise FormatError(f"{origin}: bad magic {data[:4]!r}, expected {PVW_MAGIC!r}")
    if len(data) < 20:
        raise FormatError(f"{origin}: truncated header")
    version, arch_id, k, count = struct.unpack_from("<IIII", data, 4)
    if version != PVW_VERSION:
        raise FormatError(f"{origin}: unsupported schema version {version}")
    pos = 20
    arrays: dict = {}
    for _ in range(count):
        try:
            (nlen,) = struct.unpack_from("<H", data, pos)
            pos += 2
            name = data[pos: pos + nlen].decode("utf-8")
            pos += nlen
            dtype, rank = struct.unpack_from("<BB", data, pos)
            pos += 2
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
        except struct.error:
            raise FormatError(f"{origin}: truncated array header at byte {pos}") from None
        if dtype != 0:
            raise FormatError(f"{origin}: array {name!r} has unsupported dtype {dtype}")
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        nbytes = 4 * n
        if pos + nbytes > len(data):
            raise FormatError(f"{origin}: array {name!r} truncated at byte {len(data)}")
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(dims)
        if not np.isfinite(arr).all():
            raise FormatError(f"{origin}: array {name!r} contains NaN/inf values")
        arrays[name] = arr
        pos += nbytes
    if pos != len(data):
        raise FormatError(f"{origin}: {len(data) - pos} trailing bytes after last array")
    w = ModelWeights(arrays, arch_id=arch_id, k=k, version=version, file_hash=_hash_bytes(data))
    w.validate()
    return w


# --- deterministic synthetic weights ---------------------------------------

_M64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def _stream_uniform(seed: int, offset: int, n: int) -> np.ndarray:
    """n floats in [0, 1) from a counter-based splitmix64 stream; platform-stable."""
    base = (seed * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    x = np.arange(offset, offset + n, dtype=np.uint64) + np.uint64(base)
    x ^= x >> np.uint64(30)
    x *= np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x *= np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    return ((x >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)).astype(np.float64)


def synthetic_weights(seed: int, k: int = 1024) -> ModelWeights:
    """A full random-but-stable parameter set for tests and demos.

    Fan-in-scaled uniform weights keep the random network's activations tame;
    normalization statistics are drawn near (0, 1) and the conditional scales
    near 1 so the sigmoid head stays away from saturation.
    """
    spec = architecture_arrays()
    arrays = {}
    offset = 0
    for name, shape in spec.items():
        n = int(np.prod(shape))
        u = _stream_uniform(seed, offset, n)
        offset += n
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gamma":
            vals = 0.8 + 0.4 * u
        elif leaf == "var":
            vals = 0.7 + 0.6 * u
        elif leaf in ("beta", "mean"):
            vals = 0.2 * u - 0.1
        elif leaf == "bias":
            if name.endswith("scale.bias"):
                vals = 0.9 + 0.2 * u
            else:
                vals = 0.1 * u - 0.05
        else:  # weight matrices / conv kernels
            fan_in = int(np.prod(shape[1:]))
            a = float(np.sqrt(1.0 / max(fan_in, 1)))
            vals = (2.0 * u - 1.0) * a
        arrays[name] = vals.astype(np.float32).reshape(shape)
    return ModelWeights(arrays, arch_id=ARCH_HYBRID_V1, k=k)
