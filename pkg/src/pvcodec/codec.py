"""End-to-end encode/decode and the PVC compressed container.

Container layout (little-endian): magic "PVC1", u16 version, u8 N, u8 D,
3 x f64 origin, f64 scale, u8 model id, u64 model hash, u32 K, u64 symbol
count, u64 point count, then the range-coded payload to EOF.

Model ids: 0 uniform, 1 adaptive, 2 neural hybrid, 3 neural voxel-only,
4 neural point-only (the ablation mode changes every probability, so it is
part of the stream identity just like the weight hash).

Per level the encoder and decoder walk the same candidate list; the decoder
rebuilds each symbol's context from the symbols before it, which is why the
two sides produce bit-identical probability sequences (checked by the
instrumented trace mode).
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass, field

import numpy as np

from .context import HybridContext, NodeCoordinate, NodeKey, PointContext, VoxelContext
from .context import VoxelWindowIndex, node_coordinates, point_contexts_for_level
from .errors import ConfigError, FormatError, ModelError
from .models import hash_context, hash_rows
from .models.neural import NeuralModel
from .octree import (
    LevelOccupancy,
    build_levels,
    child_candidates,
    occupied_from_bits,
    pack_cells,
    reconstruct_points,
)
from .pcio import PointCloud
from .rangecoder import RangeDecoder, RangeEncoder

PVC_MAGIC = b"PVC1"
PVC_VERSION = 1
_HEADER_FMT = "<4sHBB3ddBQIQQ"
HEADER_SIZE = struct.calcsize(_HEADER_FMT)


@dataclass
class BitstreamHeader:
    precision: int
    depth: int
    origin: np.ndarray
    scale: float
    model_id: int
    model_hash: int
    k: int
    symbol_count: int
    point_count: int

    def pack(self) -> bytes:
        return struct.pack(
            _HEADER_FMT,
            PVC_MAGIC,
            PVC_VERSION,
            self.precision,
            self.depth,
            *np.asarray(self.origin, dtype=np.float64),
            self.scale,
            self.model_id,
            self.model_hash,
            self.k,
            self.symbol_count,
            self.point_count,
        )

    @classmethod
    def unpack(cls, data: bytes, origin_name: str = "<bytes>") -> "BitstreamHeader":
        if len(data) < HEADER_SIZE:
            raise FormatError(f"{origin_name}: truncated header ({len(data)} < {HEADER_SIZE} bytes)")
        magic, version, n, d, ox, oy, oz, scale, mid, mhash, k, syms, pts = struct.unpack_from(
            _HEADER_FMT, data
        )
        if magic != PVC_MAGIC:
            raise FormatError(f"{origin_name}: bad magic {magic!r}, expected {PVC_MAGIC!r}")
        if version != PVC_VERSION:
            raise FormatError(f"{origin_name}: unsupported container version {version}")
        return cls(n, d, np.array([ox, oy, oz]), scale, mid, mhash, k, syms, pts)


@dataclass
class Bitstream:
    header: BitstreamHeader
    payload: bytes

    def to_bytes(self) -> bytes:
        return self.header.pack() + self.payload

    @classmethod
    def from_bytes(cls, data: bytes, origin_name: str = "<bytes>") -> "Bitstream":
        header = BitstreamHeader.unpack(data, origin_name)
        return cls(header, data[HEADER_SIZE:])

    def write(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def read(cls, path) -> "Bitstream":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read(), origin_name=str(path))

    def nbytes(self) -> int:
        return HEADER_SIZE + len(self.payload)


@dataclass
class LevelStats:
    level: int
    symbols: int
    ones: int
    cross_entropy_bits: float


@dataclass
class EncodeReport:
    point_count: int
    symbol_count: int
    file_bytes: int
    payload_bytes: int
    levels: list = field(default_factory=list)
    seconds: float = 0.0

    @property
    def bpp(self) -> float:
        return 8.0 * self.file_bytes / self.point_count

    @property
    def bpp_payload(self) -> float:
        return 8.0 * self.payload_bytes / self.point_count

    @property
    def cross_entropy_bits(self) -> float:
        return sum(lv.cross_entropy_bits for lv in self.levels)


@dataclass
class LevelState:
    """What a model may look at while coding one level."""

    level: int
    precision: int
    parents: np.ndarray   # occupied cells of level-1 (the ancestor layer)
    cells: np.ndarray     # candidate child cells in coding order
    vwi: VoxelWindowIndex | None = None


def _model_header_fields(model):
    return model.model_id, getattr(model, "weights_hash", 0), getattr(model, "k", 0)


def _cross_entropy_bits(bits, pqs) -> float:
    p1 = np.asarray(pqs, dtype=np.float64) / 65536.0
    p = np.where(np.asarray(bits, dtype=bool), p1, 1.0 - p1)
    return float(-np.log2(p).sum())


def encode(pc: PointCloud, depth: int, model, trace: list | None = None):
    """Compress a quantized cloud; returns (Bitstream, EncodeReport).

    With ``trace`` a list, appends one (context hash, quantized probability)
    pair per symbol, in coding order.
    """
    t0 = time.perf_counter()
    if isinstance(model, NeuralModel) and model.k < 1:
        raise ModelError("neural model has invalid K")
    levels = build_levels(pc, depth)
    model.begin_stream()
    enc = RangeEncoder()
    level_stats = []
    symbol_count = 0
    for d in range(1, depth + 1):
        parents = levels[d - 1].cells
        cells = child_candidates(parents)
        state = LevelState(d, pc.precision, parents, cells)
        if model.needs_voxel_context or trace is not None:
            state.vwi = VoxelWindowIndex(cells, d)
        occ_keys = np.sort(pack_cells(levels[d].cells))
        keys = pack_cells(cells)
        pos = np.minimum(np.searchsorted(occ_keys, keys), len(occ_keys) - 1)
        bits = (occ_keys[pos] == keys).astype(np.uint8)

        model.begin_level(state)
        pqs = model.probs_for_level(state, bits)
        for bit, pq in zip(bits.tolist(), pqs.tolist()):
            enc.encode(bit, pq)
        if trace is not None:
            vals = state.vwi.encoder_vals(bits)
            hashes = hash_rows(vals, state.vwi.child_indices())
            trace.extend(zip(hashes.tolist(), pqs.tolist()))
        level_stats.append(LevelStats(d, len(bits), int(bits.sum()), _cross_entropy_bits(bits, pqs)))
        symbol_count += len(bits)

    payload = enc.finish()
    model_id, model_hash, k = _model_header_fields(model)
    header = BitstreamHeader(
        pc.precision, depth, pc.origin, pc.scale, model_id, model_hash, k,
        symbol_count, len(levels[depth].cells),
    )
    bs = Bitstream(header, payload)
    report = EncodeReport(
        point_count=len(pc), symbol_count=symbol_count,
        file_bytes=bs.nbytes(), payload_bytes=len(payload),
        levels=level_stats, seconds=time.perf_counter() - t0,
    )
    return bs, report


def decode(bs: Bitstream, model, trace: list | None = None) -> PointCloud:
    """Decompress a bitstream with the exact model used to encode it."""
    h = bs.header
    model_id, model_hash, k = _model_header_fields(model)
    if h.model_id != model_id:
        raise ModelError(f"stream was coded with model id {h.model_id}, got model id {model_id}")
    if h.model_hash != model_hash:
        raise ModelError(
            f"model hash mismatch: stream {h.model_hash:#018x}, loaded weights {model_hash:#018x}"
        )
    if h.k != k:
        raise ModelError(f"stream uses K={h.k}, model has K={k}")
    if not 1 <= h.depth <= h.precision <= 16:
        raise FormatError(f"invalid header: N={h.precision}, D={h.depth}")

    model.begin_stream()
    dec = RangeDecoder(bs.payload)
    parents = np.zeros((1, 3), dtype=np.int64)
    decoded_symbols = 0
    level_cells = None
    for d in range(1, h.depth + 1):
        cells = child_candidates(parents)
        state = LevelState(d, h.precision, parents, cells)
        if model.needs_voxel_context or trace is not None:
            state.vwi = VoxelWindowIndex(cells, d)
        model.begin_level(state)
        m = len(cells)
        bits = np.zeros(m, dtype=np.uint8)
        for t in range(m):
            pq = model.prob_for_symbol(state, t, bits)
            bit = dec.decode(pq)
            bits[t] = bit
            model.observe(state, t, bit)
            if trace is not None:
                row = state.vwi.vals_row(bits, t)
                trace.append((hash_context(row, t & 7), pq))
        decoded_symbols += m
        level_cells = occupied_from_bits(cells, bits, d)
        parents = level_cells

    if decoded_symbols != h.symbol_count:
        raise FormatError(f"decoded {decoded_symbols} symbols, header says {h.symbol_count}")
    if dec.consumed != len(bs.payload):
        raise FormatError(
            f"payload has {len(bs.payload) - dec.consumed} unread trailing bytes"
        )
    levels = [LevelOccupancy(d, np.zeros((0, 3), dtype=np.int64)) for d in range(h.depth)]
    levels.append(LevelOccupancy(h.depth, level_cells))
    pc = reconstruct_points(levels, h.depth, h.precision, bs.header.origin, bs.header.scale)
    if len(pc) != h.point_count:
        raise FormatError(f"decoded {len(pc)} points, header says {h.point_count}")
    return pc


def ablation_variant(model, mode: str):
    """hybrid | voxel-only | point-only view of a neural model (shared weights)."""
    if not isinstance(model, NeuralModel):
        raise ConfigError("ablation variants only apply to the neural model")
    return model.with_mode(mode)


def replay_contexts(pc: PointCloud, depth: int, k: int):
    """Yield (HybridContext, bit) in coding order, as the encoder sees them.

    This is the instrumentation/training-data path; the coding loops use the
    vectorized equivalents.
    """
    levels = build_levels(pc, depth)
    for d in range(1, depth + 1):
        parents = levels[d - 1].cells
        cells = child_candidates(parents)
        vwi = VoxelWindowIndex(cells, d)
        occ_keys = np.sort(pack_cells(levels[d].cells))
        keys = pack_cells(cells)
        pos = np.minimum(np.searchsorted(occ_keys, keys), len(occ_keys) - 1)
        bits = (occ_keys[pos] == keys).astype(np.uint8)
        vals = vwi.encoder_vals(bits)
        coords = node_coordinates(cells, d, pc.precision)
        chunk = 256
        for lo in range(0, len(cells), chunk):
            hi = min(lo + chunk, len(cells))
            rel, valid = point_contexts_for_level(cells[lo:hi], d, parents, pc.precision, k)
            for i in range(hi - lo):
                t = lo + i
                ctx = HybridContext(
                    vox=VoxelContext(vals[t].reshape(4, 4, 4)),
                    pc=PointContext(rel[i], valid),
                    coord=NodeCoordinate(coords[t]),
                    key=NodeKey(d, tuple(cells[t].tolist())),
                )
                yield ctx, int(bits[t])
