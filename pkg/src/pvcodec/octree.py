"""Octree construction, breadth-first symbolization and reconstruction.

The tree is stored level-by-level as sorted sets of occupied cells rather than
as linked nodes; the cell of a point at level d is its top-d-bit prefix per
axis.  Coding order is fixed by the format:

* levels are coded 1..D (the level-0 root is implicit),
* parents within a level in lexicographic (i, j, k) order,
* the 8 candidate children of a parent in Morton order, child index
  (x << 2) | (y << 1) | z.

Every occupied parent contributes exactly 8 binary symbols, one per candidate
child.  With depth D == N the symbol stream is lossless; for D < N decoded
points sit at cell centers, giving an L-inf error of at most 2^(N-D) - 1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError
from .pcio import PointCloud

# Morton child index c -> (dx, dy, dz) = ((c >> 2) & 1, (c >> 1) & 1, c & 1)
MORTON_OFFSETS = np.array([((c >> 2) & 1, (c >> 1) & 1, c & 1) for c in range(8)], dtype=np.int64)

_PACK_SHIFT = 21  # cells fit 17 bits per axis (N <= 16), 3 * 21 = 63 bits


def pack_cells(cells: np.ndarray) -> np.ndarray:
    """Bijective (i, j, k) -> int64 key; keys sort in lexicographic cell order."""
    c = np.asarray(cells, dtype=np.int64)
    return (c[..., 0] << (2 * _PACK_SHIFT)) | (c[..., 1] << _PACK_SHIFT) | c[..., 2]


def sort_cells(cells: np.ndarray) -> np.ndarray:
    c = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    return c[np.argsort(pack_cells(c), kind="stable")]


@dataclass
class LevelOccupancy:
    """Occupied cells of one level, lexicographically sorted, all unique."""

    level: int
    cells: np.ndarray

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int64).reshape(-1, 3)

    def __len__(self):
        return len(self.cells)

    def cell_set(self):
        return {tuple(c) for c in self.cells.tolist()}


@dataclass
class LevelSymbols:
    """Candidate child cells of one level in coding order with their bits."""

    level: int
    cells: np.ndarray  # (m, 3), m = 8 * occupied parents
    bits: np.ndarray   # (m,) uint8 in {0, 1}

    def __len__(self):
        return len(self.bits)


@dataclass
class SymbolStream:
    depth: int
    levels: list

    @property
    def bits(self) -> np.ndarray:
        if not self.levels:
            return np.zeros(0, dtype=np.uint8)
        return np.concatenate([lv.bits for lv in self.levels])

    def __len__(self):
        return sum(len(lv) for lv in self.levels)


def child_candidates(parents: np.ndarray) -> np.ndarray:
    """The 8m candidate child cells of m parents, coding order (parent-major)."""
    parents = np.asarray(parents, dtype=np.int64).reshape(-1, 3)
    return (parents[:, None, :] * 2 + MORTON_OFFSETS[None, :, :]).reshape(-1, 3)


def build_levels(pc: PointCloud, depth: int) -> list:
    """Occupied cells per level 0..depth; level d = distinct top-d-bit prefixes."""
    if not 1 <= depth <= pc.precision:
        raise ConfigError(f"depth must be in [1, {pc.precision}], got {depth}")
    if len(pc) == 0:
        raise ConfigError("cannot build an octree over an empty cloud")
    levels = []
    for d in range(depth + 1):
        cells = np.unique(pc.points >> (pc.precision - d), axis=0)
        levels.append(LevelOccupancy(d, cells))
    return levels


def serialize(levels: list) -> SymbolStream:
    """Emit the breadth-first occupancy bits for levels 1..D."""
    depth = levels[-1].level
    out = []
    for d in range(1, depth + 1):
        cand = child_candidates(levels[d - 1].cells)
        occ_keys = np.sort(pack_cells(levels[d].cells))
        keys = pack_cells(cand)
        pos = np.searchsorted(occ_keys, keys)
        pos_c = np.minimum(pos, len(occ_keys) - 1)
        bits = ((pos < len(occ_keys)) & (occ_keys[pos_c] == keys)).astype(np.uint8)
        out.append(LevelSymbols(d, cand, bits))
    return SymbolStream(depth, out)


def occupied_from_bits(cand: np.ndarray, bits: np.ndarray, level: int) -> np.ndarray:
    """Validate one level's decoded bits and return its sorted occupied cells.

    Rejects levels where some occupied parent has no occupied child: such a
    stream cannot come from a point cloud.
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if len(bits) != len(cand):
        raise FormatError(f"level {level}: got {len(bits)} symbols for {len(cand)} candidates")
    per_parent = bits.reshape(-1, 8)
    if not per_parent.any(axis=1).all():
        bad = int(np.flatnonzero(~per_parent.any(axis=1))[0])
        raise FormatError(f"level {level}: occupied parent #{bad} has no occupied child")
    return sort_cells(cand[bits.astype(bool)])


def deserialize(stream: SymbolStream, depth: int | None = None) -> list:
    """Rebuild LevelOccupancy lists from a symbol stream; inverse of serialize."""
    depth = stream.depth if depth is None else depth
    if depth < 1 or depth > stream.depth:
        raise ConfigError(f"depth must be in [1, {stream.depth}], got {depth}")
    root = np.zeros((1, 3), dtype=np.int64)
    levels = [LevelOccupancy(0, root)]
    for d in range(1, depth + 1):
        lv = stream.levels[d - 1]
        cand = child_candidates(levels[-1].cells)
        if lv.level != d or len(lv.cells) != len(cand) or not np.array_equal(lv.cells, cand):
            raise FormatError(f"level {d}: candidate cells do not match the decoded parents")
        levels.append(LevelOccupancy(d, occupied_from_bits(cand, lv.bits, d)))
    return levels


def stream_from_bits(bits: np.ndarray, depth: int) -> SymbolStream:
    """Regrow a SymbolStream from flat bits alone (the decoder-side view)."""
    bits = np.asarray(bits, dtype=np.uint8).ravel()
    parents = np.zeros((1, 3), dtype=np.int64)
    out = []
    used = 0
    for d in range(1, depth + 1):
        cand = child_candidates(parents)
        if used + len(cand) > len(bits):
            raise FormatError(
                f"symbol stream truncated at level {d}: need {used + len(cand)} bits, have {len(bits)}"
            )
        lv_bits = bits[used: used + len(cand)]
        used += len(cand)
        parents = occupied_from_bits(cand, lv_bits, d)
        out.append(LevelSymbols(d, cand, lv_bits.copy()))
    if used != len(bits):
        raise FormatError(f"{len(bits) - used} trailing symbols after level {depth}")
    return SymbolStream(depth, out)


def cell_centers(cells: np.ndarray, level: int, precision: int) -> np.ndarray:
    """Centers of level-d cells expressed on the N-bit integer grid."""
    size = 1 << (precision - level)
    return np.asarray(cells, dtype=np.int64) * size + size // 2


def reconstruct_points(levels: list, depth: int, precision: int, origin, scale) -> PointCloud:
    """One point per occupied depth-D cell, at the cell center on the N-bit grid."""
    if levels[-1].level < depth:
        raise ConfigError(f"levels only reach depth {levels[-1].level}, need {depth}")
    pts = cell_centers(levels[depth].cells, depth, precision)
    return PointCloud(sort_cells(pts), precision, origin, scale)
