"""Hybrid per-node coding context: causal voxel window + ancestor point context.

For the node being coded at level d the context has three parts:

* a 4x4x4 same-level occupancy window spanning offsets [-1..2]^3 around the
  node (the node itself sits at local index (1, 1, 1)), ternary-valued:
  +1 already coded occupied, 0 known empty (out of bounds, parent empty, or
  coded empty), -1 candidate not yet coded;
* the K nearest occupied-cell centers of the fully coded level d-1, in
  node-relative coordinates divided by the ancestor cell size 2^(N-d+1);
* the normalized node coordinate (i, j, k) / 2^d plus the level fraction d/N.

The window sees only symbols coded strictly before the current one, so the
decoder can rebuild the identical context at every step (the dual-replay
contract).  The point context depends only on level d-1 and can therefore be
computed for a whole level up front, on both sides.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError
from .octree import cell_centers, pack_cells

# local window indices in C order: WINDOW_OFFSETS[(lx*4 + ly)*4 + lz] = (lx-1, ly-1, lz-1)
WINDOW_OFFSETS = np.array(
    [(lx - 1, ly - 1, lz - 1) for lx in range(4) for ly in range(4) for lz in range(4)],
    dtype=np.int64,
)
ANCHOR_INDEX = (1, 1, 1)  # flat 21

VOX_UNKNOWN, VOX_EMPTY, VOX_OCCUPIED = -1, 0, 1


@dataclass
class NodeKey:
    level: int
    cell: tuple

    @property
    def child_index(self) -> int:
        x, y, z = self.cell
        return ((x & 1) << 2) | ((y & 1) << 1) | (z & 1)


@dataclass
class VoxelContext:
    grid: np.ndarray  # (4, 4, 4) int8 in {-1, 0, +1}

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=np.int8).reshape(4, 4, 4)

    def flat(self) -> np.ndarray:
        return self.grid.reshape(64)


@dataclass
class PointContext:
    neighbors: np.ndarray  # (K, 3) float32, nearest first
    valid_count: int

    def __post_init__(self):
        self.neighbors = np.asarray(self.neighbors, dtype=np.float32).reshape(-1, 3)


@dataclass
class NodeCoordinate:
    values: np.ndarray  # (4,) float32 in [0, 1]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32).reshape(4)


@dataclass
class HybridContext:
    vox: VoxelContext
    pc: PointContext
    coord: NodeCoordinate
    key: NodeKey


def knn(query, points, k: int):
    """Indices of the k nearest points by squared Euclidean distance.

    Deterministic: ties broken by index.  Exhaustive for n <= 32, k-d tree
    with exact tie repair above that.  Returns min(k, n) indices.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    if n == 0:
        raise ConfigError("knn over an empty point set")
    q = np.asarray(query, dtype=np.float64).reshape(3)
    kq = min(k, n)
    if n <= 32:
        d2 = ((points - q) ** 2).sum(axis=1)
        return np.lexsort((np.arange(n), d2))[:kq]
    tree = cKDTree(points)
    dist, _ = tree.query(q, k=kq)
    dmax = float(np.atleast_1d(dist)[-1])
    cand = np.asarray(tree.query_ball_point(q, r=dmax * (1 + 1e-9) + 1e-12), dtype=np.int64)
    d2 = ((points[cand] - q) ** 2).sum(axis=1)
    order = np.lexsort((cand, d2))
    return cand[order][:kq]


def _knn_grid_batch(queries: np.ndarray, points: np.ndarray, k: int) -> np.ndarray:
    """Batched exact-tie k-NN for integer grids; returns (m, min(k, n)) indices.

    Same result as calling :func:`knn` per row, but the common no-boundary-tie
    case is fully vectorized.  Assumes integer coordinates so squared
    distances are exact in int64.
    """
    points = np.asarray(points, dtype=np.int64).reshape(-1, 3)
    queries = np.asarray(queries, dtype=np.int64).reshape(-1, 3)
    n, m = len(points), len(queries)
    kq = min(k, n)
    if n <= 32 or m == 0:
        out = np.empty((m, kq), dtype=np.int64)
        for i, q in enumerate(queries):
            d2 = ((points - q) ** 2).sum(axis=1)
            out[i] = np.lexsort((np.arange(n), d2))[:kq]
        return out

    tree = cKDTree(points)
    probe = min(kq + 1, n)
    _, idx = tree.query(queries, k=probe)
    idx = idx.reshape(m, probe)
    diff = points[idx] - queries[:, None, :]
    d2 = (diff * diff).sum(axis=2)  # exact int64

    # re-rank the probed candidates by (distance, index); cells fit 21 bits
    combined = d2 * (1 << _KNN_IDX_BITS) + idx
    order = np.argsort(combined[:, :], axis=1, kind="stable")
    top = np.take_along_axis(idx, order, axis=1)[:, :kq]

    if probe > kq:
        d2s = np.take_along_axis(d2, order, axis=1)
        ambiguous = np.flatnonzero(d2s[:, kq - 1] == d2s[:, kq])
        for i in ambiguous:
            q = queries[i]
            cut = d2s[i, kq - 1]
            cand = np.asarray(
                tree.query_ball_point(q.astype(np.float64), r=np.sqrt(cut) * (1 + 1e-9) + 1e-12),
                dtype=np.int64,
            )
            cd2 = ((points[cand] - q) ** 2).sum(axis=1)
            sel = np.lexsort((cand, cd2))[:kq]
            top[i] = cand[sel]
    return top


_KNN_IDX_BITS = 22  # index fits; d2 < 3 * 2^34 keeps the packing under 2^63


def extract_point_context(key: NodeKey, ancestor_cells, precision: int, k: int) -> PointContext:
    """K nearest ancestor-layer centers, node-relative, nearest first.

    Padding repeats the nearest genuine neighbor when fewer than K exist.
    """
    rel, valid = point_contexts_for_level(
        np.asarray([key.cell], dtype=np.int64), key.level, ancestor_cells, precision, k
    )
    return PointContext(rel[0], valid)


def point_contexts_for_level(cells, level, ancestor_cells, precision, k):
    """(m, K, 3) float32 relative neighbor blocks for all nodes of a level."""
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    ancestor_cells = np.asarray(ancestor_cells, dtype=np.int64).reshape(-1, 3)
    if len(ancestor_cells) == 0:
        raise ConfigError("ancestor layer is empty")
    centers = cell_centers(cells, level, precision)
    anc_centers = cell_centers(ancestor_cells, level - 1, precision)
    idx = _knn_grid_batch(centers, anc_centers, k)
    valid = idx.shape[1]
    cell_size = float(1 << (precision - level + 1))
    rel = (anc_centers[idx] - centers[:, None, :]).astype(np.float32) / np.float32(cell_size)
    if valid < k:
        rel = np.concatenate([rel, np.repeat(rel[:, :1, :], k - valid, axis=1)], axis=1)
    return rel, valid


def node_coordinates(cells, level, precision):
    """(m, 4) float32 normalized coordinates: cell / 2^d plus level fraction d/N."""
    cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
    coords = np.empty((len(cells), 4), dtype=np.float32)
    coords[:, :3] = cells.astype(np.float32) / np.float32(1 << level)
    coords[:, 3] = np.float32(level / precision)
    return coords


def extract_voxel_context(key: NodeKey, decoded, ancestor_occupied) -> VoxelContext:
    """Reference per-node window extraction.

    ``decoded`` maps same-level cells to their already-coded bit; it must hold
    exactly the symbols coded before ``key``.  ``ancestor_occupied`` is the
    set of occupied level d-1 cells.
    """
    size = 1 << key.level
    grid = np.zeros(64, dtype=np.int8)
    base = np.asarray(key.cell, dtype=np.int64)
    for slot, off in enumerate(WINDOW_OFFSETS):
        c = base + off
        if (c < 0).any() or (c >= size).any():
            continue
        if tuple(c >> 1) not in ancestor_occupied:
            continue
        bit = decoded.get(tuple(c))
        if bit is None:
            grid[slot] = VOX_UNKNOWN
        else:
            grid[slot] = VOX_OCCUPIED if bit else VOX_EMPTY
    return VoxelContext(grid.reshape(4, 4, 4))


# Window cells of the 8 children of one parent all live in the parent's
# 3x3x3 neighborhood.  For child parity e and window offset o (per axis):
# neighbor delta = (e + o) >> 1 in {-1, 0, 1} and the Morton bit = (e + o) & 1.
_PARENT_OFFSETS = np.array(
    [(dx, dy, dz) for dx in (-1, 0, 1) for dy in (-1, 0, 1) for dz in (-1, 0, 1)],
    dtype=np.int64,
)


def _window_tables():
    didx = np.empty((8, 64), dtype=np.int32)
    morton = np.empty((8, 64), dtype=np.int32)
    for ci in range(8):
        e = ((ci >> 2) & 1, (ci >> 1) & 1, ci & 1)
        for slot, off in enumerate(WINDOW_OFFSETS.tolist()):
            s = [e[a] + off[a] for a in range(3)]
            d = [v >> 1 for v in s]
            didx[ci, slot] = (d[0] + 1) * 9 + (d[1] + 1) * 3 + (d[2] + 1)
            morton[ci, slot] = ((s[0] & 1) << 2) | ((s[1] & 1) << 1) | (s[2] & 1)
    return didx, morton


_WINDOW_DIDX, _WINDOW_MORTON = _window_tables()


class VoxelWindowIndex:
    """Per-level causal-window machinery shared by encoder and decoder.

    Precomputes, for every candidate node of the level, which window slots
    point at other candidates of the same level and at what coding time those
    candidates are coded.  The ternary window of node t is then a pure
    function of the bits coded before t.
    """

    _CHUNK = 16384  # parents per expansion block

    def __init__(self, cells: np.ndarray, level: int):
        """``cells``: the level's candidate child cells in coding order."""
        self.level = level
        self.cells = np.asarray(cells, dtype=np.int64).reshape(-1, 3)
        m = len(self.cells)
        parents = self.cells[::8] >> 1  # coding order: 8 children per sorted parent
        p = len(parents)
        pkeys = pack_cells(parents)
        psize = 1 << (level - 1)

        neighbor = np.full((p, 27), -1, dtype=np.int32)
        for di, off in enumerate(_PARENT_OFFSETS):
            nb = parents + off
            inb = ((nb >= 0) & (nb < psize)).all(axis=1)
            keys = pack_cells(nb[inb])
            pos = np.searchsorted(pkeys, keys)
            pos_c = np.minimum(pos, p - 1)
            found = pkeys[pos_c] == keys
            col = np.full(p, -1, dtype=np.int32)
            col[inb] = np.where(found, pos_c, -1).astype(np.int32)
            neighbor[:, di] = col

        tw = np.empty((m, 64), dtype=np.int32)
        for lo in range(0, p, self._CHUNK):
            hi = min(lo + self._CHUNK, p)
            png = neighbor[lo:hi][:, _WINDOW_DIDX]          # (chunk, 8, 64)
            block = np.where(png < 0, -1, 8 * png + _WINDOW_MORTON[None])
            tw[8 * lo: 8 * hi] = block.reshape(-1, 64)
        self.t_of_window = tw

    def __len__(self):
        return len(self.cells)

    def child_indices(self) -> np.ndarray:
        return (np.arange(len(self.cells), dtype=np.int64) & 7).astype(np.uint8)

    def encoder_vals(self, bits: np.ndarray) -> np.ndarray:
        """(m, 64) int8 ternary windows for every node, given all level bits."""
        bits = np.asarray(bits, dtype=np.int8)
        tw = self.t_of_window
        t_here = np.arange(len(self.cells), dtype=np.int32)[:, None]
        coded = bits[np.maximum(tw, 0)]
        vals = np.where(tw < 0, np.int8(0), np.where(tw < t_here, coded, np.int8(-1)))
        return vals.astype(np.int8, copy=False)

    def vals_row(self, bits: np.ndarray, t: int) -> np.ndarray:
        """Ternary window of node t given the bits decoded so far (bits[:t])."""
        tw = self.t_of_window[t]
        coded = bits[np.maximum(tw, 0)].astype(np.int8)
        return np.where(tw < 0, np.int8(0), np.where(tw < t, coded, np.int8(-1)))

    def hash_state(self) -> "WindowHashState":
        """Incremental digest machinery for the sequential decode loop."""
        return WindowHashState(self.t_of_window)


_POW3_F = np.power(3.0, np.arange(32))  # 3^31 < 2^53: exact in float64
# per-slot digest deltas: slots 0..31 feed the real part, 32..63 the imaginary
_SLOT_DELTA = np.concatenate([_POW3_F + 0j, 1j * _POW3_F])


class WindowHashState:
    """Per-node base-3 window digests maintained by scatter updates.

    Each node's 64 ternary digits are packed into two base-3 integers (slots
    0..31 and 32..63), stored as the real/imaginary parts of one complex128
    accumulator.  Every value stays below 2^53 so float64 arithmetic is exact
    and the digests match the batch hashing path bit for bit.  Digits: 0 =
    not yet decoded, 1 = known empty, 2 = occupied.  Known-empty cells that
    are not candidates contribute their digit up front; a candidate
    contributes nothing until its symbol decodes, at which point ``push``
    adds (bit + 1) * 3^slot into every window that references it.  Windows of
    already-decoded nodes get stale, which is harmless: each digest is read
    exactly once, right before its own symbol decodes.
    """

    def __init__(self, t_of_window: np.ndarray):
        m = len(t_of_window)
        static = (t_of_window < 0)
        acc = (static[:, :32] * _POW3_F).sum(axis=1) + 1j * (static[:, 32:] * _POW3_F).sum(axis=1)
        self.acc = acc.astype(np.complex128)
        valid = ~static
        n_idx, j_idx = np.nonzero(valid)
        u = t_of_window[valid]
        order = np.argsort(u)
        self._tgt = n_idx[order].astype(np.int32)
        self._delta = _SLOT_DELTA[j_idx[order]]
        counts = np.bincount(u, minlength=m)
        self._off = np.concatenate([[0], np.cumsum(counts)]).tolist()

    def digests(self, t: int):
        c = self.acc[t]
        return int(c.real), int(c.imag)

    def push(self, t: int, bit: int) -> None:
        lo, hi = self._off[t], self._off[t + 1]
        if hi > lo:
            d = self._delta[lo:hi]
            self.acc[self._tgt[lo:hi]] += (d + d) if bit else d
