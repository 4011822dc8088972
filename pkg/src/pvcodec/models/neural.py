"""NumPy inference for the hybrid neural entropy model.

Three sub-networks, executed from a PVW parameter set:

* point encoder: shared per-point MLP 3->64->64->128->256 (BN + ReLU each),
  multiscale fusion by max-pooling all four per-point feature maps over the K
  neighbors, concatenating (512) and lifting 512->1024 with BN + ReLU;
* voxel encoder: four 3x3x3 convolutions 1->32->64->128->256 over the 4^3
  ternary window (stride 1, zero padding 1, BN + ReLU), global max pool and
  FC 256->512 with BN + ReLU;
* decoder head: coordinate embedding 4->512 + ReLU, concat [pc|vox|coord]
  (2048), five width-preserving residual blocks of
  CBN -> ReLU -> FC -> CBN -> ReLU -> FC with skip, then FC 2048->1 +
  sigmoid.  Conditional batch norm normalizes with running statistics and
  takes its per-channel scale/shift from per-block linear maps of the
  coordinate embedding.

Encode/decode determinism: anything that depends only on the ancestor level
(point features, coordinate embedding, CBN tables) is computed in fixed-size
chunks identically on both sides; the voxel branch and the head, which see
causal same-level state, always run one sample at a time so both sides issue
bit-identical float kernels.
"""

from __future__ import annotations

import numpy as np

from ..context import node_coordinates, point_contexts_for_level
from ..errors import ConfigError, ModelError
from .base import EntropyModel, Probability, quantize_p1
from .weights import (
    BN_EPS,
    PC_FEATURES,
    RES_BLOCKS,
    VOX_CHANNELS,
    VOX_FEATURES,
    ModelWeights,
)

ABLATION_MODES = ("hybrid", "voxel-only", "point-only")

# im2col bookkeeping for the padded 4^3 -> 6^3 grid
_PAD_IDX = np.array(
    [(x + 1) * 36 + (y + 1) * 6 + (z + 1) for x in range(4) for y in range(4) for z in range(4)],
    dtype=np.intp,
)
_COL_IDX = np.array(
    [
        [(x + kx) * 36 + (y + ky) * 6 + (z + kz) for kx in range(3) for ky in range(3) for kz in range(3)]
        for x in range(4) for y in range(4) for z in range(4)
    ],
    dtype=np.intp,
)

_CHUNK = 256  # fixed chunk for level-precomputable features (both coding sides)


def _fused_bn(arrays, prefix):
    gamma = arrays[f"{prefix}.gamma"].astype(np.float64)
    beta = arrays[f"{prefix}.beta"].astype(np.float64)
    mean = arrays[f"{prefix}.mean"].astype(np.float64)
    var = arrays[f"{prefix}.var"].astype(np.float64)
    a = gamma / np.sqrt(var + BN_EPS)
    return a.astype(np.float32), (beta - mean * a).astype(np.float32)


class NeuralModel(EntropyModel):
    """Hybrid-context network run from exported weights (inference only)."""

    name = "neural"

    def __init__(self, weights: ModelWeights, mode: str = "hybrid"):
        if mode not in ABLATION_MODES:
            raise ConfigError(f"ablation mode must be one of {ABLATION_MODES}, got {mode!r}")
        weights.validate()
        self.weights = weights
        self.mode = mode
        self.k = weights.k
        self._prepare(weights.arrays)

    # --- identity -----------------------------------------------------------
    @property
    def model_id(self) -> int:
        return {"hybrid": 2, "voxel-only": 3, "point-only": 4}[self.mode]

    @property
    def weights_hash(self) -> int:
        return self.weights.content_hash()  # cached after the first call

    @property
    def needs_voxel_context(self) -> bool:
        return self.mode != "point-only"

    @property
    def needs_point_context(self) -> bool:
        return self.mode != "voxel-only"

    def with_mode(self, mode: str) -> "NeuralModel":
        if mode not in ABLATION_MODES:
            raise ConfigError(f"ablation mode must be one of {ABLATION_MODES}, got {mode!r}")
        clone = object.__new__(NeuralModel)
        clone.__dict__.update(self.__dict__)
        clone.mode = mode
        return clone

    # --- weight preparation ---------------------------------------------------
    def _prepare(self, arr):
        f4 = lambda name: np.ascontiguousarray(arr[name], dtype=np.float32)
        self._pc_wt = [np.ascontiguousarray(arr[f"pc.mlp{i}.weight"].T, dtype=np.float32) for i in range(4)]
        self._pc_b = [f4(f"pc.mlp{i}.bias") for i in range(4)]
        self._pc_bn = [_fused_bn(arr, f"pc.bn{i}") for i in range(4)]
        self._fuse_wt = np.ascontiguousarray(arr["pc.fuse.weight"].T, dtype=np.float32)
        self._fuse_b = f4("pc.fuse.bias")
        self._fuse_bn = _fused_bn(arr, "pc.fuse_bn")

        self._conv_wt = [
            np.ascontiguousarray(arr[f"vox.conv{i}.weight"].reshape(VOX_CHANNELS[i][1], -1).T, dtype=np.float32)
            for i in range(4)
        ]
        self._conv_b = [f4(f"vox.conv{i}.bias") for i in range(4)]
        self._conv_bn = [_fused_bn(arr, f"vox.bn{i}") for i in range(4)]
        self._vfc_wt = np.ascontiguousarray(arr["vox.fc.weight"].T, dtype=np.float32)
        self._vfc_b = f4("vox.fc.bias")
        self._vfc_bn = _fused_bn(arr, "vox.fc_bn")

        self._coord_wt = np.ascontiguousarray(arr["dec.coord.weight"].T, dtype=np.float32)
        self._coord_b = f4("dec.coord.bias")
        self._res = []
        for i in range(RES_BLOCKS):
            block = {}
            for j in (1, 2):
                pre = f"dec.res{i}.norm{j}"
                var = arr[f"{pre}.var"].astype(np.float64)
                block[f"mean{j}"] = f4(f"{pre}.mean")
                block[f"inv{j}"] = (1.0 / np.sqrt(var + BN_EPS)).astype(np.float32)
                block[f"scale_wt{j}"] = np.ascontiguousarray(arr[f"{pre}.scale.weight"].T, dtype=np.float32)
                block[f"scale_b{j}"] = f4(f"{pre}.scale.bias")
                block[f"shift_wt{j}"] = np.ascontiguousarray(arr[f"{pre}.shift.weight"].T, dtype=np.float32)
                block[f"shift_b{j}"] = f4(f"{pre}.shift.bias")
                block[f"fc_wt{j}"] = np.ascontiguousarray(arr[f"dec.res{i}.fc{j}.weight"].T, dtype=np.float32)
                block[f"fc_b{j}"] = f4(f"dec.res{i}.fc{j}.bias")
            self._res.append(block)
        self._out_wt = np.ascontiguousarray(arr["dec.out.weight"].T, dtype=np.float32)
        self._out_b = f4("dec.out.bias")

    # --- sub-network forwards -------------------------------------------------
    def _point_features(self, rel: np.ndarray) -> np.ndarray:
        """(m, K, 3) relative neighbors -> (m, 1024) fused features."""
        m, k, _ = rel.shape
        x = rel.reshape(m * k, 3).astype(np.float32, copy=False)
        pooled = []
        for i in range(4):
            x = x @ self._pc_wt[i] + self._pc_b[i]
            a, b = self._pc_bn[i]
            x = np.maximum(x * a + b, 0.0)
            pooled.append(x.reshape(m, k, -1).max(axis=1))
        fused = np.concatenate(pooled, axis=1)
        y = fused @ self._fuse_wt + self._fuse_b
        a, b = self._fuse_bn
        return np.maximum(y * a + b, 0.0)

    def point_features(self, neighbors: np.ndarray) -> np.ndarray:
        """Public single-context point encoder: (K, 3) -> (1024,)."""
        neighbors = np.asarray(neighbors, dtype=np.float32)
        if neighbors.ndim != 2 or neighbors.shape[1] != 3:
            raise ModelError(f"point context must be (K, 3), got {neighbors.shape}")
        if neighbors.shape[0] != self.k:
            raise ModelError(f"point context has {neighbors.shape[0]} rows, model expects K={self.k}")
        return self._point_features(neighbors[None])[0]

    def _vox_features(self, grids: np.ndarray) -> np.ndarray:
        """(m, 64) ternary grids -> (m, 512); m=1 inside the coding loops."""
        m = grids.shape[0]
        x = np.zeros((m, 1, 216), dtype=np.float32)
        x[:, 0, _PAD_IDX] = grids.astype(np.float32, copy=False)
        for i in range(4):
            cin, cout = VOX_CHANNELS[i]
            col = x[:, :, _COL_IDX]                      # (m, cin, 64, 27)
            col = col.transpose(0, 2, 1, 3).reshape(m * 64, cin * 27)
            y = col @ self._conv_wt[i] + self._conv_b[i]
            a, b = self._conv_bn[i]
            y = np.maximum(y * a + b, 0.0)               # (m*64, cout)
            if i == 3:
                pooled = y.reshape(m, 64, cout).max(axis=1)
                break
            x = np.zeros((m, cout, 216), dtype=np.float32)
            x[:, :, _PAD_IDX] = y.reshape(m, 64, cout).transpose(0, 2, 1)
        y = pooled @ self._vfc_wt + self._vfc_b
        a, b = self._vfc_bn
        return np.maximum(y * a + b, 0.0)

    def voxel_features(self, grid: np.ndarray) -> np.ndarray:
        """Public single-context voxel encoder: (4,4,4) or (64,) -> (512,)."""
        grid = np.asarray(grid)
        if grid.size != 64:
            raise ModelError(f"voxel context must have 64 cells, got shape {grid.shape}")
        return self._vox_features(grid.reshape(1, 64))[0]

    def _coord_tables(self, coords: np.ndarray):
        """Per-node head conditioning: embedding + CBN scale/shift rows."""
        e = np.maximum(coords @ self._coord_wt + self._coord_b, 0.0)  # (c, 512)
        tables = []
        for blk in self._res:
            entry = {}
            for j in (1, 2):
                entry[f"scale{j}"] = e @ blk[f"scale_wt{j}"] + blk[f"scale_b{j}"]
                entry[f"shift{j}"] = e @ blk[f"shift_wt{j}"] + blk[f"shift_b{j}"]
            tables.append(entry)
        return e, tables

    def _head_row(self, e_pc, e_vox, e_coor, tables, r: int) -> float:
        x = np.concatenate([e_pc, e_vox, e_coor])
        for blk, tab in zip(self._res, tables):
            h = (x - blk["mean1"]) * blk["inv1"]
            h = np.maximum(h * tab["scale1"][r] + tab["shift1"][r], 0.0)
            h = h @ blk["fc_wt1"] + blk["fc_b1"]
            h = (h - blk["mean2"]) * blk["inv2"]
            h = np.maximum(h * tab["scale2"][r] + tab["shift2"][r], 0.0)
            h = h @ blk["fc_wt2"] + blk["fc_b2"]
            x = x + h
        z = float(x @ self._out_wt[:, 0] + self._out_b[0])
        return 1.0 / (1.0 + np.exp(-z))

    def head_probability(self, e_pc, e_vox, coord) -> float:
        """Public decoder head: feature vectors + 4-coordinate -> P(s=1)."""
        e_pc = np.asarray(e_pc, dtype=np.float32).reshape(-1)
        e_vox = np.asarray(e_vox, dtype=np.float32).reshape(-1)
        coord = np.asarray(coord, dtype=np.float32).reshape(-1)
        if e_pc.shape[0] != PC_FEATURES:
            raise ModelError(f"point feature vector must have {PC_FEATURES} values, got {e_pc.shape[0]}")
        if e_vox.shape[0] != VOX_FEATURES:
            raise ModelError(f"voxel feature vector must have {VOX_FEATURES} values, got {e_vox.shape[0]}")
        if coord.shape[0] != 4:
            raise ModelError(f"node coordinate must have 4 values, got {coord.shape[0]}")
        e_coor, tables = self._coord_tables(coord[None])
        return self._head_row(e_pc, e_vox, e_coor[0], tables, 0)

    # --- reference API ----------------------------------------------------------
    def predict(self, ctx) -> Probability:
        if self.needs_point_context:
            e_pc = self.point_features(ctx.pc.neighbors)
        else:
            e_pc = np.zeros(PC_FEATURES, dtype=np.float32)
        if self.needs_voxel_context:
            e_vox = self.voxel_features(ctx.vox.grid)
        else:
            e_vox = np.zeros(VOX_FEATURES, dtype=np.float32)
        p = self.head_probability(e_pc, e_vox, ctx.coord.values)
        return Probability(quantize_p1(p))

    # --- codec fast paths ---------------------------------------------------------
    def begin_level(self, state) -> None:
        state.neural_cache = _LevelCache(self, state)

    def probs_for_level(self, state, bits):
        vals = state.vwi.encoder_vals(bits) if self.needs_voxel_context else None
        pqs = np.empty(len(bits), dtype=np.int64)
        for t in range(len(bits)):
            row = vals[t] if vals is not None else None
            pqs[t] = self._symbol_pq(state, t, row)
        return pqs

    def prob_for_symbol(self, state, t, bits):
        row = state.vwi.vals_row(bits, t) if self.needs_voxel_context else None
        return self._symbol_pq(state, t, row)

    def _symbol_pq(self, state, t: int, vox_row) -> int:
        cache = state.neural_cache
        e_pc, e_coor, tables, r = cache.fetch(t)
        if self.needs_voxel_context:
            e_vox = self._vox_features(vox_row.reshape(1, 64))[0]
        else:
            e_vox = _ZERO_VOX
        p = self._head_row(e_pc, e_vox, e_coor, tables, r)
        return quantize_p1(p)


_ZERO_VOX = np.zeros(VOX_FEATURES, dtype=np.float32)
_ZERO_PC = np.zeros(PC_FEATURES, dtype=np.float32)


class _LevelCache:
    """Chunked per-level precomputation, identical on encode and decode.

    Point features, coordinate embeddings and CBN tables depend only on the
    (already coded) ancestor level, so both sides batch them over fixed
    256-node chunks; the chunk boundaries are part of the determinism
    contract.
    """

    def __init__(self, model: NeuralModel, state):
        self._model = model
        self._state = state
        self._coords = node_coordinates(state.cells, state.level, state.precision)
        self._chunk = -1
        self._lo = 0
        self._pc = None
        self._ecoor = None
        self._tables = None

    def fetch(self, t: int):
        cid = t // _CHUNK
        if cid != self._chunk:
            self._load(cid)
        r = t - self._lo
        e_pc = self._pc[r] if self._pc is not None else _ZERO_PC
        return e_pc, self._ecoor[r], self._tables, r

    def _load(self, cid: int):
        state = self._state
        lo = cid * _CHUNK
        hi = min(lo + _CHUNK, len(state.cells))
        if self._model.needs_point_context:
            rel, _ = point_contexts_for_level(
                state.cells[lo:hi], state.level, state.parents, state.precision, self._model.k
            )
            self._pc = self._model._point_features(rel)
        self._ecoor, self._tables = self._model._coord_tables(self._coords[lo:hi])
        self._chunk = cid
        self._lo = lo
