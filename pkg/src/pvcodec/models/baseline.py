"""Uniform and adaptive baseline entropy models.

The adaptive model hashes each ternary voxel window (plus the Morton child
index) into one of 2^22 buckets and keeps per-bucket Krichevsky-Trofimov
counters: p1 = (c1 + 1/2) / (c0 + c1 + 1).  It ignores the point context
entirely.  Counters start at zero for every stream, so encoder and decoder
stay in lockstep by construction.
"""

from __future__ import annotations

import numpy as np

from .base import (
    HASH_BUCKET_BITS,
    HASH_SEED,
    EntropyModel,
    Probability,
    _mix64,
    hash_context,
    hash_rows,
    quantize_p1,
    quantize_p1_array,
)

_HALF = 1 << 15  # 0.5 quantized
_BUCKET_MASK = (1 << HASH_BUCKET_BITS) - 1

# below this many symbols per level, building the incremental digest index
# costs more than the plain per-row path it replaces
_FAST_DECODE_MIN_SYMBOLS = 1024


class UniformModel(EntropyModel):
    """p1 = 1/2 for every symbol: 8 bits per occupied parent, the floor baseline."""

    model_id = 0
    name = "uniform"

    def predict(self, ctx) -> Probability:
        return Probability(_HALF)

    def probs_for_level(self, state, bits):
        return np.full(len(bits), _HALF, dtype=np.int64)

    def prob_for_symbol(self, state, t, bits):
        return _HALF


class AdaptiveModel(EntropyModel):
    """Context-hash + KT estimator over the causal voxel window."""

    model_id = 1
    name = "adaptive"
    needs_voxel_context = True

    def __init__(self):
        self.begin_stream()

    def begin_stream(self):
        n_buckets = 1 << HASH_BUCKET_BITS
        self._ones = np.zeros(n_buckets, dtype=np.uint32)
        self._total = np.zeros(n_buckets, dtype=np.uint32)
        self._last_bucket = -1
        self._hash_state = None

    # --- reference API ----------------------------------------------------
    def predict(self, ctx) -> Probability:
        bucket = hash_context(ctx.vox.flat(), ctx.key.child_index)
        return Probability(self._kt(bucket))

    def update(self, ctx, bit: int) -> None:
        bucket = hash_context(ctx.vox.flat(), ctx.key.child_index)
        self._bump(bucket, bit)

    def _kt(self, bucket: int) -> int:
        c1 = int(self._ones[bucket])
        n = int(self._total[bucket])
        return quantize_p1((c1 + 0.5) / (n + 1))

    def _bump(self, bucket: int, bit: int) -> None:
        self._ones[bucket] += bit
        self._total[bucket] += 1

    # --- codec fast paths ---------------------------------------------------
    def probs_for_level(self, state, bits):
        """Vectorized KT over a whole level, exactly matching symbol order."""
        vals = state.vwi.encoder_vals(bits)
        buckets = hash_rows(vals, state.vwi.child_indices())
        m = len(buckets)
        order = np.argsort(buckets, kind="stable")
        b_sorted = buckets[order]
        s_sorted = bits[order].astype(np.int64)

        starts = np.flatnonzero(np.r_[True, b_sorted[1:] != b_sorted[:-1]])
        gid = np.cumsum(np.r_[True, b_sorted[1:] != b_sorted[:-1]]) - 1
        excl_ones = np.cumsum(s_sorted) - s_sorted
        ones_before = excl_ones - excl_ones[starts][gid]
        count_before = np.arange(m) - starts[gid]

        c1 = self._ones[b_sorted].astype(np.int64) + ones_before
        n = self._total[b_sorted].astype(np.int64) + count_before
        pq_sorted = quantize_p1_array((c1 + 0.5) / (n + 1))
        pqs = np.empty(m, dtype=np.int64)
        pqs[order] = pq_sorted

        group_ones = np.add.reduceat(s_sorted, starts)
        group_sizes = np.diff(np.r_[starts, m])
        keys = b_sorted[starts]
        self._ones[keys] += group_ones.astype(np.uint32)
        self._total[keys] += group_sizes.astype(np.uint32)
        return pqs

    def begin_level(self, state):
        self._hash_state = None

    def prob_for_symbol(self, state, t, bits):
        if self._hash_state is None and t == 0 and len(state.cells) >= _FAST_DECODE_MIN_SYMBOLS:
            self._hash_state = state.vwi.hash_state()
        if self._hash_state is not None:
            a, b = self._hash_state.digests(t)
            h = _mix64(_mix64(_mix64(HASH_SEED ^ a) ^ b) ^ (t & 7))
            bucket = h & _BUCKET_MASK
        else:
            bucket = hash_context(state.vwi.vals_row(bits, t), t & 7)
        self._last_bucket = bucket
        return self._kt(bucket)

    def observe(self, state, t, bit):
        self._bump(self._last_bucket, bit)
        if self._hash_state is not None:
            self._hash_state.push(t, bit)
