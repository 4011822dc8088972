"""Shared entropy-model machinery: quantized probabilities and context hashing.

Every model maps a coding context to a 16-bit-quantized probability of the
next symbol being 1.  Quantization is centralized here so the scalar and the
vectorized paths are the same arithmetic: encoder and decoder must agree
bit-for-bit on every probability they feed the range coder.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError

PROB_ONE = 1 << 16

HASH_SEED = 0x9E3779B97F4A7C15  # documented constant; changing it changes the adaptive format
HASH_BUCKET_BITS = 22
_M64 = (1 << 64) - 1
_POW3 = np.power(np.uint64(3), np.arange(32, dtype=np.uint64))


@dataclass(frozen=True)
class Probability:
    """P(s = 1) quantized to pq / 65536 with pq in [1, 65535]."""

    pq: int

    def __post_init__(self):
        if not 1 <= self.pq <= PROB_ONE - 1:
            raise ConfigError(f"quantized probability {self.pq} outside [1, 65535]")

    @property
    def p1(self) -> float:
        return self.pq / PROB_ONE


def quantize_p1(p: float) -> int:
    """float probability -> quantized pq; half-up rounding, clamped to [1, 65535]."""
    pq = int(np.floor(p * PROB_ONE + 0.5))
    return min(max(pq, 1), PROB_ONE - 1)


def quantize_p1_array(p: np.ndarray) -> np.ndarray:
    pq = np.floor(np.asarray(p, dtype=np.float64) * PROB_ONE + 0.5).astype(np.int64)
    return np.clip(pq, 1, PROB_ONE - 1)


def _mix64(x: int) -> int:
    x &= _M64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _M64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _M64
    x ^= x >> 31
    return x


def hash_context(vox_flat, child_index: int) -> int:
    """Bucket id in [0, 2^22) for a ternary 64-cell window plus child index.

    The 64 ternary digits are packed base-3 into two 64-bit words which are
    then mixed with a fixed-seed splitmix64 chain; stable across platforms.
    """
    digits = np.asarray(vox_flat, dtype=np.int64).reshape(64) + 1
    a = int((digits[:32].astype(np.uint64) * _POW3).sum())
    b = int((digits[32:].astype(np.uint64) * _POW3).sum())
    h = _mix64(HASH_SEED ^ a)
    h = _mix64(h ^ b)
    h = _mix64(h ^ (child_index & 7))
    return h & ((1 << HASH_BUCKET_BITS) - 1)


def hash_rows(vals: np.ndarray, child_indices: np.ndarray) -> np.ndarray:
    """Vectorized hash_context over (m, 64) ternary rows; identical buckets."""
    digits = (np.asarray(vals, dtype=np.int64) + 1).astype(np.uint64)
    a = (digits[:, :32] * _POW3).sum(axis=1)
    b = (digits[:, 32:] * _POW3).sum(axis=1)
    h = _mix64_array(np.uint64(HASH_SEED) ^ a)
    h = _mix64_array(h ^ b)
    h = _mix64_array(h ^ (np.asarray(child_indices, dtype=np.uint64) & np.uint64(7)))
    return (h & np.uint64((1 << HASH_BUCKET_BITS) - 1)).astype(np.int64)


def _mix64_array(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64, copy=True)
    x ^= x >> np.uint64(30)
    x *= np.uint64(0xBF58476D1CE4E5B9)
    x ^= x >> np.uint64(27)
    x *= np.uint64(0x94D049BB133111EB)
    x ^= x >> np.uint64(31)
    return x


class EntropyModel:
    """Contract shared by the uniform, adaptive and neural models.

    ``predict``/``update`` are the per-context reference API.  The codec uses
    the level-granular hooks (``begin_stream``, ``begin_level``,
    ``probs_for_level``, ``prob_for_symbol``, ``observe``) which must produce
    the same quantized probabilities on the encode and decode sides.
    """

    model_id = -1
    name = "base"
    needs_voxel_context = False
    needs_point_context = False
    weights_hash = 0
    k = 0

    def predict(self, ctx) -> Probability:
        raise NotImplementedError

    def update(self, ctx, bit: int) -> None:
        """Adaptive state hook; no-op unless the model learns during coding."""

    # --- codec fast paths -------------------------------------------------
    def begin_stream(self) -> None:
        """Reset any per-stream adaptive state."""

    def begin_level(self, state) -> None:
        """Precompute whatever is known before the level's first symbol."""

    def probs_for_level(self, state, bits: np.ndarray) -> np.ndarray:
        """Encoder path: quantized probabilities for all level symbols.

        Called once with the true bits; adaptive state must end up exactly as
        if update() had been called per symbol in coding order.
        """
        raise NotImplementedError

    def prob_for_symbol(self, state, t: int, bits: np.ndarray) -> int:
        """Decoder path: quantized probability for symbol t given bits[:t]."""
        raise NotImplementedError

    def observe(self, state, t: int, bit: int) -> None:
        """Decoder path: account the decoded symbol (adaptive models only)."""
