"""Binary range coder with byte-wise renormalization.

Probabilities are 16-bit quantized: p1 = pq / 65536 with pq in [1, 65535], so
both symbols always keep nonzero coding mass.  The split of the current range
is r1 = floor(range * pq / 65536) clamped into [1, range - 1]; symbol 1 takes
the low part [low, low + r1) and symbol 0 the remainder.  Renormalization
emits a byte whenever range drops below 2^24; carries are absorbed by the
64-bit low accumulator and resolved through a cache/pending-0xFF chain, so the
coding loop is integer-only and payloads are byte-identical everywhere.

The decoder mirrors the encoder state transition for state transition; it
reads exactly the bytes the encoder emitted (5 priming bytes + one per
renormalization), which the codec layer checks against the payload length.
"""

from __future__ import annotations

from .errors import FormatError

_TOP = 1 << 24
_MASK32 = 0xFFFFFFFF
PROB_BITS = 16
PROB_ONE = 1 << PROB_BITS  # 65536


class RangeEncoder:
    def __init__(self):
        self._low = 0  # may hold a carry in bit 32
        self._range = _MASK32
        self._cache = 0
        self._cache_size = 1
        self._out = bytearray()
        self._finished = False

    def encode(self, bit: int, pq: int) -> None:
        """Code one binary symbol with P(bit=1) = pq / 65536."""
        r = self._range
        r1 = (r * pq) >> PROB_BITS
        if r1 == 0:
            r1 = 1
        elif r1 >= r:
            r1 = r - 1
        if bit:
            r = r1
        else:
            self._low += r1
            r -= r1
        while r < _TOP:
            self._shift_low()
            r = (r << 8) & _MASK32
        self._range = r

    def _shift_low(self):
        low = self._low
        if low < 0xFF000000 or low > _MASK32:
            carry = low >> 32
            out = self._out
            out.append((self._cache + carry) & 0xFF)
            filler = (0xFF + carry) & 0xFF
            for _ in range(self._cache_size - 1):
                out.append(filler)
            self._cache_size = 0
            self._cache = (low >> 24) & 0xFF
        self._cache_size += 1
        self._low = (low << 8) & _MASK32

    def finish(self) -> bytes:
        """Flush the tail (5 bytes) and return the payload."""
        if self._finished:
            raise FormatError("finish() called twice on one encoder")
        for _ in range(5):
            self._shift_low()
        self._finished = True
        return bytes(self._out)


class RangeDecoder:
    def __init__(self, payload: bytes):
        self._data = payload
        self._pos = 0
        self._range = _MASK32
        self._code = 0
        self._read_byte()  # the encoder's initial cache byte
        for _ in range(4):
            self._code = ((self._code << 8) | self._read_byte()) & _MASK32

    def _read_byte(self) -> int:
        if self._pos >= len(self._data):
            raise FormatError(f"range-coded payload exhausted at byte {self._pos}")
        b = self._data[self._pos]
        self._pos += 1
        return b

    def decode(self, pq: int) -> int:
        """Decode one binary symbol; pq must equal the encoder's probability."""
        r = self._range
        r1 = (r * pq) >> PROB_BITS
        if r1 == 0:
            r1 = 1
        elif r1 >= r:
            r1 = r - 1
        if self._code < r1:
            bit = 1
            r = r1
        else:
            bit = 0
            self._code -= r1
            r -= r1
        while r < _TOP:
            self._code = ((self._code << 8) | self._read_byte()) & _MASK32
            r = (r << 8) & _MASK32
        self._range = r
        return bit

    @property
    def consumed(self) -> int:
        return self._pos


def encode_bits(bits, pqs) -> bytes:
    """Encode a whole (bits, probabilities) sequence into a payload."""
    enc = RangeEncoder()
    for bit, pq in zip(bits, pqs):
        enc.encode(bit, pq)
    return enc.finish()


def decode_bits(payload: bytes, pqs) -> list:
    """Decode len(pqs) symbols; inverse of encode_bits for matching pqs."""
    dec = RangeDecoder(payload)
    return [dec.decode(pq) for pq in pqs]
