"""Adaptive binary range coder (32-bit, LZMA-style carry handling).

Format notes, fixed for bit-exact output:

* probabilities are 11-bit (``P_ONE = 2048``), initialised to 1024 and
  adapted with shift 5 toward the coded bit;
* ``bound = (range >> 11) * p``; bit 0 takes ``[low, low + bound)``;
* renormalise while ``range < 2**24``, emitting one byte per step;
* carries are resolved with a cached byte plus a run of pending 0xFF
  bytes, so the first emitted byte is always 0x00;
* ``finish`` flushes five bytes; the decoder primes with five bytes.
"""

from ..errors import DecodeError

PROB_BITS = 11
P_ONE = 1 << PROB_BITS
P_INIT = P_ONE >> 1
MOVE_BITS = 5
TOP = 1 << 24
MASK32 = 0xFFFFFFFF


class Contexts:
    """A bank of adaptive binary probabilities."""

    __slots__ = ("p",)

    def __init__(self, n):
        self.p = [P_INIT] * n


class RangeEncoder:
    def __init__(self):
        self.low = 0
        self.range = MASK32
        self.cache = 0
        self.cache_size = 1
        self.out = bytearray()

    def _shift_low(self):
        low = self.low
        if low < 0xFF000000 or low > MASK32:
            carry = low >> 32
            temp = self.cache
            while True:
                self.out.append((temp + carry) & 0xFF)
                temp = 0xFF
                self.cache_size -= 1
                if self.cache_size == 0:
                    break
            self.cache = (low >> 24) & 0xFF
        self.cache_size += 1
        self.low = (low & 0x00FFFFFF) << 8

    def encode(self, ctx: Contexts, i: int, bit: int):
        p = ctx.p[i]
        bound = (self.range >> PROB_BITS) * p
        if bit:
            self.low += bound
            self.range -= bound
            ctx.p[i] = p - (p >> MOVE_BITS)
        else:
            self.range = bound
            ctx.p[i] = p + ((P_ONE - p) >> MOVE_BITS)
        while self.range < TOP:
            self.range = (self.range << 8) & MASK32
            self._shift_low()

    def encode_direct(self, value: int, nbits: int):
        """Equiprobable bits, most significant first."""
        for b in range(nbits - 1, -1, -1):
            self.range >>= 1
            if (value >> b) & 1:
                self.low += self.range
            while self.range < TOP:
                self.range = (self.range << 8) & MASK32
                self._shift_low()

    def finish(self) -> bytes:
        for _ in range(5):
            self._shift_low()
        return bytes(self.out)


class RangeDecoder:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0
        self.range = MASK32
        self.code = 0
        if len(data) < 5:
            raise DecodeError("range-coded payload shorter than 5 bytes")
        for _ in range(5):
            self.code = ((self.code << 8) | data[self.pos]) & MASK32
            self.pos += 1

    def _next(self):
        if self.pos >= len(self.data):
            raise DecodeError("range decoder ran past the end of the payload")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def decode(self, ctx: Contexts, i: int) -> int:
        p = ctx.p[i]
        bound = (self.range >> PROB_BITS) * p
        if self.code < bound:
            self.range = bound
            ctx.p[i] = p + ((P_ONE - p) >> MOVE_BITS)
            bit = 0
        else:
            self.code -= bound
            self.range -= bound
            ctx.p[i] = p - (p >> MOVE_BITS)
            bit = 1
        while self.range < TOP:
            self.range = (self.range << 8) & MASK32
            self.code = ((self.code << 8) | self._next()) & MASK32
        return bit

    def decode_direct(self, nbits: int) -> int:
        v = 0
        for _ in range(nbits):
            self.range >>= 1
            if self.code >= self.range:
                self.code -= self.range
                v = (v << 1) | 1
            else:
                v <<= 1
            while self.range < TOP:
                self.range = (self.range << 8) & MASK32
                self.code = ((self.code << 8) | self._next()) & MASK32
        return v

    @property
    def consumed(self) -> int:
        return self.pos
