"""Portable deterministic PRNG and seed-stream derivation.

Generation must be byte-identical across platforms and runs, so no use of
``random`` or NumPy generators anywhere in the generation or dynamics paths.
The generator is xoshiro256** (Blackman & Vigna) seeded via splitmix64; named
streams are derived by FNV-1a hashing of a (seed, floor, tag) triple.  All
arithmetic is modulo 2**64.
"""

from __future__ import annotations

MASK64 = 0xFFFFFFFFFFFFFFFF

_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_SPLITMIX_MUL1 = 0xBF58476D1CE4E5B9
_SPLITMIX_MUL2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns (next_state, output)."""
    state = (state + _SPLITMIX_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * _SPLITMIX_MUL1) & MASK64
    z = ((z ^ (z >> 27)) * _SPLITMIX_MUL2) & MASK64
    z = z ^ (z >> 31)
    return state, z


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for byte in data:
        h = ((h ^ byte) * _FNV_PRIME) & MASK64
    return h


def derive_seed(*parts: int | str) -> int:
    """Hash a mixed tuple of ints and tags into one 64-bit stream seed.

    Ints are encoded as 8 little-endian bytes (mod 2**64), strings as UTF-8;
    each part is prefixed by a kind byte so ("a", 1) and (1, "a") differ.
    """
    h = _FNV_OFFSET
    for part in parts:
        if isinstance(part, str):
            payload = b"s" + part.encode("utf-8")
        else:
            payload = b"i" + (part & MASK64).to_bytes(8, "little")
        for byte in payload:
            h = ((h ^ byte) * _FNV_PRIME) & MASK64
    # Final avalanche so related tags give unrelated streams.
    _, out = splitmix64(h)
    return out


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class Stream:
    """xoshiro256** generator over one derived seed."""

    __slots__ = ("s0", "s1", "s2", "s3")

    def __init__(self, seed: int):
        state = seed & MASK64
        state, self.s0 = splitmix64(state)
        state, self.s1 = splitmix64(state)
        state, self.s2 = splitmix64(state)
        state, self.s3 = splitmix64(state)

    @classmethod
    def for_tag(cls, *parts: int | str) -> "Stream":
        return cls(derive_seed(*parts))

    def u64(self) -> int:
        s0, s1, s2, s3 = self.s0, self.s1, self.s2, self.s3
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self.s0, self.s1, self.s2, self.s3 = s0, s1, s2, s3
        return result

    def below(self, n: int) -> int:
        """Unbiased integer in [0, n) via rejection sampling."""
        if n <= 0:
            raise ValueError(f"below() needs n >= 1, got {n}")
        if n == 1:
            return 0
        limit = MASK64 + 1 - ((MASK64 + 1) % n)
        while True:
            v = self.u64()
            if v < limit:
                return v % n

    def randint(self, lo: int, hi: int) -> int:
        """Inclusive range [lo, hi]."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.below(hi - lo + 1)

    def unit(self) -> float:
        """Uniform float in [0, 1) with 53 bits of precision."""
        return (self.u64() >> 11) * (1.0 / (1 << 53))

    def choice(self, seq):
        if not seq:
            raise ValueError("choice() on empty sequence")
        return seq[self.below(len(seq))]

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def weighted_index(self, weights) -> int:
        """Index drawn proportionally to non-negative float weights."""
        total = 0.0
        for w in weights:
            if w < 0:
                raise ValueError("negative weight")
            total += w
        if total <= 0:
            raise ValueError("weights sum to zero")
        u = self.unit() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if u < acc:
                return i
        return len(weights) - 1

    def state(self) -> tuple[int, int, int, int]:
        return (self.s0, self.s1, self.s2, self.s3)

    def clone(self) -> "Stream":
        other = Stream.__new__(Stream)
        other.s0, other.s1, other.s2, other.s3 = self.s0, self.s1, self.s2, self.s3
        return other
