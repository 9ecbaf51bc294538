"""Neighbourhoods, configurations, noise fields and the synchronous update.

Site conventions:

* ring of half-width ``n``: sites ``x`` in ``[-n, n-1]``, stored at index
  ``x + n``; noise is addressed by that storage index.
* line window ``[lo, hi]``: sites stored at ``x - lo``; noise is addressed by
  the absolute site ``x`` so windows of different extent see the same field.

The update is ``new[x] = omega[x] AND max(old[y] for y in U(x))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_REPLICA_DOMAIN = 0x5EED5EED00000000
_COUPLED_DOMAIN = 0xC0C0C0C0C0C0C0C0
_LEVEL_INC = [np.uint64(((lvl + 1) * int(K.GOLDEN)) & 0xFFFFFFFFFFFFFFFF) for lvl in range(32)]


class InvalidNeighborhoodError(ValueError):
    pass


class ConeViolationError(RuntimeError):
    """A line window is too narrow for the requested evolution."""


def _mix64_py(z: int) -> int:
    z &= 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    z ^= z >> np.uint64(30)
    z *= _M1
    z ^= z >> np.uint64(27)
    z *= _M2
    z ^= z >> np.uint64(31)
    return z


def replica_seed(master_seed: int, replica_index: int) -> int:
    """Derive the 64-bit seed of one replica.

    ``seed = splitmix64(master_seed + (replica_index + 1) * 0x9E3779B97F4A7C15)``
    (all arithmetic mod 2**64). The finaliser is a bijection and the odd
    multiplier makes the pre-image injective in the index, so seeds derived
    from one master never collide.
    """
    if replica_index < 0:
        raise ValueError("replica_index must be >= 0")
    return _mix64_py(master_seed + (replica_index + 1) * 0x9E3779B97F4A7C15)


def threshold(p: float) -> int:
    """32-bit open threshold: a vertex is open iff its uniform word is below it."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p >= 1.0:
        return K.THRESH_FULL
    return int(p * K.THRESH_FULL)


@dataclass(frozen=True)
class Neighborhood:
    offsets: tuple[int, ...]

    def __post_init__(self):
        if len(self.offsets) == 0:
            raise InvalidNeighborhoodError("neighbourhood must contain at least one offset")
        if any(b <= a for a, b in zip(self.offsets, self.offsets[1:])):
            raise InvalidNeighborhoodError("offsets must be strictly increasing")

    @property
    def span(self) -> int:
        return self.offsets[-1] - self.offsets[0]

    @property
    def s1(self) -> int:
        return self.offsets[0]

    @property
    def su(self) -> int:
        return self.offsets[-1]

    def reflected(self) -> Neighborhood:
        return Neighborhood(tuple(sorted(-s for s in self.offsets)))

    def filled(self) -> Neighborhood:
        return Neighborhood(tuple(range(self.s1, self.su + 1)))

    def issubset(self, other: Neighborhood) -> bool:
        return set(self.offsets) <= set(other.offsets)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.offsets, dtype=np.int64)

    def __str__(self):
        return ",".join(str(s) for s in self.offsets)


def make_neighborhood(offsets) -> Neighborhood:
    if isinstance(offsets, Neighborhood):
        return offsets
    offsets = [int(s) for s in offsets]
    if not offsets:
        raise InvalidNeighborhoodError("neighbourhood must contain at least one offset")
    return Neighborhood(tuple(sorted(set(offsets))))


def periodic_neighbors(x: int, n: int, U: Neighborhood) -> list[int]:
    if not -n <= x <= n - 1:
        raise IndexError(f"site {x} outside [-{n}, {n - 1}]")
    return [(x + s + n) % (2 * n) - n for s in U.offsets]


@dataclass(frozen=True, eq=False)
class RingConfig:
    n: int
    bits: np.ndarray  # bool, index i <-> site i - n

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("half-width must be positive")
        b = np.asarray(self.bits, dtype=bool)
        if b.shape != (2 * self.n,):
            raise ValueError(f"expected {2 * self.n} sites, got shape {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    @classmethod
    def ones(cls, n: int) -> RingConfig:
        return cls(n, np.ones(2 * n, dtype=bool))

    @classmethod
    def zeros(cls, n: int) -> RingConfig:
        return cls(n, np.zeros(2 * n, dtype=bool))

    def __getitem__(self, x: int) -> bool:
        return bool(self.bits[x + self.n])

    def __eq__(self, other):
        return isinstance(other, RingConfig) and self.n == other.n and np.array_equal(self.bits, other.bits)

    def to_int(self) -> int:
        """Little-endian index with site -n at bit 0."""
        return int(sum(1 << i for i, v in enumerate(self.bits) if v))

    @classmethod
    def from_int(cls, n: int, value: int) -> RingConfig:
        return cls(n, np.array([(value >> i) & 1 for i in range(2 * n)], dtype=bool))

    def packed(self) -> np.ndarray:
        return pack_bits(self.bits)


@dataclass(frozen=True, eq=False)
class LineConfig:
    lo: int
    hi: int
    bits: np.ndarray  # bool, index i <-> site lo + i
    outside_value: bool = False

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError("window requires lo <= hi")
        b = np.asarray(self.bits, dtype=bool)
        if b.shape != (self.hi - self.lo + 1,):
            raise ValueError("bits length does not match the window")
        b.setflags(write=False)
        object.__setattr__(self, "bits", b)

    def __getitem__(self, x: int) -> bool:
        if self.lo <= x <= self.hi:
            return bool(self.bits[x - self.lo])
        return bool(self.outside_value)

    def __eq__(self, other):
        return (
            isinstance(other, LineConfig)
            and (self.lo, self.hi, self.outside_value) == (other.lo, other.hi, other.outside_value)
            and np.array_equal(self.bits, other.bits)
        )

    @classmethod
    def massif(cls, lo: int, hi: int, x: int, y: int) -> LineConfig:
        """Zeros on [x, y], ones elsewhere (including outside the window)."""
        bits = np.ones(hi - lo + 1, dtype=bool)
        bits[x - lo : y - lo + 1] = False
        return cls(lo, hi, bits, outside_value=True)


@dataclass(frozen=True)
class NoiseField:
    """Bernoulli(p) space-time bits keyed on (site, time).

    Every bit is a pure function of ``(master_seed, p, coupled, g, t)``. With
    ``coupled=True`` the underlying uniforms do not depend on ``p``, so the
    fields for ``p <= p'`` satisfy ``omega <= omega'`` pointwise.
    """

    p: float
    master_seed: int
    coupled: bool = False
    thresh: int = field(init=False)
    key: int = field(init=False)

    def __post_init__(self):
        th = threshold(self.p)
        object.__setattr__(self, "thresh", th)
        if self.coupled:
            key = _mix64_py(self.master_seed ^ _COUPLED_DOMAIN)
        else:
            key = _mix64_py(self.master_seed ^ _mix64_py(th + _REPLICA_DOMAIN))
        object.__setattr__(self, "key", key)

    def uniforms(self, t: int, g_lo: int, g_hi: int) -> np.ndarray:
        """32-bit uniforms of storage sites g_lo..g_hi at time row t."""
        g = np.arange(g_lo, g_hi + 1, dtype=np.int64)
        w = g >> 6
        b = (g & 63).astype(np.uint64)
        rk = np.uint64(K.row_key(np.uint64(self.key), t))
        wk = _mix64_np(rk + w.astype(np.uint64) * K.WORD_MUL)
        v = np.zeros(g.shape, dtype=np.uint64)
        for lvl in range(32):
            lw = _mix64_np(wk + _LEVEL_INC[lvl])
            v |= ((lw >> b) & np.uint64(1)) << np.uint64(lvl)
        return v

    def row(self, t: int, g_lo: int, g_hi: int) -> np.ndarray:
        if self.thresh >= K.THRESH_FULL:
            return np.ones(g_hi - g_lo + 1, dtype=bool)
        return self.uniforms(t, g_lo, g_hi) < np.uint64(self.thresh)

    def box(self, g_lo: int, g_hi: int, t_lo: int, t_hi: int) -> np.ndarray:
        """Bits for rows t_lo..t_hi-1 (shape rows x sites)."""
        return np.stack([self.row(t, g_lo, g_hi) for t in range(t_lo, t_hi)]) if t_hi > t_lo else np.zeros(
            (0, g_hi - g_lo + 1), dtype=bool
        )

    def ring_row(self, n: int, t: int) -> np.ndarray:
        return self.row(t, 0, 2 * n - 1)

    def line_row(self, lo: int, hi: int, t: int) -> np.ndarray:
        return self.row(t, lo, hi)

    def packed_row(self, t: int, w_first: int, nwords: int) -> np.ndarray:
        out = np.zeros(nwords, dtype=np.uint64)
        K.fill_noise(np.uint64(self.key), t, w_first, nwords, self.thresh, out)
        return out


def step(config, noise_row, U: Neighborhood):
    """One synchronous update driven by an explicit noise row.

    For a ring the row has one entry per site. For a line window the row
    covers the window; sites whose neighbourhood leaves the window read the
    outside value, which must be what the caller intends (cone checks are the
    caller's job, see ``check_cone``).
    """
    noise_row = np.asarray(noise_row, dtype=bool)
    if isinstance(config, RingConfig):
        if noise_row.shape != config.bits.shape:
            raise ValueError("noise row must cover every ring site")
        alive = np.zeros_like(config.bits)
        for s in U.offsets:
            alive |= np.roll(config.bits, -s)
        return RingConfig(config.n, alive & noise_row)
    if isinstance(config, LineConfig):
        if noise_row.shape != config.bits.shape:
            raise ValueError("noise row must cover the window")
        width = config.bits.size
        pad = max(abs(s) for s in U.offsets)
        ext = np.full(width + 2 * pad, config.outside_value, dtype=bool)
        ext[pad : pad + width] = config.bits
        alive = np.zeros(width, dtype=bool)
        for s in U.offsets:
            alive |= ext[pad + s : pad + s + width]
        return LineConfig(config.lo, config.hi, alive & noise_row, config.outside_value)
    raise TypeError(f"unsupported configuration type {type(config).__name__}")


def check_cone(window: tuple[int, int], sites: tuple[int, int], steps: int, U: Neighborhood) -> None:
    """Raise unless the backward cone of ``sites`` over ``steps`` fits the window."""
    lo, hi = window
    a, b = sites
    need_lo = a + min(U.s1 * steps, 0)
    need_hi = b + max(U.su * steps, 0)
    if need_lo < lo or need_hi > hi:
        raise ConeViolationError(
            f"cone of sites [{a}, {b}] over {steps} steps needs window [{need_lo}, {need_hi}], have [{lo}, {hi}]"
        )


def pack_bits(bits) -> np.ndarray:
    """Pack a bool vector into uint64 words (bit i -> word i>>6, bit i&63), plus one spare word."""
    bits = np.asarray(bits, dtype=bool)
    nwords = (bits.size + 63) // 64
    padded = np.zeros(nwords * 64, dtype=np.uint8)
    padded[: bits.size] = bits
    words = np.packbits(padded.reshape(-1, 8), axis=1, bitorder="little").reshape(nwords, 8)
    out = np.zeros(nwords + 1, dtype=np.uint64)
    out[:nwords] = words.copy().view("<u8").reshape(nwords)
    return out


@dataclass
class PackedLine:
    """A line window laid out for the packed kernels (halo words on both sides)."""

    lo: int
    nbits: int
    halo: int
    words: np.ndarray

    @classmethod
    def from_config(cls, config: LineConfig, U: Neighborhood) -> PackedLine:
        reach = max(abs(s) for s in U.offsets)
        halo = reach // 64 + 1
        nbits = config.bits.size
        nwords = (nbits + 63) // 64
        fill = np.uint64(0xFFFFFFFFFFFFFFFF) if config.outside_value else np.uint64(0)
        words = np.full(2 * halo + nwords, fill, dtype=np.uint64)
        body = pack_bits(config.bits)[:nwords]
        tail = nbits % 64
        if tail and config.outside_value:
            body[-1] |= ~np.uint64((1 << tail) - 1)
        words[halo : halo + nwords] = body
        return cls(config.lo, nbits, halo, words)

    def bits_of(self, words: np.ndarray) -> np.ndarray:
        return unpack_bits(words, self.nbits, 64 * self.halo)


def unpack_bits(words: np.ndarray, nbits: int, offset: int = 0) -> np.ndarray:
    """Inverse of pack_bits starting at bit ``offset``."""
    w = np.ascontiguousarray(words, dtype="<u8")
    raw = np.unpackbits(w.view(np.uint8), bitorder="little")
    return raw[offset : offset + nbits].astype(bool)
