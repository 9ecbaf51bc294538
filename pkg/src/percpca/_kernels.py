"""Bit-packed update kernels and counter-based noise generation (numba).

Storage layout: site with storage index ``g`` lives in word ``g >> 6`` at bit
``g & 63``. Bits past the last valid site are kept at zero on rings.

Noise: the open/closed bit of vertex ``(g, t)`` is ``V(g, t) < P`` where
``P = floor(p * 2**32)`` and ``V`` is a 32-bit integer whose bit ``l`` is bit
``g & 63`` of ``level_word(key, t, g >> 6, l)``. Evaluating that comparison
level by level over whole words yields the Bernoulli mask of 64 sites at once.
"""

from __future__ import annotations

import numpy as np
from numba import njit

MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)
GOLDEN = np.uint64(0x9E3779B97F4A7C15)
ROW_MUL = np.uint64(0xD1B54A32D192ED03)
WORD_MUL = np.uint64(0xAEF17502108EF2D9)
THRESH_FULL = 1 << 32


@njit(cache=True, nogil=True)
def mix64(z):
    z = np.uint64(z)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True)
def row_key(key, t):
    return mix64(np.uint64(key) + np.uint64(t + 1) * ROW_MUL)


@njit(cache=True, nogil=True)
def word_key(rkey, w):
    # w may be negative on line windows; two's complement wrap is intended
    return mix64(rkey + np.uint64(np.int64(w)) * WORD_MUL)


@njit(cache=True, nogil=True)
def level_word(wkey, level):
    return mix64(wkey + np.uint64(level + 1) * GOLDEN)


@njit(cache=True, nogil=True)
def open_word(rkey, w, thresh, lanes):
    """Lanes of word ``w`` whose 32-bit uniform V satisfies V < thresh.

    Compares from the most significant level down and stops once every
    requested lane is decided, so typically only a handful of levels are hashed.
    """
    if thresh <= 0:
        return np.uint64(0)
    if thresh >= THRESH_FULL:
        return lanes
    wk = word_key(rkey, w)
    lt = np.uint64(0)
    und = lanes
    lvl = 31
    while lvl >= 0 and und != 0:
        v = level_word(wk, lvl)
        if (thresh >> lvl) & 1:
            lt |= und & ~v
            und &= v
        else:
            und &= ~v
        lvl -= 1
    return lt


@njit(cache=True, nogil=True)
def fill_noise(key, t, w_first, nwords, thresh, out):
    rk = row_key(key, t)
    for i in range(nwords):
        out[i] = open_word(rk, w_first + i, thresh, MASK64)


@njit(cache=True, nogil=True)
def fill_ring_noise(key, t, nsites, thresh, out):
    """Like fill_noise from word 0, leaving lanes past ``nsites`` closed."""
    rk = row_key(key, t)
    nwords = (nsites + 63) >> 6
    for i in range(nwords):
        lanes = MASK64
        if i == nwords - 1 and nsites & 63:
            lanes = (np.uint64(1) << np.uint64(nsites & 63)) - np.uint64(1)
        out[i] = open_word(rk, i, thresh, lanes)


@njit(cache=True, nogil=True)
def fill_line_noise(key, t, x_lo, nwords, thresh, raw, out):
    """Noise words for a window whose bit 0 is absolute site ``x_lo``."""
    w_first = x_lo >> 6
    o = x_lo & 63
    fill_noise(key, t, w_first, nwords + 1, thresh, raw)
    if o == 0:
        for i in range(nwords):
            out[i] = raw[i]
    else:
        for i in range(nwords):
            out[i] = (raw[i] >> np.uint64(o)) | (raw[i + 1] << np.uint64(64 - o))


@njit(cache=True, nogil=True)
def _read_linear(arr, pos):
    # 64 bits starting at bit pos; arr must carry one spare trailing word
    w = pos >> 6
    o = pos & 63
    if o == 0:
        return arr[w]
    return (arr[w] >> np.uint64(o)) | (arr[w + 1] << np.uint64(64 - o))


@njit(cache=True, nogil=True)
def _read_ring(arr, nsites, pos):
    # 64 bits starting at bit pos (0 <= pos < nsites), wrapping at nsites > 64
    if pos + 64 <= nsites:
        return _read_linear(arr, pos)
    head = nsites - pos
    lo = _read_linear(arr, pos) & ((np.uint64(1) << np.uint64(head)) - np.uint64(1))
    return lo | (_read_linear(arr, 0) << np.uint64(head))


@njit(cache=True, nogil=True)
def ring_step(old, new, nsites, offsets, mask):
    """One synchronous ring update; new[g] = mask[g] & OR_s old[(g + s) mod nsites]."""
    nwords = (nsites + 63) >> 6
    if nsites <= 64:
        full = MASK64 if nsites == 64 else (np.uint64(1) << np.uint64(nsites)) - np.uint64(1)
        x = old[0]
        acc = np.uint64(0)
        for s in offsets:
            r = s % nsites
            if r == 0:
                acc |= x
            else:
                acc |= (x >> np.uint64(r)) | (x << np.uint64(nsites - r))
        new[0] = acc & full & mask[0]
        return
    for w in range(nwords):
        acc = np.uint64(0)
        base = w << 6
        for s in offsets:
            acc |= _read_ring(old, nsites, (base + s) % nsites)
        new[w] = acc & mask[w]
    tail = nsites & 63
    if tail:
        new[nwords - 1] &= (np.uint64(1) << np.uint64(tail)) - np.uint64(1)


@njit(cache=True, nogil=True)
def line_step(old, new, halo, nbits, offsets, outside, mask):
    """One synchronous update on a padded line window.

    ``old``/``new`` hold ``halo`` words of padding on each side followed by the
    window words; padding and bits past ``nbits`` hold the constant outside
    value and are never updated.
    """
    nwords = (nbits + 63) >> 6
    fill = MASK64 if outside else np.uint64(0)
    for w in range(nwords):
        acc = np.uint64(0)
        base = (halo + w) << 6
        for s in offsets:
            acc |= _read_linear(old, base + s)
        new[halo + w] = acc & mask[w]
    tail = nbits & 63
    if tail:
        keep = (np.uint64(1) << np.uint64(tail)) - np.uint64(1)
        new[halo + nwords - 1] = (new[halo + nwords - 1] & keep) | (fill & ~keep)
    for i in range(halo):
        new[i] = fill
    for i in range(halo + nwords, new.shape[0]):
        new[i] = fill


@njit(cache=True, nogil=True)
def is_zero(arr, lo, hi):
    for i in range(lo, hi):
        if arr[i] != 0:
            return False
    return True


@njit(cache=True, nogil=True)
def ring_absorption(nsites, offsets, key, thresh, t_max):
    """Absorption time from all-ones; -1 when not absorbed by t_max."""
    nwords = (nsites + 63) >> 6
    a = np.zeros(nwords + 1, dtype=np.uint64)
    b = np.zeros(nwords + 1, dtype=np.uint64)
    mask = np.zeros(nwords, dtype=np.uint64)
    for w in range(nwords):
        a[w] = MASK64
    if nsites & 63:
        a[nwords - 1] = (np.uint64(1) << np.uint64(nsites & 63)) - np.uint64(1)
    for t in range(t_max):
        fill_ring_noise(key, t, nsites, thresh, mask)
        ring_step(a, b, nsites, offsets, mask)
        if is_zero(b, 0, nwords):
            return t + 1
        a, b = b, a
    return -1


@njit(cache=True, nogil=True)
def ring_site_at(nsites, offsets, key, thresh, steps, site):
    """State of storage site ``site`` after ``steps`` updates from all-ones."""
    nwords = (nsites + 63) >> 6
    a = np.zeros(nwords + 1, dtype=np.uint64)
    b = np.zeros(nwords + 1, dtype=np.uint64)
    mask = np.zeros(nwords, dtype=np.uint64)
    for w in range(nwords):
        a[w] = MASK64
    if nsites & 63:
        a[nwords - 1] = (np.uint64(1) << np.uint64(nsites & 63)) - np.uint64(1)
    for t in range(steps):
        fill_ring_noise(key, t, nsites, thresh, mask)
        ring_step(a, b, nsites, offsets, mask)
        if is_zero(b, 0, nwords):
            return 0
        a, b = b, a
    return int((a[site >> 6] >> np.uint64(site & 63)) & np.uint64(1))


@njit(cache=True, nogil=True)
def ring_trajectory(init, nsites, offsets, key, thresh, steps):
    nwords = (nsites + 63) >> 6
    out = np.zeros((steps + 1, nwords + 1), dtype=np.uint64)
    out[0, :nwords] = init[:nwords]
    mask = np.zeros(nwords, dtype=np.uint64)
    for t in range(steps):
        fill_ring_noise(key, t, nsites, thresh, mask)
        ring_step(out[t], out[t + 1], nsites, offsets, mask)
    return out


@njit(cache=True, nogil=True)
def line_trajectory(init, halo, nbits, x_lo, offsets, outside, key, thresh, steps):
    """Trajectory on a padded line window whose first site is ``x_lo``."""
    nwords = (nbits + 63) >> 6
    out = np.zeros((steps + 1, init.shape[0]), dtype=np.uint64)
    out[0] = init
    mask = np.zeros(nwords, dtype=np.uint64)
    raw = np.zeros(nwords + 1, dtype=np.uint64)
    for t in range(steps):
        fill_line_noise(key, t, x_lo, nwords, thresh, raw, mask)
        line_step(out[t], out[t + 1], halo, nbits, offsets, outside, mask)
    return out


@njit(cache=True, nogil=True)
def _highest_bit(arr, lo, hi):
    for w in range(hi - 1, lo - 1, -1):
        x = arr[w]
        if x != 0:
            b = 63
            while ((x >> np.uint64(b)) & np.uint64(1)) == 0:
                b -= 1
            return ((w - lo) << 6) + b
    return -1


@njit(cache=True, nogil=True)
def _lowest_bit(arr, lo, hi):
    for w in range(lo, hi):
        x = arr[w]
        if x != 0:
            b = 0
            while ((x >> np.uint64(b)) & np.uint64(1)) == 0:
                b += 1
            return ((w - lo) << 6) + b
    return -1


@njit(cache=True, nogil=True)
def line_run(init, halo, nbits, x_lo, offsets, key, thresh, steps, mode):
    """Run a line window with outside value 0.

    mode 0: rightmost occupied bit after ``steps`` (-1 if empty);
    mode 1: leftmost occupied bit; mode 2: 1 if anything survives else 0.
    Stops early once the window is empty.
    """
    nwords = (nbits + 63) >> 6
    a = init.copy()
    b = np.zeros_like(init)
    mask = np.zeros(nwords, dtype=np.uint64)
    raw = np.zeros(nwords + 1, dtype=np.uint64)
    for t in range(steps):
        fill_line_noise(key, t, x_lo, nwords, thresh, raw, mask)
        line_step(a, b, halo, nbits, offsets, False, mask)
        a, b = b, a
        if is_zero(a, halo, halo + nwords):
            return -1 if mode < 2 else 0
    if mode == 0:
        return _highest_bit(a, halo, halo + nwords)
    if mode == 1:
        return _lowest_bit(a, halo, halo + nwords)
    return 1


REPLICA_DOMAIN = np.uint64(0x5EED5EED00000000)
COUPLED_DOMAIN = np.uint64(0xC0C0C0C0C0C0C0C0)


@njit(cache=True, nogil=True)
def replica_seed(master, index):
    return mix64(np.uint64(master) + np.uint64(index + 1) * GOLDEN)


@njit(cache=True, nogil=True)
def field_key(seed, thresh, coupled):
    if coupled:
        return mix64(np.uint64(seed) ^ COUPLED_DOMAIN)
    return mix64(np.uint64(seed) ^ mix64(np.uint64(thresh) + REPLICA_DOMAIN))


@njit(cache=True, nogil=True)
def batch_absorption(nsites, offsets, master, thresh, coupled, t_max, i0, i1, out):
    for i in range(i0, i1):
        key = field_key(replica_seed(master, i), thresh, coupled)
        out[i] = ring_absorption(nsites, offsets, key, thresh, t_max)


@njit(cache=True, nogil=True)
def batch_site_at(nsites, offsets, master, thresh, coupled, steps, site, i0, i1, out):
    for i in range(i0, i1):
        key = field_key(replica_seed(master, i), thresh, coupled)
        out[i] = ring_site_at(nsites, offsets, key, thresh, steps, site)


@njit(cache=True, nogil=True)
def batch_line_run(init, halo, nbits, x_lo, offsets, master, thresh, coupled, steps, mode, i0, i1, out):
    for i in range(i0, i1):
        key = field_key(replica_seed(master, i), thresh, coupled)
        out[i] = line_run(init, halo, nbits, x_lo, offsets, key, thresh, steps, mode)
