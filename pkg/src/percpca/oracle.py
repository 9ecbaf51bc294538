"""Exact small-instance computations.

Two independent routes to the law of the ring process are provided:
``exact_evolve`` applies the transfer operator (products of per-site
transition probabilities) to a distribution over all 2^(2n) configurations,
while ``enumerate_omega_tau_tail`` enumerates every noise field and runs the
deterministic min/max map. Guards are hard errors.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernels as K
from .core import NoiseField, make_neighborhood, periodic_neighbors, replica_seed
from .core import RingConfig

MAX_RING_SITES = 16
MAX_OMEGA_BITS = 24
MAX_TWO_STEP_J = 12
MAX_ONE_STEP_J = 20


class GuardError(ValueError):
    """Instance too large to enumerate exactly."""


@dataclass(frozen=True)
class ExactDistribution:
    n: int
    probs: np.ndarray  # index: little-endian config bits, site -n at bit 0

    @classmethod
    def delta(cls, n: int, config: int) -> ExactDistribution:
        probs = np.zeros(1 << (2 * n))
        probs[config] = 1.0
        return cls(n, probs)

    @classmethod
    def all_ones(cls, n: int) -> ExactDistribution:
        return cls.delta(n, (1 << (2 * n)) - 1)

    @classmethod
    def all_zeros(cls, n: int) -> ExactDistribution:
        return cls.delta(n, 0)

    def total(self) -> float:
        return math.fsum(self.probs)


def _rotations(n: int, U) -> list[int]:
    return [s % (2 * n) for s in U.offsets]


def _alive(configs: np.ndarray, n: int, U) -> np.ndarray:
    """Bitmask of sites with at least one occupied neighbour (ring of 2n sites)."""
    N = 2 * n
    full = (1 << N) - 1
    out = np.zeros_like(configs)
    for r in _rotations(n, U):
        if r == 0:
            out |= configs
        else:
            out |= ((configs >> r) | (configs << (N - r))) & full
    return out


def _guard_ring(n: int) -> None:
    if n < 1 or 2 * n > MAX_RING_SITES:
        raise GuardError(f"ring of {2 * n} sites exceeds the exact-evolution guard ({MAX_RING_SITES})")


def exact_evolve(n: int, U, p: float, mu0: ExactDistribution, t: int) -> ExactDistribution:
    """Apply the transfer operator t times.

    Given a source configuration, a site with an occupied neighbour becomes 1
    with probability p and a site without one becomes 0; sites update
    independently. The target law from source s is therefore the product
    measure on the alive set A(s); summing over sources is done by grouping
    them by A and spreading each group's mass over the subsets of A.
    """
    U = make_neighborhood(U)
    _guard_ring(n)
    N = 2 * n
    size = 1 << N
    configs = np.arange(size, dtype=np.int64)
    alive = _alive(configs, n, U)
    q = 1.0 - p
    probs = np.asarray(mu0.probs, dtype=float)
    for _ in range(t):
        mass = np.bincount(alive, weights=probs, minlength=size)
        for i in range(N):
            view = mass.reshape(-1, 2, 1 << i)
            unset = view[:, 0, :] + q * view[:, 1, :]
            view[:, 1, :] *= p
            view[:, 0, :] = unset
        probs = mass
    return ExactDistribution(n, probs)


def exact_evolve_dense(n: int, U, p: float, mu0: ExactDistribution, t: int) -> ExactDistribution:
    """Literal double sum over (source, target) pairs; for cross-checking tiny rings."""
    U = make_neighborhood(U)
    if 2 * n > 8:
        raise GuardError("dense evolution limited to 8 sites")
    ring = [periodic_neighbors(x, n, U) for x in range(-n, n)]
    size = 1 << (2 * n)
    probs = np.asarray(mu0.probs, dtype=float)
    for _ in range(t):
        nxt = np.zeros(size)
        for src in range(size):
            if probs[src] == 0.0:
                continue
            for dst in range(size):
                w = 1.0
                for i, nb in enumerate(ring):
                    occupied = any((src >> (k + n)) & 1 for k in nb)
                    one = (dst >> i) & 1
                    if occupied:
                        w *= p if one else 1.0 - p
                    elif one:
                        w = 0.0
                        break
                nxt[dst] += probs[src] * w
        probs = nxt
    return ExactDistribution(n, probs)


def exact_tau_tail(n: int, U, p: float, t: int) -> float:
    """P(tau_n > t) from all ones, via the transfer operator."""
    dist = exact_evolve(n, U, p, ExactDistribution.all_ones(n), t)
    return 1.0 - float(dist.probs[0])


def exact_mean_tau(n: int, U, p: float, t_cap: int = 100_000, eps: float = 1e-14) -> float:
    """E[tau_n] = sum_t P(tau_n > t), summed until the tail drops below eps."""
    U = make_neighborhood(U)
    _guard_ring(n)
    if p >= 1.0:
        return math.inf
    dist = ExactDistribution.all_ones(n)
    terms = []
    for _ in range(t_cap):
        tail = 1.0 - float(dist.probs[0])
        terms.append(tail)
        if tail < eps:
            return math.fsum(terms)
        dist = exact_evolve(n, U, p, dist, 1)
    raise GuardError("tail did not fall below eps within t_cap steps")


def _weighted_by_popcount(counts: np.ndarray, nbits: int, p: float) -> float:
    q = 1.0 - p
    return math.fsum(float(c) * p**k * q ** (nbits - k) for k, c in enumerate(counts) if c)


def _popcount(x: np.ndarray) -> np.ndarray:
    return np.bitwise_count(x.astype(np.uint64)).astype(np.int64)


def _chunks(total_bits: int, chunk_bits: int = 20):
    size = 1 << total_bits
    step = 1 << min(total_bits, chunk_bits)
    for start in range(0, size, step):
        yield np.arange(start, min(size, start + step), dtype=np.int64)


def enumerate_omega_tau_tail(n: int, U, p: float, t: int) -> float:
    """P(tau_n > t) from all ones, by summing over every noise field."""
    U = make_neighborhood(U)
    N = 2 * n
    nbits = N * t
    if nbits > MAX_OMEGA_BITS:
        raise GuardError(f"{nbits} noise bits exceed the enumeration guard ({MAX_OMEGA_BITS})")
    if t == 0:
        return 1.0
    full = (1 << N) - 1
    counts = np.zeros(nbits + 1, dtype=np.int64)
    for omega in _chunks(nbits):
        config = np.full(omega.shape, full, dtype=np.int64)
        for k in range(t):
            config = _alive(config, n, U) & ((omega >> (N * k)) & full)
        counts += np.bincount(_popcount(omega[config != 0]), minlength=nbits + 1)
    return _weighted_by_popcount(counts, nbits, p)


@dataclass(frozen=True)
class ReachabilitySet:
    sites: tuple[int, ...]  # site labels along axis 1
    connected: np.ndarray  # bool, shape (T + 1, len(sites))

    def __call__(self, x: int, t: int) -> bool:
        return bool(self.connected[t, self.sites.index(x)])


def reachability(omega, U, topology: str, initial, n: int | None = None, lo: int | None = None) -> ReachabilitySet:
    """Vertices joined to the line t = 0 by an open path of the space-time graph.

    ``omega[t, i]`` is the open bit of site i at time t + 1; ``initial[i]`` is
    the base state at time 0. Edges run from (x, t) to (k, t - 1) for k in
    U(x); the search walks them in reverse, upward from the occupied base.
    ``topology`` is "ring" (sites -n..n-1) or "line" (sites lo..lo+S-1 with
    nothing beyond the window).
    """
    U = make_neighborhood(U)
    omega = np.asarray(omega, dtype=bool)
    initial = np.asarray(initial, dtype=bool)
    T, S = omega.shape
    if topology == "ring":
        n = S // 2 if n is None else n
        sites = tuple(range(-n, n))

        def below(x):
            return periodic_neighbors(x, n, U)

    elif topology == "line":
        lo = 0 if lo is None else lo
        sites = tuple(range(lo, lo + S))

        def below(x):
            return [x + s for s in U.offsets if lo <= x + s < lo + S]

    else:
        raise ValueError("topology must be 'ring' or 'line'")
    index = {x: i for i, x in enumerate(sites)}
    above: dict[int, list[int]] = {x: [] for x in sites}
    for x in sites:
        for k in below(x):
            above[k].append(x)
    connected = np.zeros((T + 1, S), dtype=bool)
    queue = deque()
    for x in sites:
        if initial[index[x]]:
            connected[0, index[x]] = True
            queue.append((x, 0))
    while queue:
        k, t = queue.popleft()
        if t == T:
            continue
        for x in above[k]:
            i = index[x]
            if omega[t, i] and not connected[t + 1, i]:
                connected[t + 1, i] = True
                queue.append((x, t + 1))
    return ReachabilitySet(sites, connected)


def _massif_window_probability(p: float, U, steps: int, target: tuple[int, int]) -> float:
    """P(all sites of ``target`` are 0 after ``steps`` in {1, 2}) from rho(x, y).

    rho has zeros on [x, y] with y - x = 2 span + 2 and ones elsewhere. The
    time-1 sites that can be occupied are enumerated exhaustively; time-2
    sites contribute their conditional probability of being 0.
    """
    U = make_neighborhood(U)
    x, y = 0, 2 * U.span + 2
    q = 1.0 - p

    def rho(z):
        return not (x <= z <= y)

    a, b = target
    if steps == 1:
        needed = range(a, b + 1)
    else:
        needed = range(a + U.s1, b + U.su + 1)
    free = [z for z in needed if any(rho(z + s) for s in U.offsets)]
    if len(free) > MAX_ONE_STEP_J + 2 * U.span + 4:
        raise GuardError("window too large to enumerate")
    nfree = len(free)
    configs = np.arange(1 << nfree, dtype=np.int64)
    bits = {z: (configs >> i) & 1 for i, z in enumerate(free)}
    ones = _popcount(configs)
    weight = p**ones * q ** (nfree - ones)
    zero = np.zeros_like(configs)
    if steps == 1:
        ok = np.ones(configs.shape, dtype=bool)
        for z in range(a, b + 1):
            ok &= bits.get(z, zero) == 0
        return math.fsum((weight * ok).tolist())
    factor = np.ones(configs.shape, dtype=float)
    for z in range(a, b + 1):
        occupied = np.zeros(configs.shape, dtype=bool)
        for s in U.offsets:
            occupied |= bits.get(z + s, zero) == 1
        factor *= np.where(occupied, q, 1.0)
    return math.fsum((weight * factor).tolist())


def exact_two_step_displacement(p: float, U, j: int, direction: str = "right") -> float:
    """Exact P(R^2 >= j + R^0 - 2 s_u) (right) or P(L^2 <= -j + L^0 - 2 s_1) (left)."""
    U = make_neighborhood(U)
    if not 0 <= j <= MAX_TWO_STEP_J:
        raise GuardError(f"j must lie in [0, {MAX_TWO_STEP_J}]")
    x, y = 0, 2 * U.span + 2
    if direction == "right":
        target = (x - 2 * U.s1, y - 2 * U.su + j)
    elif direction == "left":
        target = (x - 2 * U.s1 - j, y - 2 * U.su)
    else:
        raise ValueError("direction must be 'left' or 'right'")
    return _massif_window_probability(p, U, 2, target)


def exact_one_step_displacement(p: float, U, j: int, direction: str = "right") -> float:
    """Exact P(R^1 >= j + R^0 - s_u) (right) or P(L^1 <= -j + L^0 - s_1) (left)."""
    U = make_neighborhood(U)
    if not 0 <= j <= MAX_ONE_STEP_J:
        raise GuardError(f"j must lie in [0, {MAX_ONE_STEP_J}]")
    x, y = 0, 2 * U.span + 2
    if direction == "right":
        target = (x - U.s1, y - U.su + j)
    elif direction == "left":
        target = (x - U.s1 - j, y - U.su)
    else:
        raise ValueError("direction must be 'left' or 'right'")
    return _massif_window_probability(p, U, 1, target)


def _cylinder_connection(n: int, t: int, U, p: float) -> float:
    N = 2 * n
    nbits = N * t
    if nbits > MAX_OMEGA_BITS:
        raise GuardError(f"cylinder needs {nbits} noise bits (guard {MAX_OMEGA_BITS})")
    full = (1 << N) - 1
    counts = np.zeros(nbits + 1, dtype=np.int64)
    for omega in _chunks(nbits):
        config = np.full(omega.shape, full, dtype=np.int64)
        for k in range(t):
            config = _alive(config, n, U) & ((omega >> (N * k)) & full)
        hit = ((config >> n) & 1) == 1
        counts += np.bincount(_popcount(omega[hit]), minlength=nbits + 1)
    return _weighted_by_popcount(counts, nbits, p)


def _line_connection(t: int, U, p: float) -> float:
    """P((0, t) -> t = 0 line) on Z by enumerating the open bits of its cone."""
    # cone level k (time t - k) holds sites s1*k .. su*k
    levels = [list(range(U.s1 * k, U.su * k + 1)) for k in range(t)]
    nbits = sum(len(lv) for lv in levels)
    if nbits > MAX_OMEGA_BITS:
        raise GuardError(f"line cone needs {nbits} noise bits (guard {MAX_OMEGA_BITS})")
    base = U.s1 * t
    counts = np.zeros(nbits + 1, dtype=np.int64)
    for omega in _chunks(nbits):
        bit = 0
        reach = None
        for k, sites in enumerate(levels):
            open_mask = np.zeros(omega.shape, dtype=np.int64)
            for z in sites:
                open_mask |= ((omega >> bit) & 1) << (z - base)
                bit += 1
            if k == 0:
                reach = open_mask
                continue
            grown = np.zeros(omega.shape, dtype=np.int64)
            for s in U.offsets:
                grown |= reach << s if s >= 0 else reach >> -s
            reach = grown & open_mask
        counts += np.bincount(_popcount(omega[reach != 0]), minlength=nbits + 1)
    return _weighted_by_popcount(counts, nbits, p)


def cylinder_vs_line(n: int, t: int, U, p: float) -> tuple[float, float, bool]:
    """Connection probabilities of (0, t) to the base on the ring and on Z."""
    U = make_neighborhood(U)
    if t == 0:
        return 1.0, 1.0, True
    p_cyl = _cylinder_connection(n, t, U, p)
    p_line = _line_connection(t, U, p)
    return p_cyl, p_line, p_cyl <= p_line + 1e-12


def coupled_domination(U, U_prime, n: int, p: float, T: int, replicas: int, master_seed: int) -> bool:
    """Run both neighbourhoods on shared noise from all ones; True iff U's ones never exceed U_prime's."""
    U, V = make_neighborhood(U), make_neighborhood(U_prime)
    if not U.issubset(V):
        raise ValueError(f"neighbourhood {{{U}}} is not contained in {{{V}}}")
    init = RingConfig.ones(n).packed()
    for i in range(replicas):
        field = NoiseField(p, replica_seed(master_seed, i))
        key = np.uint64(field.key)
        small = K.ring_trajectory(init, 2 * n, U.as_array(), key, field.thresh, T)
        large = K.ring_trajectory(init, 2 * n, V.as_array(), key, field.thresh, T)
        if np.any(small & ~large):
            return False
    return True


# reference values for the bound table check
PUBLISHED_BOUNDS = {
    (-1, 0): (Fraction(2, 3), 0.670),
    (-1, 0, 1): (Fraction(1, 2), 0.505),
    (-1, 0, 1, 2): (Fraction(2, 5), 0.407),
    (-1, 0, 1, 2, 3): (Fraction(1, 3), 0.343),
    (-1, 0, 2): (Fraction(2, 5), 0.407),
    (-1, 0, 3): (Fraction(1, 3), 0.343),
}


def _check(computed, reference, tolerance, passed) -> dict:
    return {"computed": computed, "reference": reference, "tolerance": tolerance, "pass": bool(passed)}


def verification_suite(master_seed: int = 0, draws: int = 1000) -> dict[str, dict]:
    """Run every exact cross-check; returns {name: {computed, reference, tolerance, pass}}.

    Deviation checks report the worst case over their grid. The random
    draws for the reachability check come from ``master_seed``.
    """
    from .bounds import p1 as bound_p1
    from .bounds import solve_p2, two_step_bound
    from .core import step

    out: dict[str, dict] = {}
    for offs, (ref_p1, ref_p2) in PUBLISHED_BOUNDS.items():
        name = ",".join(map(str, offs))
        out[f"p1[{name}]"] = _check(str(bound_p1(offs)), str(ref_p1), 0, bound_p1(offs) == ref_p1)
        got = solve_p2(offs)
        out[f"p2[{name}]"] = _check(got, ref_p2, 1e-3, abs(got - ref_p2) <= 1e-3)

    worst = 0.0
    for U in ((0, 1), (-1, 0, 1)):
        for n in (1, 2):
            for t in (1, 2, 3):
                for p in (0.2, 0.5, 0.8):
                    worst = max(worst, abs(exact_tau_tail(n, U, p, t) - enumerate_omega_tau_tail(n, U, p, t)))
    out["tau_tail_transfer_vs_enumeration"] = _check(worst, 0.0, 1e-12, worst <= 1e-12)

    margin, exact_j1 = math.inf, 0.0
    for U in ((-1, 0), (-1, 0, 1), (-1, 0, 1, 2)):
        span = U[-1] - U[0]
        for k in range(1, 10):
            p = k / 10
            for j in range(span + 4):
                for side in ("right", "left"):
                    margin = min(margin, exact_two_step_displacement(p, U, j, side) - two_step_bound(p, U, j))
            for side in ("right", "left"):
                exact_j1 = max(exact_j1, abs(exact_two_step_displacement(p, U, 1, side) - (1 - p * p)))
    out["two_step_bound_validity"] = _check(margin, 0.0, 1e-12, margin >= -1e-12)
    out["two_step_j1_exact"] = _check(exact_j1, 0.0, 1e-12, exact_j1 <= 1e-12)

    rng = np.random.default_rng(master_seed)
    U = make_neighborhood((-1, 0, 1))
    mismatches = 0
    for _ in range(draws):
        omega = rng.random((5, 6)) < rng.random()
        config = RingConfig(3, rng.random(6) < 0.5)
        rows = [config.bits]
        for t in range(5):
            config = step(config, omega[t], U)
            rows.append(config.bits)
        mismatches += not np.array_equal(np.array(rows), reachability(omega, U, "ring", rows[0], n=3).connected)
    out["reachability_vs_trajectory"] = _check(mismatches, 0, 0, mismatches == 0)

    gap = math.inf
    for n in (2, 3):
        for t in (2, 3):
            for p in (0.3, 0.5, 0.7):
                cyl, line, _ = cylinder_vs_line(n, t, (0, 1), p)
                gap = min(gap, line - cyl)
    out["cylinder_vs_line"] = _check(gap, 0.0, 1e-12, gap >= -1e-12)

    chain = ((0, 1), (-1, 0, 1), (-1, 0, 1, 2))
    ok = all(
        coupled_domination(a, b, 16, p, 64, draws, master_seed) for a, b in zip(chain, chain[1:]) for p in (0.4, 0.6, 0.8)
    )
    out["coupled_domination"] = _check(int(ok), 1, 0, ok)
    return out
