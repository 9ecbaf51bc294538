"""Monte Carlo measurements: absorption times, survival, massif edges, edge speeds.

Replica ``i`` of a run with master seed ``s`` is driven by the noise field
keyed on ``replica_seed(s, i)``; results are stored by replica index, so they
do not depend on how replicas are spread over threads.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import (
    ConeViolationError,
    LineConfig,
    Neighborhood,
    NoiseField,
    PackedLine,
    make_neighborhood,
    replica_seed,
    threshold,
)

CENSORED = None


def _fan_out(run_chunk, replicas: int, threads: int, dtype=np.int64) -> np.ndarray:
    """Run ``run_chunk(i0, i1, out)`` over replica ranges; output indexed by replica."""
    out = np.zeros(replicas, dtype=dtype)
    threads = max(1, min(int(threads), replicas))
    if threads == 1:
        run_chunk(0, replicas, out)
        return out
    bounds = np.linspace(0, replicas, threads + 1).astype(int)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(lambda k: run_chunk(bounds[k], bounds[k + 1], out), range(threads)))
    return out


def _mean_stderr(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _check_p(p: float) -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")


@dataclass(frozen=True)
class AbsorptionRecord:
    tau: int | None
    t_max: int
    replica_seed: int

    @property
    def censored(self) -> bool:
        return self.tau is CENSORED


@dataclass(frozen=True)
class TauEstimate:
    mean: float | None  # None when every replica was censored
    stderr: float | None
    censored: int
    replicas: int
    restricted_mean: float  # mean of min(tau, t_max): a valid lower bound on E[tau]

    @property
    def lower_bound_only(self) -> bool:
        return self.censored > 0


def run_until_absorbed(n: int, U, p: float, seed: int, t_max: int, coupled: bool = False) -> AbsorptionRecord:
    """Absorption time of the ring [-n, n-1] started from all ones."""
    U = make_neighborhood(U)
    if n < 1 or t_max < 1:
        raise ValueError("need n >= 1 and t_max >= 1")
    field = NoiseField(p, seed, coupled)
    tau = K.ring_absorption(2 * n, U.as_array(), np.uint64(field.key), field.thresh, t_max)
    return AbsorptionRecord(None if tau < 0 else int(tau), t_max, seed)


def absorption_times(n, U, p, replicas, master_seed, t_max, threads=1, coupled=False) -> np.ndarray:
    """Per-replica absorption times; -1 marks a censored replica."""
    U = make_neighborhood(U)
    _check_p(p)
    offs, th = U.as_array(), threshold(p)

    def chunk(i0, i1, out):
        K.batch_absorption(2 * n, offs, np.uint64(master_seed), th, coupled, t_max, i0, i1, out)

    return _fan_out(chunk, replicas, threads)


def estimate_mean_tau(n, U, p, replicas, master_seed, t_max, threads=1, coupled=False) -> TauEstimate:
    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    taus = absorption_times(n, U, p, replicas, master_seed, t_max, threads, coupled)
    done = taus[taus >= 0]
    censored = int(replicas - done.size)
    restricted = float(np.where(taus >= 0, taus, t_max).mean())
    if done.size == 0:
        return TauEstimate(None, None, censored, replicas, restricted)
    mean, se = _mean_stderr(done)
    return TauEstimate(mean, se, censored, replicas, restricted)


def survival_probability(n, U, p, T, R, master_seed, threads=1, coupled=False) -> tuple[float, float]:
    """Fraction of R replicas, started from all ones, whose origin is 1 at time T."""
    U = make_neighborhood(U)
    _check_p(p)
    if T < 1 or R < 1:
        raise ValueError("need T >= 1 and R >= 1")
    offs, th = U.as_array(), threshold(p)

    def chunk(i0, i1, out):
        K.batch_site_at(2 * n, offs, np.uint64(master_seed), th, coupled, T, n, i0, i1, out)

    hits = _fan_out(chunk, R, threads)
    return _mean_stderr(hits)


@dataclass(frozen=True)
class MassifTrack:
    L: list
    R: list
    T_horizon: int

    def alive(self, t: int) -> bool:
        return not math.isinf(self.R[t])


def _single_massif(config: LineConfig) -> tuple[int, int]:
    zeros = np.flatnonzero(~config.bits)
    if zeros.size == 0 or not config.outside_value:
        raise ValueError("initial configuration must hold one zero massif with ones around it")
    a, b = int(zeros[0]), int(zeros[-1])
    if b - a + 1 != zeros.size:
        raise ValueError("initial configuration has more than one zero massif")
    return config.lo + a, config.lo + b


def track_massif(initial: LineConfig, U, p: float, T: int, seed: int, coupled: bool = False) -> MassifTrack:
    """Follow the edges of a zero massif with the recursion

    R_t = max{x : eta^t = 0 on [L_{t-1} - s1, x]},  L_t = min{x : eta^t = 0 on [x, R_{t-1} - su]}

    while R_{t-1} - L_{t-1} >= span, and -inf / +inf forever after.
    """
    U = make_neighborhood(U)
    x, y = _single_massif(initial)
    if y - x < U.span:
        raise ValueError("massif must satisfy y - x >= span at t = 0")
    field = NoiseField(p, seed, coupled)
    packed = PackedLine.from_config(initial, U)
    traj = K.line_trajectory(
        packed.words, packed.halo, packed.nbits, initial.lo, U.as_array(), True, np.uint64(field.key), field.thresh, T
    )
    lo, hi = initial.lo, initial.hi

    def exact(z: int, t: int) -> bool:
        return min(z, z + U.s1 * t) >= lo and max(z, z + U.su * t) <= hi

    L, R = [x], [y]
    for t in range(1, T + 1):
        l_prev, r_prev = L[-1], R[-1]
        if math.isinf(r_prev) or r_prev - l_prev < U.span:
            L.append(math.inf)
            R.append(-math.inf)
            continue
        bits = packed.bits_of(traj[t])
        ones = np.flatnonzero(bits)
        start = l_prev - U.s1 - lo
        stop = r_prev - U.su - lo
        right = ones[ones >= start]
        left = ones[ones <= stop]
        if right.size == 0 or left.size == 0:
            raise ConeViolationError("massif reached the window edge")
        r_new = lo + int(right[0]) - 1
        l_new = lo + int(left[-1]) + 1
        for z in (r_new + 1, l_new - 1, l_prev - U.s1, r_prev - U.su):
            if not exact(z, t):
                raise ConeViolationError(f"site {z} at time {t} depends on states outside [{lo}, {hi}]")
        L.append(l_new)
        R.append(r_new)
    return MassifTrack(L, R, T)


@dataclass(frozen=True)
class EdgeSpeedEstimate:
    alpha_hat: float
    beta_hat: float
    gamma_hat: float
    alpha_stderr: float
    beta_stderr: float
    gamma_stderr: float
    m_max: int
    replicas: int
    censored: int = 0


def _front_window(U: Neighborhood, m: int) -> tuple[int, int, int]:
    """Window and exactness threshold for the rightmost front from sources z <= 0."""
    slack = 64
    hi = max(0, U.su * m) + slack
    lo = min(0, U.s1 * m) - max(U.su, 0) * m - U.span * m - slack
    return lo, hi, lo + max(U.su, 0) * m


def _front_positions(U: Neighborhood, p, m, replicas, master_seed, threads, coupled) -> tuple[np.ndarray, int]:
    """Rightmost site reachable downward after m rows from sources z <= 0.

    Reachability downward along the graph is the forward update with the
    reflected neighbourhood. Replicas whose front falls below the exactness
    threshold (subcritical fronts recede without bound) are reported at that
    threshold and counted as censored.
    """
    lo, hi, bound = _front_window(U, m)
    bits = np.zeros(hi - lo + 1, dtype=bool)
    bits[: -lo + 1] = True
    V = U.reflected()
    packed = PackedLine.from_config(LineConfig(lo, hi, bits, False), V)
    offs, th = V.as_array(), threshold(p)

    def chunk(i0, i1, out):
        K.batch_line_run(
            packed.words, packed.halo, packed.nbits, lo, offs, np.uint64(master_seed), th, coupled, m, 0, i0, i1, out
        )

    raw = _fan_out(chunk, replicas, threads)
    pos = np.where(raw >= 0, raw + lo, bound - 1)
    censored = int(np.count_nonzero(pos < bound))
    return np.maximum(pos, bound), censored


def edge_speeds(U, p, m_max, replicas, master_seed, threads=1, coupled=False) -> EdgeSpeedEstimate:
    """Estimate the edge speeds alpha, beta and gamma = alpha - beta at a single m.

    ``alpha_hat`` averages rbar_m / m (rightmost site reached from z <= 0);
    ``beta_hat`` averages lbar_m / m (leftmost reached from z >= 0), obtained
    by mirroring. Both use the same noise seeds per replica index.
    """
    U = make_neighborhood(U)
    _check_p(p)
    if m_max < 1 or replicas < 1:
        raise ValueError("need m_max >= 1 and replicas >= 1")
    r, cr = _front_positions(U, p, m_max, replicas, master_seed, threads, coupled)
    # leftmost front for U is the mirror of the rightmost front for -U
    r_mirror, cl = _front_positions(U.reflected(), p, m_max, replicas, master_seed, threads, coupled)
    l = -r_mirror
    a, sa = _mean_stderr(r / m_max)
    b, sb = _mean_stderr(l / m_max)
    g, sg = _mean_stderr((r - l) / m_max)
    return EdgeSpeedEstimate(a, b, g, sa, sb, sg, m_max, replicas, cr + cl)


def origin_survival(U, p, m, replicas, master_seed, threads=1, coupled=False) -> tuple[float, float]:
    """Fraction of replicas in which a single occupied origin still has descendants after m steps."""
    U = make_neighborhood(U)
    _check_p(p)
    if m < 1:
        raise ValueError("m must be >= 1")
    # descendants of the origin after m steps lie in [-su m, -s1 m]
    lo, hi = min(0, -U.su * m) - 1, max(0, -U.s1 * m) + 1
    bits = np.zeros(hi - lo + 1, dtype=bool)
    bits[-lo] = True
    packed = PackedLine.from_config(LineConfig(lo, hi, bits, False), U)
    offs, th = U.as_array(), threshold(p)

    def chunk(i0, i1, out):
        K.batch_line_run(
            packed.words, packed.halo, packed.nbits, lo, offs, np.uint64(master_seed), th, coupled, m, 2, i0, i1, out
        )

    alive = _fan_out(chunk, replicas, threads)
    return _mean_stderr(alive)


def ring_trajectory(initial, U, field: NoiseField, T: int) -> np.ndarray:
    """Full trajectory (T+1 rows x 2n sites, bool) of a ring under a given noise field."""
    from .core import unpack_bits

    U = make_neighborhood(U)
    nsites = initial.bits.size
    words = K.ring_trajectory(initial.packed(), nsites, U.as_array(), np.uint64(field.key), field.thresh, T)
    return np.stack([unpack_bits(row, nsites) for row in words])


__all__ = [
    "CENSORED",
    "AbsorptionRecord",
    "EdgeSpeedEstimate",
    "MassifTrack",
    "TauEstimate",
    "absorption_times",
    "edge_speeds",
    "estimate_mean_tau",
    "origin_survival",
    "replica_seed",
    "ring_trajectory",
    "run_until_absorbed",
    "survival_probability",
    "track_massif",
]
