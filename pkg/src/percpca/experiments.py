"""Desk-scale reproductions: bound tables, survival sweeps, tau scaling, gamma scans.

Every result type renders to CSV through ``to_csv``. The first line is a
``#`` metadata comment, the second the header; floats use the shortest
round-trip representation so reruns are byte-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .bounds import p1 as bound_p1
from .bounds import solve_p2
from .core import make_neighborhood
from .simulate import edge_speeds, estimate_mean_tau, origin_survival, survival_probability

DESK_SCALE = {"n": 2000, "T": 2000, "R": 200}
FULL_SCALE = {"n": 100_000, "T": 100_000, "R": 2000}

STANDARD_NEIGHBORHOODS = (
    (-1, 0),
    (-1, 0, 1),
    (-1, 0, 1, 2),
    (-1, 0, 1, 2, 3),
    (-1, 0, 2),
    (-1, 0, 3),
)


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def metadata_line(**params) -> str:
    parts = [f"percpca {__version__}"] + [f"{k}={v}" for k, v in params.items()]
    return "# " + " ".join(parts)


def csv_text(meta: dict, header: str, rows) -> str:
    lines = [metadata_line(**meta), header]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def _check_grid(grid) -> list[float]:
    grid = [float(p) for p in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("grid must be strictly increasing")
    if any(not 0.0 <= p <= 1.0 for p in grid):
        raise ValueError("grid values must lie in [0, 1]")
    return grid


# bounds


@dataclass(frozen=True)
class BoundsRow:
    neighborhood: str
    span: int
    p1: float
    p2: float


@dataclass
class BoundsTable:
    rows: list[BoundsRow]
    exponent: str = "2s+2"

    def to_csv(self) -> str:
        rows = [(r.neighborhood, r.span, r.p1, r.p2) for r in self.rows]
        lines = [metadata_line(command="bounds", phi_exponent=self.exponent), "neighborhood,span,p1,p2"]
        lines += [f'"{n}",{fmt(s)},{fmt(a)},{fmt(b)}' for n, s, a, b in rows]
        return "\n".join(lines) + "\n"


def bounds_table(neighborhoods=STANDARD_NEIGHBORHOODS, exponent: str = "2s+2") -> BoundsTable:
    """p1 and p2 for each neighbourhood, rounded to three decimals."""
    rows = []
    for offsets in neighborhoods:
        U = make_neighborhood(offsets)
        rows.append(BoundsRow(str(U), U.span, round(float(bound_p1(U)), 3), round(solve_p2(U, exponent=exponent), 3)))
    return BoundsTable(rows, exponent)


# survival sweep


@dataclass
class SurvivalCurve:
    p: list[float]
    P_hat: list[float]
    stderr: list[float]
    meta: dict = field(default_factory=dict)

    def crossing(self, level: float = 0.05) -> float | None:
        """First grid p with P_hat above ``level``."""
        for p, P in zip(self.p, self.P_hat):
            if P > level:
                return p
        return None

    def monotone(self, sigmas: float = 3.0) -> bool:
        """P_hat nondecreasing in p up to ``sigmas`` combined standard errors."""
        for i in range(len(self.p) - 1):
            drop = self.P_hat[i] - self.P_hat[i + 1]
            if drop > sigmas * math.hypot(self.stderr[i], self.stderr[i + 1]):
                return False
        return True

    def to_csv(self) -> str:
        return csv_text(self.meta, "p,P_hat,stderr", zip(self.p, self.P_hat, self.stderr))


def p_sweep(U, n, T, R, p_grid, master_seed, threads=1, coupled=False) -> SurvivalCurve:
    U = make_neighborhood(U)
    grid = _check_grid(p_grid)
    meta = dict(command="sweep", U=str(U), seed=master_seed, n=n, T=T, R=R, coupled=int(coupled))
    curve = SurvivalCurve([], [], [], meta)
    for p in grid:
        P, se = survival_probability(n, U, p, T, R, master_seed, threads, coupled)
        curve.p.append(p)
        curve.P_hat.append(P)
        curve.stderr.append(se)
    return curve


# absorption-time scaling


@dataclass(frozen=True)
class ModelFit:
    model: str  # "log": tau = a + b log n; "exp": log tau = a + b n
    a: float
    b: float
    r2: float
    adj_r2: float


@dataclass
class ScalingTable:
    n: list[int]
    mean_tau: list[float | None]
    stderr: list[float | None]
    censored: list[int]
    lower_bound: list[float] = field(default_factory=list)  # mean of min(tau, t_max)
    log_fit: ModelFit | None = None
    exp_fit: ModelFit | None = None
    regime: str | None = None  # "log", "exp", or None when undecided
    flags: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        return csv_text(self.meta, "n,mean_tau,stderr,censored", zip(self.n, self.mean_tau, self.stderr, self.censored))


def _r2(y, yhat, k=2) -> tuple[float, float]:
    y, yhat = np.asarray(y, float), np.asarray(yhat, float)
    sst = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum((y - yhat) ** 2)) / sst
    m = y.size
    adj = 1.0 - (1.0 - r2) * (m - 1) / (m - k) if m > k else math.nan
    return r2, adj


def fit_scaling(n, tau) -> tuple[ModelFit, ModelFit]:
    """Fit both growth models; goodness of each is scored on the tau scale so they compare."""
    n, tau = np.asarray(n, float), np.asarray(tau, float)
    b, a = np.polyfit(np.log(n), tau, 1)
    log_fit = ModelFit("log", float(a), float(b), *_r2(tau, a + b * np.log(n)))
    b, a = np.polyfit(n, np.log(tau), 1)
    exp_fit = ModelFit("exp", float(a), float(b), *_r2(tau, np.exp(a + b * n)))
    return log_fit, exp_fit


def tau_scaling(U, p, n_list, replicas, t_max, master_seed, threads=1, coupled=False) -> ScalingTable:
    U = make_neighborhood(U)
    n_list = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError("n_list must be strictly increasing")
    meta = dict(
        command="tau-scaling", U=str(U), seed=master_seed, p=fmt(p), replicas=replicas, t_max=t_max, coupled=int(coupled)
    )
    table = ScalingTable([], [], [], [], meta=meta)
    for n in n_list:
        est = estimate_mean_tau(n, U, p, replicas, master_seed, t_max, threads, coupled)
        table.n.append(n)
        table.mean_tau.append(est.mean)
        table.stderr.append(est.stderr)
        table.censored.append(est.censored)
        table.lower_bound.append(est.restricted_mean)
        if est.censored:
            table.flags.append(f"n={n}: {est.censored} censored replicas, mean is a lower bound")

    # censored rows stay out of both fits
    usable = [(n, t) for n, t, c in zip(table.n, table.mean_tau, table.censored) if c == 0 and t is not None]
    if len(usable) < 2:
        table.flags.append("fewer than two uncensored rows, no fit")
        return table
    ns, taus = zip(*usable)
    if np.ptp(taus) == 0.0:
        table.flags.append("degenerate: mean tau is constant in n")
        return table
    table.log_fit, table.exp_fit = fit_scaling(ns, taus)
    if len(usable) >= 3:
        table.regime = "log" if table.log_fit.adj_r2 >= table.exp_fit.adj_r2 else "exp"
    else:
        table.flags.append("two uncensored rows: fits are exact, goodness does not discriminate")

    # a censored row's restricted mean is a lower bound on E[tau]; one that
    # beats the log-model prediction rules out logarithmic growth
    lf = table.log_fit
    for n, lb, c in zip(table.n, table.lower_bound, table.censored):
        if c and lb > lf.a + lf.b * math.log(n):
            table.regime = "exp"
            table.flags.append(f"n={n}: lower bound {fmt(lb)} exceeds the log-model prediction")
    return table


# edge speeds


@dataclass
class GammaScan:
    p: list[float]
    gamma_hat: list[float]
    stderr: list[float]
    censored: list[int] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def signs(self, sigmas: float = 2.0) -> list[int]:
        out = []
        for g, s in zip(self.gamma_hat, self.stderr):
            out.append(1 if g > sigmas * s else -1 if g < -sigmas * s else 0)
        return out

    def monotone(self) -> bool:
        s = self.signs()
        return all(a <= b for a, b in zip(s, s[1:]))

    def crossing(self) -> float | None:
        """Smallest grid p with gamma_hat > 2 stderr, provided the sign pattern is monotone."""
        if not self.monotone():
            return None
        for p, sign in zip(self.p, self.signs()):
            if sign > 0:
                return p
        return None

    def to_csv(self) -> str:
        return csv_text(self.meta, "p,gamma_hat,stderr", zip(self.p, self.gamma_hat, self.stderr))


def gamma_scan(U, p_grid, m_max, replicas, master_seed, threads=1, coupled=False) -> GammaScan:
    U = make_neighborhood(U)
    grid = _check_grid(p_grid)
    meta = dict(command="gamma-scan", U=str(U), seed=master_seed, m_max=m_max, replicas=replicas, coupled=int(coupled))
    scan = GammaScan([], [], [], [], meta)
    for p in grid:
        est = edge_speeds(U, p, m_max, replicas, master_seed, threads, coupled)
        scan.p.append(p)
        scan.gamma_hat.append(est.gamma_hat)
        scan.stderr.append(est.gamma_stderr)
        scan.censored.append(est.censored)
    return scan


# subcritical decay


@dataclass
class DecayFit:
    m: list[int]
    survival: list[float]
    stderr: list[float]
    h_hat: float | None = None
    intercept: float | None = None
    r2: float | None = None
    rejected: bool = False
    flags: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        return csv_text(self.meta, "m,survival,stderr", zip(self.m, self.survival, self.stderr))


def subcritical_decay(U, p, m_list, replicas, master_seed, threads=1, coupled=False, min_r2: float = 0.9) -> DecayFit:
    """Regress log origin survival on m; h_hat is minus the slope.

    Rows with no surviving replica are dropped and flagged. Rows are weighted
    by their survivor counts, the inverse of the binomial variance of the log.
    The fit is rejected when the slope is not positive or R^2 < ``min_r2``.
    """
    U = make_neighborhood(U)
    m_list = [int(m) for m in m_list]
    meta = dict(command="decay", U=str(U), seed=master_seed, p=fmt(p), replicas=replicas, coupled=int(coupled))
    fit = DecayFit([], [], [], meta=meta)
    for m in m_list:
        P, se = origin_survival(U, p, m, replicas, master_seed, threads, coupled)
        fit.m.append(m)
        fit.survival.append(P)
        fit.stderr.append(se)
    keep = [(m, P) for m, P in zip(fit.m, fit.survival) if P > 0]
    for m, P in zip(fit.m, fit.survival):
        if P == 0:
            fit.flags.append(f"m={m}: no survivors, dropped from fit")
    if len(keep) < 3:
        fit.flags.append("degenerate: fewer than three rows with survivors")
        fit.rejected = True
        return fit
    ms = np.array([m for m, _ in keep], float)
    ys = np.log([P for _, P in keep])
    w = np.array([P for _, P in keep]) * replicas
    slope, icept = np.polyfit(ms, ys, 1, w=np.sqrt(w))
    yhat = icept + slope * ms
    ybar = np.average(ys, weights=w)
    sst = float(np.sum(w * (ys - ybar) ** 2))
    r2 = 1.0 - float(np.sum(w * (ys - yhat) ** 2)) / sst if sst > 0 else math.nan
    fit.h_hat, fit.intercept, fit.r2 = float(-slope), float(icept), r2
    if not (fit.h_hat > 0 and r2 >= min_r2):
        fit.rejected = True
        fit.flags.append("no exponential decay: slope not negative or poor fit (survival plateaus)")
    return fit


__all__ = [
    "DESK_SCALE",
    "STANDARD_NEIGHBORHOODS",
    "FULL_SCALE",
    "BoundsRow",
    "BoundsTable",
    "DecayFit",
    "GammaScan",
    "ModelFit",
    "ScalingTable",
    "SurvivalCurve",
    "bounds_table",
    "csv_text",
    "fit_scaling",
    "gamma_scan",
    "metadata_line",
    "p_sweep",
    "subcritical_decay",
    "tau_scaling",
]
