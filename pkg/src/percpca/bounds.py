"""Analytic lower bounds on the critical probability.

All quantities depend on the neighbourhood only through its span
``s_u - s_1``: a neighbourhood with gaps is dominated by the filled one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from scipy.optimize import bisect

from .core import make_neighborhood

# exponent of the second term of phi: 2*span + 2 (default) or 2*span
PHI_EXPONENTS = ("2s+2", "2s")


class SolverError(RuntimeError):
    pass


def _open_unit(p: float) -> None:
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie strictly inside (0, 1), got {p}")


def p1(U) -> Fraction:
    """One-step bound 2 / (2 + span), exact."""
    U = make_neighborhood(U)
    return Fraction(2, 2 + U.span)


def phi(p: float, U, exponent: str = "2s+2") -> float:
    """((1-p)^6 + (1-p)^k) / (p (2-p)) with k = 2*span + 2 ("2s+2", default) or 2*span ("2s")."""
    _open_unit(p)
    U = make_neighborhood(U)
    if exponent == "2s+2":
        k = 2 * U.span + 2
    elif exponent == "2s":
        k = 2 * U.span
    else:
        raise ValueError(f"exponent must be one of {PHI_EXPONENTS}")
    q = 1.0 - p
    return (q**6 + q**k) / (p * (2.0 - p))


def _g(p: float, U, exponent: str) -> float:
    span = U.span
    return p - float(p1(U)) / (1.0 - phi(p, U, exponent) / (span + 2))


def solve_p2(U, tol: float = 1e-12, exponent: str = "2s+2") -> float:
    """Unique root of p = p1 / (1 - phi(p) / (span + 2)) in (p1, 1), by bisection."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    U = make_neighborhood(U)
    a, b = float(p1(U)) + 1e-9, 1.0 - 1e-9
    ga, gb = _g(a, U, exponent), _g(b, U, exponent)
    if not (ga < 0 < gb):
        raise SolverError(f"no sign change on [{a}, {b}]: g = ({ga}, {gb})")
    # g has slope above 1, so shrink the bracket past tol to get |g| below it too
    root = bisect(_g, a, b, args=(U, exponent), xtol=tol / 64, rtol=4 * 2.220446049250313e-16, maxiter=200)
    if abs(_g(root, U, exponent)) > tol:
        raise SolverError(f"bisection stopped at {root} with residual {_g(root, U, exponent)}")
    return root


def one_step_tail(p: float, U, j: int) -> float:
    """P(R^1 >= j + R^0 - s_u) = (1-p)^j; same tail for the left edge."""
    if j < 0:
        raise ValueError("j must be >= 0")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    return (1.0 - p) ** j


def expectation_pi(p: float, U, exponent: str = "2s+2") -> float:
    U = make_neighborhood(U)
    return 2.0 * (1.0 - p) / p - 2 * U.su + phi(p, U, exponent)


def expectation_xi(p: float, U, exponent: str = "2s+2") -> float:
    U = make_neighborhood(U)
    return -2.0 * (1.0 - p) / p - 2 * U.s1 - phi(p, U, exponent)


def drift_gap(p: float, U, exponent: str = "2s+2") -> float:
    """E[pi] - E[xi]; positive while the two-step edge walks separate (massifs grow)."""
    return expectation_pi(p, U, exponent) - expectation_xi(p, U, exponent)


def two_step_bound(p: float, U, j: int) -> float:
    """Lower bound on P(R^2 >= j + R^0 - 2 s_u) from a massif of length >= 2 span.

    Returned as printed, without clamping; the branch for j > span can be
    negative at small p.
    """
    if j < 0:
        raise ValueError("j must be >= 0")
    U = make_neighborhood(U)
    span = U.span
    q = 1.0 - p
    if j == 0:
        return 1.0
    if j == 1:
        return 1.0 - p * p
    if j == 2:
        return q * q * (1.0 + 2.0 * p)
    head = j * p * q**j + q**j
    if j <= span:
        return head + q ** (2 * j)
    if p == 0.0:
        # the p * (... - 1/p) term tends to -(1-p)^(j+span) = -1
        return head - 1.0 + 2.0
    return head + p * q ** (j + span) * (j - span - 1.0 / p) + 2.0 * q ** (2 * j)


@dataclass
class BoundsReport:
    neighborhood: str
    span: int
    p1: Fraction
    p2: float
    p: float | None = None
    e_pi: float | None = None
    e_xi: float | None = None
    bound_table: dict[int, float] = field(default_factory=dict)


def bounds_report(U, p: float | None = None, j_max: int | None = None, exponent: str = "2s+2") -> BoundsReport:
    U = make_neighborhood(U)
    report = BoundsReport(str(U), U.span, p1(U), solve_p2(U, exponent=exponent))
    if p is not None:
        report.p = p
        report.e_pi = expectation_pi(p, U, exponent)
        report.e_xi = expectation_xi(p, U, exponent)
        j_max = U.span + 3 if j_max is None else j_max
        report.bound_table = {j: min(1.0, max(0.0, two_step_bound(p, U, j))) for j in range(j_max + 1)}
    return report
