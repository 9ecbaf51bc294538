from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from percpca import bounds as B

TABLE = {
    (-1, 0): (Fraction(2, 3), 0.670),
    (-1, 0, 1): (Fraction(1, 2), 0.505),
    (-1, 0, 1, 2): (Fraction(2, 5), 0.407),
    (-1, 0, 1, 2, 3): (Fraction(1, 3), 0.343),
    (-1, 0, 2): (Fraction(2, 5), 0.407),
    (-1, 0, 3): (Fraction(1, 3), 0.343),
}


@pytest.mark.parametrize("U", list(TABLE))
def test_p1_p2_table(U):
    p1, p2 = TABLE[U]
    assert B.p1(U) == p1
    assert abs(B.solve_p2(U) - p2) <= 1e-3


def test_p2_frozen_digits():
    assert B.solve_p2([-1, 0]) == pytest.approx(0.6699639959462221, abs=1e-11)
    assert B.solve_p2([-1, 0, 1]) == pytest.approx(0.5049242139128254, abs=1e-11)


def test_alternative_exponent_variant_differs():
    assert B.solve_p2([-1, 0], exponent="2s") == pytest.approx(0.6911, abs=1e-3)
    with pytest.raises(ValueError):
        B.phi(0.5, [0, 1], exponent="other")


def test_span_only_dependence():
    assert B.solve_p2([-1, 0, 3]) == B.solve_p2([-1, 0, 1, 2, 3])
    assert B.solve_p2([5, 6]) == B.solve_p2([-1, 0])


def test_phi():
    # span 2: both exponents are 6
    p = 0.505
    assert B.phi(p, [-1, 0, 1]) == pytest.approx(2 * (1 - p) ** 6 / (p * (2 - p)))
    assert B.phi(p, [-1, 0, 1]) == pytest.approx(0.03897, abs=1e-5)
    for bad in (0.0, 1.0):
        with pytest.raises(ValueError):
            B.phi(bad, [-1, 0, 1])
    assert B.phi(1 - 1e-9, [-1, 0]) < 1e-30


def test_solve_p2_rejects_bad_tol():
    with pytest.raises(ValueError):
        B.solve_p2([-1, 0], tol=0)


@pytest.mark.parametrize("U", list(TABLE))
def test_drift_gap_vanishes_at_p2(U):
    assert abs(B.drift_gap(B.solve_p2(U), U)) < 1e-9


def test_drift_gap_sign_pattern():
    # positive below p2, negative above it
    U = [-1, 0, 1]
    assert B.drift_gap(float(B.p1(U)) + 0.001, U) > 0
    assert B.drift_gap(0.99, U) < 0


@given(st.floats(0.01, 0.99), st.sampled_from(list(TABLE)))
def test_expectations_sum_is_constant(p, U):
    s1, su = U[0], U[-1]
    assert B.expectation_pi(p, U) + B.expectation_xi(p, U) == pytest.approx(-2 * (su + s1), abs=1e-9)


def test_one_step_tail():
    assert B.one_step_tail(0.5, [-1, 0, 1], 3) == 0.125
    assert B.one_step_tail(0.3, [-1, 0, 1], 0) == 1.0
    with pytest.raises(ValueError):
        B.one_step_tail(0.3, [0, 1], -1)


def test_two_step_branches():
    U = [-1, 0, 1, 2, 3]
    p, q = 0.4, 0.6
    assert B.two_step_bound(p, U, 0) == 1.0
    assert B.two_step_bound(p, U, 1) == pytest.approx(1 - p * p)
    assert B.two_step_bound(p, U, 2) == pytest.approx(q * q * (1 + 2 * p))
    assert B.two_step_bound(p, U, 3) == pytest.approx(3 * p * q**3 + q**3 + q**6)
    j, span = 6, 4
    four = j * p * q**j + q**j + p * q ** (j + span) * (j - span - 1 / p) + 2 * q ** (2 * j)
    assert B.two_step_bound(p, U, j) == pytest.approx(four)
    with pytest.raises(ValueError):
        B.two_step_bound(p, U, -1)


def test_j2_expanded_sum_equals_product():
    # exact rational identity q^2 + p q^2 + p q^3 + p^2 q^2 = q^2 (1 + 2p)
    for k in range(1, 20):
        p = Fraction(k, 20)
        q = 1 - p
        assert q**2 + p * q**2 + p * q**3 + p**2 * q**2 == q**2 * (1 + 2 * p)


def test_two_step_bound_monotonicity_flag():
    # the printed bound is not monotone in j on the whole grid; record where it is
    violations = []
    for U in ([-1, 0], [-1, 0, 1], [-1, 0, 1, 2]):
        for p in np.arange(1, 10) / 10:
            v = [B.two_step_bound(p, U, j) for j in range(len(U) + 4)]
            if any(b > a + 1e-15 for a, b in zip(v, v[1:])):
                violations.append((tuple(U), round(float(p), 1)))
    # the j > span branch jumps above the j = 2 value at small p
    assert violations == [
        ((-1, 0), 0.1), ((-1, 0), 0.2), ((-1, 0), 0.3),
        ((-1, 0, 1), 0.1), ((-1, 0, 1), 0.2),
        ((-1, 0, 1, 2), 0.1), ((-1, 0, 1, 2), 0.2),
    ]


def test_bounds_report_clamps_table_only():
    r = B.bounds_report([-1, 0], p=0.1)
    assert r.p1 == Fraction(2, 3)
    assert all(0.0 <= v <= 1.0 for v in r.bound_table.values())
    assert B.two_step_bound(0.1, [-1, 0], 3) > 1.0
    assert r.e_pi == B.expectation_pi(0.1, [-1, 0])
