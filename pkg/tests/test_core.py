import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from percpca import _kernels as K
from percpca.core import (
    ConeViolationError,
    InvalidNeighborhoodError,
    LineConfig,
    NoiseField,
    PackedLine,
    RingConfig,
    check_cone,
    make_neighborhood,
    pack_bits,
    periodic_neighbors,
    replica_seed,
    step,
    threshold,
    unpack_bits,
)

NEIGHBORHOODS = [(0, 1), (-1, 0), (-1, 0, 1), (-1, 0, 2), (-2, 0, 3), (0,), (1, 2), (-70, 0, 65)]


def test_neighborhood_normalises_and_measures():
    U = make_neighborhood([1, -1, 0, 1])
    assert U.offsets == (-1, 0, 1)
    assert (U.s1, U.su, U.span) == (-1, 1, 2)
    assert make_neighborhood([-1, 0, 3]).span == 4
    assert make_neighborhood([0, 1]).reflected().offsets == (-1, 0)
    assert make_neighborhood([-1, 2]).filled().offsets == (-1, 0, 1, 2)
    assert str(U) == "-1,0,1"
    assert make_neighborhood([0, 1]).issubset(U)


def test_empty_neighborhood_rejected():
    with pytest.raises(InvalidNeighborhoodError):
        make_neighborhood([])


def test_periodic_neighbors():
    U = make_neighborhood([-1, 0, 1])
    assert periodic_neighbors(-2, 2, U) == [1, -2, -1]
    assert periodic_neighbors(1, 2, U) == [0, 1, -2]
    assert periodic_neighbors(0, 1, make_neighborhood([0, 1])) == [0, -1]
    with pytest.raises(IndexError):
        periodic_neighbors(2, 2, U)


def test_replica_seed_frozen():
    assert replica_seed(0, 0) == 16294208416658607535
    assert replica_seed(42, 7) == 14769051326987775908
    assert len({replica_seed(5, i) for i in range(10_000)}) == 10_000
    with pytest.raises(ValueError):
        replica_seed(1, -1)


def test_threshold():
    assert threshold(0.0) == 0
    assert threshold(0.5) == 2**31
    assert threshold(1.0) == 2**32
    assert threshold(0.3) == 1288490188
    with pytest.raises(ValueError):
        threshold(1.5)


def test_noise_frozen_words():
    f = NoiseField(0.5, 1)
    assert f.key == 1650074427181854241
    assert NoiseField(0.5, 1, coupled=True).key == 11463661790866785602
    assert int(f.packed_row(0, 0, 1)[0]) == 15024716385234973257
    assert int(f.packed_row(3, -2, 1)[0]) == 7585840751403472864


@pytest.mark.parametrize("p", [0.0, 1e-9, 0.1, 0.5, 0.7049, 0.999999, 1.0])
def test_noise_scalar_and_packed_agree(p):
    f = NoiseField(p, 77)
    for t in (0, 9):
        ref = f.row(t, -64, 255)
        packed = unpack_bits(f.packed_row(t, -1, 5), 384)[:320]
        assert np.array_equal(ref, packed)


def test_noise_frequency():
    f = NoiseField(0.3, 5)
    box = f.box(0, 4095, 0, 50)
    assert abs(box.mean() - 0.3) < 0.005


def test_noise_independent_of_window():
    f = NoiseField(0.6, 3)
    assert np.array_equal(f.row(4, 10, 20), f.row(4, 0, 100)[10:21])


def test_coupled_noise_monotone_in_p():
    lo, hi = NoiseField(0.4, 9, coupled=True), NoiseField(0.6, 9, coupled=True)
    a, b = lo.box(0, 1000, 0, 20), hi.box(0, 1000, 0, 20)
    assert not np.any(a & ~b)


def test_ring_config_int_roundtrip():
    c = RingConfig(2, [True, False, False, True])
    assert c.to_int() == 0b1001
    assert RingConfig.from_int(2, 9) == c
    assert c[-2] and c[1] and not c[0]


def test_step_ring_by_hand():
    U = make_neighborhood([0, 1])
    c = RingConfig(2, [True, False, False, False])  # only site -2 alive
    nxt = step(c, np.ones(4, bool), U)
    # site x sees x and x+1: sites -2 and 1 (1+1 wraps to -2)
    assert nxt.bits.tolist() == [True, False, False, True]
    assert step(c, np.array([False, True, True, True]), U).bits.tolist() == [False, False, False, True]


def test_step_line_reads_outside_value():
    U = make_neighborhood([-1, 0, 1])
    c = LineConfig(0, 3, np.zeros(4, bool), outside_value=True)
    assert step(c, np.ones(4, bool), U).bits.tolist() == [True, False, False, True]


@pytest.mark.parametrize("n", [1, 2, 3, 16, 32, 33, 40, 100])
@pytest.mark.parametrize("offs", NEIGHBORHOODS[:6])
def test_ring_kernel_matches_reference(n, offs):
    U = make_neighborhood(offs)
    f = NoiseField(0.65, 123 + n)
    rng = np.random.default_rng(n)
    c = RingConfig(n, rng.random(2 * n) < 0.7)
    traj = K.ring_trajectory(c.packed(), 2 * n, U.as_array(), np.uint64(f.key), f.thresh, 25)
    for t in range(25):
        c = step(c, f.ring_row(n, t), U)
        assert np.array_equal(unpack_bits(traj[t + 1], 2 * n), c.bits), t


@pytest.mark.parametrize("lo,hi", [(0, 63), (-5, 70), (-130, 3), (17, 300)])
@pytest.mark.parametrize("offs", NEIGHBORHOODS)
@pytest.mark.parametrize("outside", [False, True])
def test_line_kernel_matches_reference(lo, hi, offs, outside):
    U = make_neighborhood(offs)
    f = NoiseField(0.7, 99)
    rng = np.random.default_rng(hi - lo)
    c = LineConfig(lo, hi, rng.random(hi - lo + 1) < 0.5, outside)
    packed = PackedLine.from_config(c, U)
    traj = K.line_trajectory(
        packed.words, packed.halo, packed.nbits, lo, U.as_array(), outside, np.uint64(f.key), f.thresh, 12
    )
    for t in range(12):
        c = step(c, f.line_row(lo, hi, t), U)
        assert np.array_equal(packed.bits_of(traj[t + 1]), c.bits), t


def test_pack_unpack_roundtrip():
    bits = np.random.default_rng(0).random(130) < 0.5
    words = pack_bits(bits)
    assert words.shape == (4,)
    assert np.array_equal(unpack_bits(words, 130), bits)


def test_check_cone():
    U = make_neighborhood([-1, 0, 1])
    check_cone((-10, 10), (-5, 5), 5, U)
    with pytest.raises(ConeViolationError):
        check_cone((-10, 10), (-5, 5), 6, U)


configs = st.integers(1, 5).flatmap(
    lambda n: st.tuples(st.just(n), st.lists(st.booleans(), min_size=2 * n, max_size=2 * n))
)
offsets_st = st.lists(st.integers(-3, 3), min_size=1, max_size=4)


@given(configs, offsets_st, st.lists(st.booleans(), min_size=10, max_size=10))
def test_all_zeros_is_absorbing(cfg, offs, noise):
    n, _ = cfg
    U = make_neighborhood(offs)
    row = np.resize(np.array(noise, bool), 2 * n)
    assert not step(RingConfig.zeros(n), row, U).bits.any()


@given(configs, st.lists(st.booleans(), min_size=10, max_size=10), offsets_st, st.integers(0, 2**32))
def test_step_is_monotone_in_configuration(cfg, extra, offs, s):
    # attractive dynamics: more ones before means more ones after
    n, bits = cfg
    U = make_neighborhood(offs)
    small = np.array(bits, bool)
    big = small | np.resize(np.array(extra, bool), 2 * n)
    row = NoiseField(0.5, s).ring_row(n, 0)
    a, b = step(RingConfig(n, small), row, U), step(RingConfig(n, big), row, U)
    assert not np.any(a.bits & ~b.bits)


@given(st.integers(0, 2**64 - 1), st.integers(0, 200), st.floats(0, 1))
def test_noise_is_deterministic(seed, t, p):
    a = NoiseField(p, seed).row(t, 0, 80)
    b = NoiseField(p, seed).row(t, 0, 80)
    assert np.array_equal(a, b)
