import itertools
import math

import hypothesis.strategies as st
import numpy as np
import pytest
from hypothesis import given

from pairsource.detection_chain import (
    ChainConfig,
    DetectorModel,
    accept_clicks,
    apply_dead_time,
    click_probability,
    splitter_joint_clicks,
)
from pairsource.errors import DomainError

probs = st.floats(0, 1)
bgs = st.floats(0, 0.99)


def chain(a, b, da=0.0, db=0.0):
    return ChainConfig(DetectorModel(0.1), DetectorModel(a, da), DetectorModel(b, db))


@st.composite
def chains(draw):
    a = draw(probs)
    b = draw(st.floats(0, 1 - a))
    return chain(a, b, draw(bgs), draw(bgs))


def enumerate_routings(n, a, b, da, db):
    """Oracle: sum over the 3**n per-photon routings and background states."""
    pa = pb = pab = 0.0
    lost = 1 - a - b
    for route in itertools.product((0, 1, 2), repeat=n):
        w = math.prod((a, b, lost)[r] for r in route)
        hit_a, hit_b = 0 in route, 1 in route
        for ba, bb in itertools.product((0, 1), repeat=2):
            wb = w * (da if ba else 1 - da) * (db if bb else 1 - db)
            ca, cb = hit_a or ba, hit_b or bb
            pa += wb * ca
            pb += wb * cb
            pab += wb * (ca and cb)
    return pa, pb, pab


# ---------------------------------------------------------------- clicks


def test_click_probability_examples():
    assert click_probability(0, DetectorModel(0.3)) == 0.0
    assert click_probability(1, DetectorModel(0.08)) == pytest.approx(0.08, rel=1e-15)
    assert click_probability(2, DetectorModel(0.5, 0.1)) == pytest.approx(0.775, rel=1e-15)


def test_splitter_examples():
    assert splitter_joint_clicks(1, chain(0.5, 0.5))[2] == 0.0
    pa, pb, pab = splitter_joint_clicks(0, chain(0.5, 0.5, 0.1, 0.2))
    assert (pa, pb) == pytest.approx((0.1, 0.2), rel=1e-15)
    assert pab == pytest.approx(0.02, rel=1e-14)
    assert splitter_joint_clicks(2, chain(0.5, 0.5))[2] == pytest.approx(0.5, rel=1e-15)


def test_routing_invariant():
    with pytest.raises(DomainError):
        chain(0.6, 0.5)
    with pytest.raises(DomainError):
        DetectorModel(1.2)
    with pytest.raises(DomainError):
        DetectorModel(0.1, bg_per_gate=1.0)
    with pytest.raises(DomainError):
        DetectorModel(0.1, dead_time_pulses=-1)


def test_from_idler_arm():
    ch = ChainConfig.from_idler_arm(DetectorModel(0.08), 0.005, 0.5)
    assert ch.idler_a.efficiency == ch.idler_b.efficiency == 0.0025


@given(c=chains(), n=st.integers(0, 6))
def test_splitter_matches_enumeration(c, n):
    got = splitter_joint_clicks(n, c)
    ref = enumerate_routings(n, c.idler_a.efficiency, c.idler_b.efficiency, c.idler_a.bg_per_gate, c.idler_b.bg_per_gate)
    assert got == pytest.approx(ref, rel=1e-9, abs=1e-15)


@given(c=chains())
def test_splitter_bounds_and_monotonicity(c):
    n = np.arange(21)
    pa, pb, pab = splitter_joint_clicks(n, c)
    for p in (pa, pb, pab):
        assert np.all((p >= 0) & (p <= 1))
        assert np.all(np.diff(p) >= -1e-15)
    assert np.all(pab <= np.minimum(pa, pb))


@given(c=chains())
def test_marginals_equal_click_probability(c):
    n = np.arange(21)
    pa, pb, _ = splitter_joint_clicks(n, c)
    assert np.allclose(pa, click_probability(n, c.idler_a), rtol=0, atol=1e-14)
    assert np.allclose(pb, click_probability(n, c.idler_b), rtol=0, atol=1e-14)


@given(a=probs, ratio=st.floats(0, 1))
def test_single_photon_never_coincides(a, ratio):
    c = chain(a * ratio, a * (1 - ratio))
    assert splitter_joint_clicks(1, c)[2] == 0.0


# -------------------------------------------------------------- dead time


def test_dead_time_zero_arms_everything():
    armed, clicked = apply_dead_time([0, 1, 2, 3], [True, True, False, True], DetectorModel(0.1))
    assert armed.all()
    assert clicked.tolist() == [True, True, False, True]


def test_dead_time_definition():
    det = DetectorModel(0.1, dead_time_pulses=3)
    armed, clicked = apply_dead_time([0, 1, 2, 3, 4], [True, True, True, True, False], det)
    assert armed.tolist() == [True, False, False, False, True]
    assert clicked.tolist() == [True, False, False, False, False]


def test_blocked_gates_do_not_extend_dead_time():
    # non-paralyzable: the blocked click at 2 leaves slot 4 armed
    assert accept_clicks([0, 2, 4, 5], 3).tolist() == [0, 4]


def test_out_of_order_gates_rejected():
    with pytest.raises(DomainError):
        apply_dead_time([3, 1], [True, True], DetectorModel(0.1, dead_time_pulses=2))


@given(st.lists(st.integers(0, 200), max_size=60), st.integers(0, 10))
def test_accept_clicks_matches_scalar_loop(slots, d):
    slots = sorted(slots)
    kept, last = [], None
    for s in slots:
        if last is None or s - last > d:
            kept.append(s)
            last = s
    assert accept_clicks(slots, d).tolist() == kept


@pytest.mark.parametrize("rate, dead", [(0.01, 20), (0.05, 10), (0.2, 3)])
def test_renewal_accept_fraction(rate, dead):
    # Bernoulli(rate) candidates per slot; each accepted click costs `dead`
    # slots, so a renewal cycle lasts dead + 1/rate slots on average
    rng = np.random.default_rng(12345)
    clicks = np.nonzero(rng.random(1_000_000) < rate)[0]
    frac = len(accept_clicks(clicks, dead)) / len(clicks)
    expected = 1 / (1 + rate * dead)
    sigma = math.sqrt(expected * (1 - expected) / len(clicks))
    assert abs(frac - expected) < 3 * sigma
