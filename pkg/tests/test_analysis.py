import itertools
import math
from dataclasses import replace

import hypothesis.strategies as st
import numpy as np
import pytest
from helpers import source_for_mu
from hypothesis import given, settings

from pairsource.analysis import (
    CalibrationTargets,
    CoincidenceReport,
    OffsetCounts,
    analytic_prediction,
    brute_force_oracle,
    calibrate_model,
    estimate_car,
    estimate_g2,
    fit_power_law,
    g2_from_probabilities,
)
from pairsource.detection_chain import ChainConfig, DetectorModel, splitter_joint_clicks
from pairsource.errors import CalibrationError, DomainError, HeraldNeverFires, InsufficientStatistics
from pairsource.photon_statistics import PumpConfig, SourceModel, pair_pmf

PUMP = PumpConfig()
OUTPUTS = ("p_H", "p_A_given_H", "p_B_given_H", "p_AB_given_H", "g2", "car", "herald_rate_hz", "coincidence_rate_hz",
           "p_A_unconditional", "p_B_unconditional", "p_AB_unconditional", "g2_unheralded")


def report(n_h, n_a, n_b, n_ab):
    return CoincidenceReport(None, n_h, n_a, n_b, n_ab)


def rel_diff(x, y):
    if math.isnan(x) and math.isnan(y):
        return 0.0
    if x == y:
        return 0.0
    return abs(x - y) / abs(y)


# ------------------------------------------------------------ estimators


def test_g2_from_published_probabilities():
    assert g2_from_probabilities(1.05e-6, 2.975e-3, 3.162e-3) == pytest.approx(0.1116, abs=5e-5)


def test_g2_independent_clicks():
    g = estimate_g2(report(10**6, 2000, 5000, 10))
    assert g.value == pytest.approx(1.0, rel=1e-12)
    assert g.upper_bound is None


def test_g2_zero_coincidences_bound():
    g = estimate_g2(report(10**6, 1000, 1000, 0))
    assert g.value == 0.0
    assert g.upper_bound == pytest.approx(1.0, rel=1e-12)


@pytest.mark.parametrize("counts", [(0, 0, 0, 0), (100, 0, 5, 0), (100, 5, 0, 0)])
def test_g2_insufficient(counts):
    with pytest.raises(InsufficientStatistics):
        estimate_g2(report(*counts))
    with pytest.raises(InsufficientStatistics):
        estimate_g2(report(100, 5, 5, 1), offset_n=3)


@given(
    n_h=st.integers(1, 10**9),
    fa=st.floats(1e-6, 1),
    fb=st.floats(1e-6, 1),
    fab=st.floats(0, 1),
    scale=st.integers(1, 1000),
)
def test_g2_scale_invariant(n_h, fa, fb, fab, scale):
    n_a = max(1, int(n_h * fa))
    n_b = max(1, int(n_h * fb))
    n_ab = int(min(n_a, n_b) * fab)
    g1 = estimate_g2(report(n_h, n_a, n_b, n_ab))
    g2 = estimate_g2(report(n_h * scale, n_a * scale, n_b * scale, n_ab * scale))
    assert g2.value == pytest.approx(g1.value, rel=1e-12)
    assert g1.value >= 0
    assert g1.value == g2_from_probabilities(g1.p_AB_given_H, g1.p_A_given_H, g1.p_B_given_H)


def test_g2_error_propagation():
    g = estimate_g2(report(10**6, 400, 900, 100))
    assert g.std_error == pytest.approx(g.value * math.sqrt(1 / 100 + 1 / 400 + 1 / 900), rel=1e-14)


def test_car_examples():
    assert estimate_car({0: 268, 1: 14.6, -1: 14.6}).value == pytest.approx(18.356, abs=1e-3)
    assert estimate_car({0: 50, 1: 50, 2: 50, 6: 50}).value == 1.0
    c = estimate_car({0: 268, 1: 0, 2: 0})
    assert c.unbounded and c.value == math.inf and c.lower_bound == 268
    with pytest.raises(InsufficientStatistics):
        estimate_car({0: 10})
    with pytest.raises(InsufficientStatistics):
        estimate_car({1: 10, 2: 3})


def test_car_uses_mean_of_accidentals():
    assert estimate_car({0: 120, 1: 10, 2: 20, 3: 30}).value == pytest.approx(6.0)


def test_power_law_exact():
    p = [5, 10, 15, 20, 25]
    fit = fit_power_law([(x, 3.0 * x**2) for x in p])
    assert fit.exponent == pytest.approx(2.0, abs=1e-9)
    assert fit.amplitude == pytest.approx(3.0, rel=1e-9)
    assert fit.residual < 1e-12
    assert fit_power_law([(x, 7 * x) for x in p]).exponent == pytest.approx(1.0, abs=1e-9)


def test_power_law_rejects_bad_points():
    with pytest.raises(DomainError):
        fit_power_law([(1, 1), (2, 0), (3, 9)])
    with pytest.raises(DomainError):
        fit_power_law([(1, 1), (2, 4)])


@given(st.floats(0.5, 3.0), st.floats(1e-3, 1e3))
def test_power_law_recovers_exponent(k, amp):
    pts = [(x, amp * x**k) for x in (1.0, 2.0, 4.0, 8.0)]
    assert fit_power_law(pts).exponent == pytest.approx(k, abs=1e-9)


def test_report_roundtrip_and_identity():
    r = CoincidenceReport(1000, 50, 10, 12, 2, {1: OffsetCounts(49, 10, 11, 1)}, {1: 3}, {"seed": 1})
    assert r.check_counting_identity()
    assert CoincidenceReport.from_dict(r.to_dict()) == r
    assert not CoincidenceReport(10, 50, 10, 12, 2).check_counting_identity()


# --------------------------------------------------------- analytic model


def small_mu_g2(mu, eta_h, a, b):
    """Leading terms of the noiseless heralded g2 for a Poisson source.

    A threshold herald weights n = 2 against n = 1 by (2 - eta_h), so
    P(2|H)/P(1|H) = mu (1 - eta_h/2); then p_AB ~ 2ab P(2|H), p_A ~ a, p_B ~ b.
    """
    return 2 * mu * (1 - eta_h / 2)


def test_analytic_published_anchor():
    chain = ChainConfig(DetectorModel(0.08), DetectorModel(2.5e-3), DetectorModel(2.5e-3))
    pred = analytic_prediction(source_for_mu(4.4e-3), chain, PUMP)
    assert pred.p_H == pytest.approx(3.52e-4, abs=5e-7)
    assert pred.g2 == g2_from_probabilities(pred.p_AB_given_H, pred.p_A_given_H, pred.p_B_given_H)
    assert pred.g2 == pytest.approx(small_mu_g2(4.4e-3, 0.08, 2.5e-3, 2.5e-3), rel=0.02)
    # the bare 2 mu law is off by the herald-efficiency factor 1 - 0.08/2
    assert pred.g2 / (2 * 4.4e-3) == pytest.approx(0.954, abs=0.005)


@pytest.mark.parametrize("eta_h", [1e-4, 0.01, 0.08, 0.5, 1.0])
@pytest.mark.parametrize("mu", [1e-5, 1e-4, 1e-3, 2.5e-3, 5e-3])
def test_small_mu_law(mu, eta_h):
    chain = ChainConfig(DetectorModel(eta_h), DetectorModel(2.975e-3), DetectorModel(3.162e-3))
    pred = analytic_prediction(source_for_mu(mu), chain, PUMP)
    assert pred.g2 == pytest.approx(small_mu_g2(mu, eta_h, 2.975e-3, 3.162e-3), rel=0.02)


@pytest.mark.parametrize("mu", [1e-5, 1e-3, 5e-3])
def test_weak_herald_limit_is_two_mu(mu):
    chain = ChainConfig(DetectorModel(1e-4), DetectorModel(2.5e-3), DetectorModel(2.5e-3))
    assert analytic_prediction(source_for_mu(mu), chain, PUMP).g2 == pytest.approx(2 * mu, rel=0.02)


def test_backgrounds_only_give_unit_g2():
    chain = ChainConfig(DetectorModel(0.08, 1e-3), DetectorModel(0.003, 1e-3), DetectorModel(0.003, 2e-3))
    pred = analytic_prediction(source_for_mu(1e-12), chain, PUMP)
    assert pred.g2 == pytest.approx(1.0, rel=1e-6)


def test_analytic_herald_never_fires():
    chain = ChainConfig(DetectorModel(0.0), DetectorModel(0.1), DetectorModel(0.1))
    with pytest.raises(HeraldNeverFires):
        analytic_prediction(source_for_mu(0.1), chain, PUMP)


def test_paper_profile_g2_window(paper_cfg):
    pred = analytic_prediction(paper_cfg.source, paper_cfg.chain, paper_cfg.pump)
    assert 0.08 <= pred.g2 <= 0.14
    assert pred.herald_rate_hz == pytest.approx(3.5e4, rel=1e-6)
    assert pred.car == pytest.approx(18.3, rel=1e-6)


# ---------------------------------------------------------------- oracle

GRID = (0.0, 1e-3, 0.1, 0.5)


@pytest.mark.parametrize("mu", [0.0, 1e-3, 4.4e-3, 0.05, 0.1])
def test_oracle_agreement_grid(mu):
    src = source_for_mu(mu)
    n_max = pair_pmf(mu).truncation_nmax
    worst = 0.0
    checked = 0
    for eta_h, d_h, a, b, d_a, d_b in itertools.product(GRID, repeat=6):
        chain = ChainConfig(DetectorModel(eta_h, d_h), DetectorModel(a, d_a), DetectorModel(b, d_b))
        try:
            an = analytic_prediction(src, chain, PUMP)
        except HeraldNeverFires:
            with pytest.raises(HeraldNeverFires):
                brute_force_oracle(src, chain, n_max, PUMP)
            continue
        orc = brute_force_oracle(src, chain, n_max, PUMP)
        worst = max(worst, max(rel_diff(getattr(an, k), getattr(orc, k)) for k in OUTPUTS))
        checked += 1
    assert checked > 3000
    assert worst < 1e-12


def test_oracle_dark_only():
    chain = ChainConfig(DetectorModel(0.3, 0.01), DetectorModel(0.2, 0.02), DetectorModel(0.2, 0.05))
    orc = brute_force_oracle(SourceModel(pair_coeff_k=0.0), chain, 0, PUMP)
    assert orc.p_H == pytest.approx(0.01, rel=1e-14)
    pa, pb, pab = splitter_joint_clicks(0, chain)
    assert (orc.p_A_given_H, orc.p_B_given_H, orc.p_AB_given_H) == pytest.approx((pa, pb, pab), rel=1e-14)


def test_oracle_single_pair_perfect_antibunching():
    # P(1) = 1: thermal with mu -> 0 is not it, so build the single-pair case by
    # enumerating with n_max = 1 and a herald that only fires on photons
    chain = ChainConfig(DetectorModel(1.0), DetectorModel(0.5), DetectorModel(0.5))
    orc = brute_force_oracle(source_for_mu(0.3), chain, 1, PUMP)
    assert orc.p_AB_given_H == 0.0
    assert orc.g2 == 0.0


def test_oracle_rejects_large_nmax(simple_chain):
    with pytest.raises(DomainError):
        brute_force_oracle(SourceModel(), simple_chain, 13, PUMP)


@settings(max_examples=40, deadline=None)
@given(
    mu=st.floats(0, 0.1),
    eta=st.floats(0, 1),
    a=st.floats(0, 0.5),
    b=st.floats(0, 0.5),
    d=st.tuples(st.floats(0, 0.2), st.floats(0, 0.2), st.floats(0, 0.2)),
    kind=st.sampled_from(["poisson", "thermal"]),
)
def test_oracle_agreement_random(mu, eta, a, b, d, kind):
    src = source_for_mu(mu, distribution_kind=kind)
    chain = ChainConfig(DetectorModel(eta, d[0]), DetectorModel(a, d[1]), DetectorModel(b, d[2]))
    n_max = pair_pmf(mu, kind).truncation_nmax
    if n_max > 9:
        return
    try:
        an = analytic_prediction(src, chain, PUMP)
    except HeraldNeverFires:
        return
    orc = brute_force_oracle(src, chain, n_max, PUMP)
    for k in OUTPUTS:
        assert rel_diff(getattr(an, k), getattr(orc, k)) < 1e-12, k


# ------------------------------------------------------ classical boundary


@settings(max_examples=60, deadline=None)
@given(
    mu=st.floats(1e-5, 2.0),
    eta=st.floats(0.01, 1),
    a=st.floats(1e-4, 0.5),
    b=st.floats(1e-4, 0.5),
    d=st.floats(0, 0.1),
    kind=st.sampled_from(["poisson", "thermal"]),
)
def test_unheralded_g2_is_classical(mu, eta, a, b, d, kind):
    chain = ChainConfig(DetectorModel(eta, d), DetectorModel(a, d), DetectorModel(b, d))
    src = source_for_mu(mu, distribution_kind=kind)
    pred = analytic_prediction(src, chain, PUMP)
    # truncation removes at most tail_bound of mass from each sum
    eps = 2 * src.tail_bound / pred.p_AB_unconditional
    assert pred.g2_unheralded >= 1 - eps


def test_heralding_is_what_breaks_the_bound(paper_cfg):
    pred = analytic_prediction(paper_cfg.source, paper_cfg.chain, paper_cfg.pump)
    assert pred.g2 < 1
    assert pred.g2_unheralded >= 1 - 2 * paper_cfg.source.tail_bound / pred.p_AB_unconditional


# ------------------------------------------------------------ calibration


def test_calibration_round_trip():
    chain = ChainConfig(DetectorModel(0.08, 2e-6), DetectorModel(2.975e-3, 1e-6), DetectorModel(3.162e-3))
    truth = SourceModel(pair_coeff_k=0.021, herald_bg_per_gate=2e-5, idlerA_bg_per_gate=1.2e-4,
                        idlerB_bg_per_gate=1.7e-4, bg_reference_peak_power_W=0.4166666666666667)
    pred = analytic_prediction(truth, chain, PUMP)
    targets = CalibrationTargets(pred.herald_rate_hz, pred.p_A_given_H, pred.p_B_given_H, pred.car)
    res = calibrate_model(targets, PUMP, chain)
    for name in ("pair_coeff_k", "herald_bg_per_gate", "idlerA_bg_per_gate", "idlerB_bg_per_gate"):
        assert getattr(res.source, name) == pytest.approx(getattr(truth, name), rel=1e-3), name
    assert max(abs(v) for v in res.residuals.values()) < 1e-3
    assert res.non_identifiable


def test_calibration_noiseless_limit():
    chain = ChainConfig(DetectorModel(0.08), DetectorModel(2.975e-3), DetectorModel(3.162e-3))
    pred = analytic_prediction(source_for_mu(4e-3), chain, PUMP)
    res = calibrate_model(CalibrationTargets(pred.herald_rate_hz, pred.p_A_given_H, pred.p_B_given_H, math.inf), PUMP, chain)
    assert res.source.herald_bg_per_gate == pytest.approx(0.0, abs=1e-12)
    assert res.source.idlerA_bg_per_gate == 0.0
    assert res.source.idlerB_bg_per_gate == pytest.approx(0.0, abs=1e-12)
    assert res.source.pair_coeff_k == pytest.approx(source_for_mu(4e-3).pair_coeff_k, rel=1e-6)


def test_calibration_paper_targets(paper_cfg):
    res = calibrate_model(CalibrationTargets(3.5e4, 2.975e-3, 3.162e-3, 18.3), paper_cfg.pump, paper_cfg.chain)
    assert 0.08 <= res.prediction.g2 <= 0.14
    assert max(abs(v) for v in res.residuals.values()) < 1e-3
    assert res.source.pair_coeff_k == pytest.approx(paper_cfg.source.pair_coeff_k, rel=1e-9)


def test_calibration_reports_infeasible_targets():
    # 0.25 % per detector cannot reach p_A|H = 2.975e-3 at this herald rate
    chain = ChainConfig(DetectorModel(0.08), DetectorModel(2.5e-3), DetectorModel(2.5e-3))
    with pytest.raises(CalibrationError) as err:
        calibrate_model(CalibrationTargets(3.5e4, 2.975e-3, 3.162e-3, 18.3), PUMP, chain)
    assert "p_A_given_H" in err.value.residuals


def test_calibration_rejects_nonsense():
    chain = ChainConfig(DetectorModel(0.08), DetectorModel(3e-3), DetectorModel(3e-3))
    with pytest.raises(CalibrationError):
        calibrate_model(CalibrationTargets(3.5e4, 2.975e-3, 3.162e-3, 0.5), PUMP, chain)
    with pytest.raises(CalibrationError):
        calibrate_model(CalibrationTargets(-1, 2.975e-3, 3.162e-3, 18.3), PUMP, chain)
