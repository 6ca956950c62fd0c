"""Estimators, the exact analytic model, its enumeration oracle and calibration.

The analytic model is: pair numbers from the source distribution, threshold
detectors, independent per-gate backgrounds and exclusive splitter routing,
evaluated by truncated summation over the pair number.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import NamedTuple

import numpy as np

from .detection_chain import ChainConfig, click_probability, splitter_joint_clicks
from .errors import CalibrationError, DomainError, HeraldNeverFires, InsufficientStatistics
from .events import EventStream
from .model import effective_chain, operating_point
from .photon_statistics import PumpConfig, SourceModel, peak_power

# ---------------------------------------------------------------- counting


@dataclass(frozen=True)
class OffsetCounts:
    """Counts for one herald offset: A gated on herald k, B on herald k + offset."""

    n_heralds: int
    n_A: int
    n_B: int
    n_AB: int


@dataclass
class CoincidenceReport:
    n_pulses: int | None
    n_heralds: int
    n_A_given_H: int
    n_B_given_H: int
    n_AB_given_H: int
    # herald offset -> counts behind g2(offset)
    offset_counts: dict = field(default_factory=dict)
    # D_A gate delay in pulse slots -> H-A coincidences (0 = same pulse)
    offset_histogram: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.offset_counts.setdefault(
            0, OffsetCounts(self.n_heralds, self.n_A_given_H, self.n_B_given_H, self.n_AB_given_H)
        )
        self.offset_histogram.setdefault(0, self.n_A_given_H)

    def check_counting_identity(self):
        ok = self.n_AB_given_H <= min(self.n_A_given_H, self.n_B_given_H) <= self.n_heralds
        if self.n_pulses is not None:
            ok = ok and self.n_heralds <= self.n_pulses
        ok = ok and all(v >= 0 for v in self.offset_histogram.values())
        return ok

    def to_dict(self):
        return {
            "n_pulses": self.n_pulses,
            "n_heralds": self.n_heralds,
            "n_A_given_H": self.n_A_given_H,
            "n_B_given_H": self.n_B_given_H,
            "n_AB_given_H": self.n_AB_given_H,
            "offset_counts": {str(k): asdict(v) for k, v in sorted(self.offset_counts.items())},
            "offset_histogram": {str(k): v for k, v in sorted(self.offset_histogram.items())},
            "metadata": dict(sorted(self.metadata.items())),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["n_pulses"],
            d["n_heralds"],
            d["n_A_given_H"],
            d["n_B_given_H"],
            d["n_AB_given_H"],
            {int(k): OffsetCounts(**v) for k, v in d.get("offset_counts", {}).items()},
            {int(k): v for k, v in d.get("offset_histogram", {}).items()},
            dict(d.get("metadata", {})),
        )


def offset_counts_from_flags(a_flags, b_flags, offset):
    """Pair A of herald k with B of herald k + offset over a herald sequence."""
    a = np.asarray(a_flags, dtype=bool)
    b = np.asarray(b_flags, dtype=bool)
    n = len(a)
    if offset < 0:
        raise DomainError("herald offsets must be >= 0")
    if offset >= n:
        return OffsetCounts(0, 0, 0, 0)
    a_part = a[: n - offset]
    b_part = b[offset:]
    return OffsetCounts(n - offset, int(a_part.sum()), int(b_part.sum()), int((a_part & b_part).sum()))


def _parse_int_list(value):
    if value is None or value == "":
        return ()
    if isinstance(value, str):
        return tuple(int(v) for v in value.split(",") if v.strip())
    return tuple(int(v) for v in value)


def count_stream(stream: EventStream, offsets=(0,), delays=None, n_pulses=None) -> CoincidenceReport:
    """Recompute every count from the rows of an event stream.

    ``offsets`` are herald offsets for g2(n). ``delays`` are the D_A gate
    delays (pulse slots) used by the run; they default to the stream's
    ``car_delays`` metadata. Only delays the run actually gated are meaningful.
    """
    meta = stream.metadata
    if n_pulses is None and "n_pulses" in meta:
        n_pulses = int(meta["n_pulses"])
    if delays is None:
        delays = _parse_int_list(meta.get("car_delays"))
    heralds = stream.pulse_index[stream.H]
    a_h = stream.A[stream.H]
    b_h = stream.B[stream.H]
    base = offset_counts_from_flags(a_h, b_h, 0)
    counts = {int(o): offset_counts_from_flags(a_h, b_h, int(o)) for o in set(offsets) | {0}}
    a_slots = stream.pulse_index[stream.A]
    hist = {0: base.n_A}
    for m in delays:
        m = int(m)
        if m == 0:
            continue
        target = heralds + m
        if n_pulses is not None:
            target = target[target < n_pulses]
        hist[m] = int(np.isin(target, a_slots).sum())
    report_meta = {k: meta[k] for k in ("config_hash", "seed", "rng") if k in meta}
    return CoincidenceReport(n_pulses, base.n_heralds, base.n_A, base.n_B, base.n_AB, counts, hist, report_meta)


# -------------------------------------------------------------- estimators


@dataclass(frozen=True)
class G2Estimate:
    value: float
    std_error: float
    offset_n: int
    p_A_given_H: float
    p_B_given_H: float
    p_AB_given_H: float
    # set when no AB coincidence was seen: the value a single count would give
    upper_bound: float | None = None


def g2_from_probabilities(p_ab, p_a, p_b):
    return p_ab / (p_a * p_b)


def estimate_g2(report: CoincidenceReport, offset_n: int = 0) -> G2Estimate:
    """Heralded g2 at the given herald offset from raw counts.

    The standard error is first-order propagation treating the three counts
    as independent Poisson variables; they share N_H, so it is approximate.
    """
    c = report.offset_counts.get(offset_n)
    if c is None:
        raise InsufficientStatistics(f"report has no counts for offset {offset_n}")
    if c.n_heralds <= 0 or c.n_A <= 0 or c.n_B <= 0:
        raise InsufficientStatistics(
            f"insufficient statistics for g2({offset_n}): N_H={c.n_heralds}, N_A={c.n_A}, N_B={c.n_B}"
        )
    n_h = c.n_heralds
    p_a, p_b, p_ab = c.n_A / n_h, c.n_B / n_h, c.n_AB / n_h
    value = g2_from_probabilities(p_ab, p_a, p_b)
    upper = None
    if c.n_AB == 0:
        upper = g2_from_probabilities(1 / n_h, p_a, p_b)
        err = upper * math.sqrt(1 + 1 / c.n_A + 1 / c.n_B)
    else:
        err = value * math.sqrt(1 / c.n_AB + 1 / c.n_A + 1 / c.n_B)
    return G2Estimate(value, err, offset_n, p_a, p_b, p_ab, upper)


@dataclass(frozen=True)
class CarEstimate:
    value: float
    coincidences: float
    accidentals: float
    std_error: float
    unbounded: bool = False
    lower_bound: float | None = None
    offsets: tuple = ()


def estimate_car(histogram) -> CarEstimate:
    """Coincidence-to-accidental ratio from an offset histogram.

    ``histogram`` maps offset -> counts (or rates); offset 0 is the true
    coincidence peak and the accidental level is the mean over all other
    offsets provided.
    """
    hist = {int(k): float(v) for k, v in dict(histogram).items()}
    if 0 not in hist:
        raise InsufficientStatistics("CAR needs the zero-offset coincidence count")
    others = sorted(k for k in hist if k != 0)
    if not others:
        raise InsufficientStatistics("CAR needs at least one nonzero offset")
    c0 = hist[0]
    acc = math.fsum(hist[k] for k in others) / len(others)
    acc_total = acc * len(others)
    if acc == 0:
        return CarEstimate(math.inf, c0, 0.0, math.inf, True, c0 / 1.0, tuple(others))
    value = c0 / acc
    err = value * math.sqrt((1 / c0 if c0 > 0 else 0.0) + 1 / acc_total)
    return CarEstimate(value, c0, acc, err, False, None, tuple(others))


class PowerLawFit(NamedTuple):
    exponent: float
    amplitude: float
    residual: float


def fit_power_law(points) -> PowerLawFit:
    """Least-squares line through ``log(rate)`` vs ``log(power)``."""
    pts = np.asarray(list(points), dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise DomainError("need at least 3 (power, rate) points")
    if np.any(pts <= 0) or not np.all(np.isfinite(pts)):
        raise DomainError("power-law fit needs strictly positive, finite values")
    x, y = np.log(pts[:, 0]), np.log(pts[:, 1])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return PowerLawFit(float(slope), float(math.exp(intercept)), float(np.sqrt(np.mean(resid**2))))


# ---------------------------------------------------------- analytic model


@dataclass(frozen=True)
class AnalyticPrediction:
    p_H: float
    p_A_given_H: float
    p_B_given_H: float
    p_AB_given_H: float
    g2: float
    car: float
    herald_rate_hz: float
    coincidence_rate_hz: float
    mu: float = 0.0
    p_A_unconditional: float = 0.0
    p_B_unconditional: float = 0.0
    p_AB_unconditional: float = 0.0
    g2_unheralded: float = math.nan

    def as_dict(self):
        return asdict(self)


def _ratio(num, den):
    return num / den if den > 0 else math.nan


def _assemble(mu, weights, p_h_n, p_a_n, p_b_n, p_ab_n, rep_rate_hz):
    """Shared final step: fold per-n click probabilities into the outputs."""
    p_h = math.fsum(w * h for w, h in zip(weights, p_h_n))
    if p_h <= 0:
        raise HeraldNeverFires("herald never fires for this configuration")
    pa = math.fsum(w * h * x for w, h, x in zip(weights, p_h_n, p_a_n)) / p_h
    pb = math.fsum(w * h * x for w, h, x in zip(weights, p_h_n, p_b_n)) / p_h
    pab = math.fsum(w * h * x for w, h, x in zip(weights, p_h_n, p_ab_n)) / p_h
    ua = math.fsum(w * x for w, x in zip(weights, p_a_n))
    ub = math.fsum(w * x for w, x in zip(weights, p_b_n))
    uab = math.fsum(w * x for w, x in zip(weights, p_ab_n))
    return AnalyticPrediction(
        p_H=p_h,
        p_A_given_H=pa,
        p_B_given_H=pb,
        p_AB_given_H=pab,
        g2=_ratio(pab, pa * pb),
        car=_ratio(pa, ua),
        herald_rate_hz=p_h * rep_rate_hz,
        coincidence_rate_hz=p_h * pa * rep_rate_hz,
        mu=mu,
        p_A_unconditional=ua,
        p_B_unconditional=ub,
        p_AB_unconditional=uab,
        g2_unheralded=_ratio(uab, ua * ub),
    )


def analytic_prediction(source: SourceModel, chain: ChainConfig, pump: PumpConfig) -> AnalyticPrediction:
    """Exact per-pulse and per-second predictions at the pump's operating point.

    CAR is the H-A coincidence probability on the heralded pulse divided by
    the same on an unrelated pulse (D_A gated a whole number of pulses late).
    """
    op = operating_point(pump, source, chain)
    n = op.pmf.support
    p_h_n = click_probability(n, op.chain.herald)
    p_a_n, p_b_n, p_ab_n = splitter_joint_clicks(n, op.chain)
    return _assemble(op.mu, op.pmf.probabilities.tolist(), np.atleast_1d(p_h_n).tolist(),
                     np.atleast_1d(p_a_n).tolist(), np.atleast_1d(p_b_n).tolist(),
                     np.atleast_1d(p_ab_n).tolist(), pump.rep_rate_hz)


@lru_cache(maxsize=16)
def _routings(n):
    # every assignment of n photons to 0 = arm A, 1 = arm B, 2 = lost
    if n == 0:
        return np.zeros((1, 0), dtype=np.int8)
    return np.array(list(itertools.product((0, 1, 2), repeat=n)), dtype=np.int8)


@lru_cache(maxsize=16)
def _detections(n):
    if n == 0:
        return np.zeros((1, 0), dtype=np.int8)
    return np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int8)


def _oracle_pmf(mu, kind, n_max):
    out = []
    for n in range(n_max + 1):
        if mu == 0:
            out.append(1.0 if n == 0 else 0.0)
        elif kind == "poisson":
            out.append(math.exp(n * math.log(mu) - mu - math.lgamma(n + 1)))
        else:
            out.append(mu**n / (1 + mu) ** (n + 1))
    return out


def brute_force_oracle(source: SourceModel, chain: ChainConfig, n_max: int, pump: PumpConfig) -> AnalyticPrediction:
    """Same outputs as :func:`analytic_prediction`, by explicit enumeration.

    For each pair number every herald detection pattern, every per-photon
    routing (A / B / lost) and every background on/off combination is listed
    and its probability summed, with no closed-form click formulas.
    """
    if not 0 <= n_max <= 12:
        raise DomainError("brute-force enumeration supports 0 <= n_max <= 12")
    p_peak = peak_power(pump)
    mu = source.pair_coeff_k * p_peak * p_peak
    ch = effective_chain(source, chain, p_peak)
    eta_h, d_h = ch.herald.efficiency, ch.herald.bg_per_gate
    a, b = ch.idler_a.efficiency, ch.idler_b.efficiency
    d_a, d_b = ch.idler_a.bg_per_gate, ch.idler_b.bg_per_gate
    lost = max(0.0, 1.0 - a - b)
    weights = _oracle_pmf(mu, source.distribution_kind, n_max)

    p_h_n, p_a_n, p_b_n, p_ab_n = [], [], [], []
    for n in range(n_max + 1):
        det = _detections(n)
        k = det.sum(axis=1)
        pattern_p = eta_h**k * (1 - eta_h) ** (n - k)
        photon_click = k > 0
        terms = []
        for bg_on in (0, 1):
            bg_p = d_h if bg_on else 1 - d_h
            terms.extend((pattern_p * bg_p)[photon_click | bool(bg_on)].tolist())
        p_h_n.append(math.fsum(terms))

        routes = _routings(n)
        n_a = (routes == 0).sum(axis=1)
        n_b = (routes == 1).sum(axis=1)
        route_p = a**n_a * b**n_b * lost ** (n - n_a - n_b)
        ta, tb, tab = [], [], []
        for bga, bgb in itertools.product((0, 1), repeat=2):
            bg_p = (d_a if bga else 1 - d_a) * (d_b if bgb else 1 - d_b)
            click_a = (n_a > 0) | bool(bga)
            click_b = (n_b > 0) | bool(bgb)
            w = route_p * bg_p
            ta.extend(w[click_a].tolist())
            tb.extend(w[click_b].tolist())
            tab.extend(w[click_a & click_b].tolist())
        p_a_n.append(math.fsum(ta))
        p_b_n.append(math.fsum(tb))
        p_ab_n.append(math.fsum(tab))

    p_h = math.fsum(w * h for w, h in zip(weights, p_h_n))
    if p_h <= 0:
        raise HeraldNeverFires("herald never fires for this configuration")
    cond = [w * h for w, h in zip(weights, p_h_n)]
    pa = math.fsum(c * x for c, x in zip(cond, p_a_n)) / p_h
    pb = math.fsum(c * x for c, x in zip(cond, p_b_n)) / p_h
    pab = math.fsum(c * x for c, x in zip(cond, p_ab_n)) / p_h
    ua = math.fsum(w * x for w, x in zip(weights, p_a_n))
    ub = math.fsum(w * x for w, x in zip(weights, p_b_n))
    uab = math.fsum(w * x for w, x in zip(weights, p_ab_n))
    return AnalyticPrediction(
        p_H=p_h,
        p_A_given_H=pa,
        p_B_given_H=pb,
        p_AB_given_H=pab,
        g2=pab / (pa * pb) if pa * pb > 0 else math.nan,
        car=pa / ua if ua > 0 else math.nan,
        herald_rate_hz=p_h * pump.rep_rate_hz,
        coincidence_rate_hz=p_h * pa * pump.rep_rate_hz,
        mu=mu,
        p_A_unconditional=ua,
        p_B_unconditional=ub,
        p_AB_unconditional=uab,
        g2_unheralded=uab / (ua * ub) if ua * ub > 0 else math.nan,
    )


# ------------------------------------------------------------- calibration


@dataclass(frozen=True)
class CalibrationTargets:
    herald_rate_hz: float
    p_A_given_H: float
    p_B_given_H: float
    car: float


@dataclass
class CalibrationResult:
    source: SourceModel
    chain: ChainConfig
    prediction: AnalyticPrediction
    residuals: dict
    iterations: int
    non_identifiable: list


def _residuals(pred, targets):
    r = {
        "herald_rate_hz": pred.herald_rate_hz / targets.herald_rate_hz - 1,
        "p_A_given_H": pred.p_A_given_H / targets.p_A_given_H - 1,
        "p_B_given_H": pred.p_B_given_H / targets.p_B_given_H - 1,
    }
    if math.isfinite(targets.car):
        r["car"] = pred.car / targets.car - 1
    return r


def _source_from(template, p_peak, mu, eff_bg, darks):
    # invert 1 - (1 - dark)(1 - s) = e for the pump-driven part s
    s = [max(0.0, 1 - (1 - e) / (1 - d)) for e, d in zip(eff_bg, darks)]
    return replace(
        template,
        pair_coeff_k=mu / p_peak**2,
        herald_bg_per_gate=s[0],
        idlerA_bg_per_gate=s[1],
        idlerB_bg_per_gate=s[2],
        bg_reference_peak_power_W=p_peak,
    )


def calibrate_model(
    targets: CalibrationTargets,
    pump: PumpConfig,
    chain: ChainConfig,
    template: SourceModel | None = None,
    damping: float = 0.5,
    rtol: float = 1e-9,
    max_iter: int = 10_000,
) -> CalibrationResult:
    """Fit pair coefficient and the three pump-driven backgrounds to targets.

    Efficiencies and detector dark counts stay fixed (they are not jointly
    identifiable with backgrounds from these four numbers). Each sweep moves
    every parameter a fraction ``damping`` of the way to the value that
    would match its own target with the others frozen: the herald rate fixes
    the pair number, CAR the A background, p_A|H the herald background and
    p_B|H the B background. Backgrounds are referenced to this pump power.
    ``car = inf`` requests the noiseless limit for the A arm.
    """
    template = template or SourceModel()
    p_peak = peak_power(pump)
    if p_peak <= 0:
        raise CalibrationError("calibration needs a nonzero pump power")
    for name in ("herald_rate_hz", "p_A_given_H", "p_B_given_H", "car"):
        if not getattr(targets, name) > 0:
            raise CalibrationError(f"target {name} must be positive")
    p_h_t = targets.herald_rate_hz / pump.rep_rate_hz
    if not 0 < p_h_t < 1 or targets.p_A_given_H >= 1 or targets.p_B_given_H >= 1:
        raise CalibrationError("targets must be probabilities below 1 per pulse")
    if targets.car <= 1:
        raise CalibrationError("CAR must exceed 1 for a correlated source")

    darks = (chain.herald.bg_per_gate, chain.idler_a.bg_per_gate, chain.idler_b.bg_per_gate)
    eta_h = chain.herald.efficiency
    a, b = chain.idler_a.efficiency, chain.idler_b.efficiency
    kind = template.distribution_kind
    if eta_h <= 0:
        raise CalibrationError("herald efficiency must be positive")

    def mean_power(eta, mu):
        # E[(1 - eta)^N] for the pair-number law
        return math.exp(-eta * mu) if kind == "poisson" else 1 / (1 + eta * mu)

    def mu_for_herald(e_h):
        ratio = (1 - p_h_t) / (1 - e_h)
        if ratio >= 1:
            return 0.0
        return -math.log(ratio) / eta_h if kind == "poisson" else (1 / ratio - 1) / eta_h

    def e_a_for_car(mu):
        if math.isinf(targets.car):
            return darks[1]
        pau = targets.p_A_given_H / targets.car
        return 1 - (1 - pau) / mean_power(a, mu)

    def predict(mu, e):
        src = _source_from(template, p_peak, mu, e, darks)
        return src, analytic_prediction(src, chain, pump)

    # feasibility: with no pump-driven herald background every herald is as
    # pure as it can be, so p_A|H is at its maximum
    mu0 = mu_for_herald(darks[0])
    e_a0 = e_a_for_car(mu0)
    if e_a0 < darks[1] - 1e-15:
        raise CalibrationError(
            "CAR target is unreachable: accidentals from multi-pair events and dark counts already exceed it",
            {"car": targets.car},
        )
    _, best = predict(mu0, (darks[0], e_a0, darks[2]))
    if best.p_A_given_H < targets.p_A_given_H * (1 - 1e-12):
        raise CalibrationError(
            f"targets infeasible with fixed efficiencies: p_A|H can reach at most {best.p_A_given_H:.4g} "
            f"(target {targets.p_A_given_H:.4g}); idler_a efficiency {a:g} is too low",
            {"p_A_given_H": best.p_A_given_H / targets.p_A_given_H - 1},
        )

    e = [darks[0], e_a0, darks[2]]
    mu = mu0
    residuals = {}
    for it in range(1, max_iter + 1):
        # pair number from the herald rate
        mu += damping * (mu_for_herald(e[0]) - mu)
        # A background from CAR
        e[1] += damping * (max(darks[1], e_a_for_car(mu)) - e[1])
        # herald background from p_A|H, by a secant step on the monotone map
        _, pred = predict(mu, e)
        h = max(1e-9 * p_h_t, 1e-3 * (e[0] - darks[0]) or 1e-6 * p_h_t)
        e_probe = list(e)
        e_probe[0] = e[0] + h
        _, pred_probe = predict(mu_for_herald(e_probe[0]), e_probe)
        slope = (pred_probe.p_A_given_H - pred.p_A_given_H) / h
        if slope < 0:
            step = (targets.p_A_given_H - pred.p_A_given_H) / slope
            e[0] = min(max(darks[0], e[0] + damping * step), p_h_t * (1 - 1e-12))
        # B background from p_B|H, exact given the herald-conditioned weights
        op = operating_point(pump, _source_from(template, p_peak, mu, e, darks), chain)
        ph_n = click_probability(op.pmf.support, op.chain.herald)
        w = op.pmf.probabilities * ph_n
        w = w / w.sum()
        e_b = 1 - (1 - targets.p_B_given_H) / float(np.dot(w, (1 - b) ** op.pmf.support))
        e[2] += damping * (max(darks[2], e_b) - e[2])

        src, pred = predict(mu, e)
        residuals = _residuals(pred, targets)
        if max(abs(v) for v in residuals.values()) < rtol:
            break
    else:
        raise CalibrationError(f"calibration did not converge in {max_iter} iterations", residuals)

    flags = ["efficiencies are held fixed; efficiency and background trade off and are not separately identifiable"]
    if math.isinf(targets.car):
        flags.append("car=inf pins the idler_a pump-driven background to zero")
    if e[2] <= darks[2] and residuals.get("p_B_given_H", 0) > rtol:
        flags.append("idler_b background clipped at zero; p_B|H target lies below the background-free model")
    flags.extend(_weak_directions(template, pump, chain, p_peak, mu, e, darks, targets))
    return CalibrationResult(src, chain, pred, residuals, it, flags)


def _weak_directions(template, pump, chain, p_peak, mu, e, darks, targets, threshold=1e-8):
    """Flag parameter combinations the four targets barely constrain."""
    names = ["pair_coeff_k", "herald_bg", "idlerA_bg", "idlerB_bg"]
    x0 = np.array([mu, *e])

    def f(x):
        src = _source_from(template, p_peak, x[0], x[1:], darks)
        pred = analytic_prediction(src, chain, pump)
        out = [pred.herald_rate_hz, pred.p_A_given_H, pred.p_B_given_H]
        if math.isfinite(targets.car):
            out.append(pred.car)
        return np.log(np.array(out))

    scales = np.maximum(np.abs(x0), 1e-9)
    base = f(x0)
    jac = np.empty((len(base), len(x0)))
    for j in range(len(x0)):
        step = np.zeros_like(x0)
        step[j] = 1e-6 * scales[j]
        jac[:, j] = (f(x0 + step) - base) / 1e-6
    _, sv, vt = np.linalg.svd(jac)
    flags = []
    if len(sv) < len(x0) or sv[-1] < threshold * sv[0]:
        v = vt[-1]
        combo = " + ".join(f"{c:+.2f}*{n}" for c, n in zip(v, names) if abs(c) > 0.05)
        flags.append(f"weakly constrained direction (relative log-scale): {combo}")
    return flags
