"""Pair-number statistics for a pulsed photon-pair source.

Everything here is a pure function of immutable values. Probabilities are held
as truncated numpy arrays ``p[0..nmax]``; the truncation point is the smallest
``nmax`` whose neglected tail mass is below ``tail_bound``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .errors import DomainError, HeraldNeverFires

DEFAULT_TAIL_BOUND = 1e-12
MAX_NMAX = 1_000_000
DISTRIBUTIONS = ("poisson", "thermal")


@dataclass(frozen=True)
class PumpConfig:
    wavelength_nm: float = 1064.0
    pulse_duration_s: float = 300e-12
    rep_rate_hz: float = 100e6
    avg_power_W: float = 12.5e-3
    # relative std of a slow (per simulation block) power drift; 0 disables it
    power_jitter: float = 0.0

    def __post_init__(self):
        if self.wavelength_nm <= 0 or self.pulse_duration_s <= 0 or self.rep_rate_hz <= 0:
            raise DomainError("pump wavelength, pulse duration and repetition rate must be positive")
        if self.avg_power_W < 0:
            raise DomainError("average pump power must be non-negative")
        if self.pulse_duration_s * self.rep_rate_hz >= 1:
            raise DomainError("pulse duration x repetition rate must be below 1")
        if self.power_jitter < 0:
            raise DomainError("power_jitter must be non-negative")


@dataclass(frozen=True)
class SourceModel:
    """Pair generation ``mu = k * P_peak**2`` plus pump-driven background clicks.

    The three background probabilities are per pulse slot at the reference
    peak power and scale as ``(P / P_ref) ** bg_power_exponent``.
    """

    pair_coeff_k: float = 0.02534
    distribution_kind: str = "poisson"
    herald_bg_per_gate: float = 0.0
    idlerA_bg_per_gate: float = 0.0
    idlerB_bg_per_gate: float = 0.0
    bg_power_exponent: float = 1.0
    bg_reference_peak_power_W: float = 12.5e-3 / (100e6 * 300e-12)
    tail_bound: float = DEFAULT_TAIL_BOUND

    def __post_init__(self):
        if self.pair_coeff_k < 0:
            raise DomainError("pair_coeff_k must be >= 0")
        if self.distribution_kind not in DISTRIBUTIONS:
            raise DomainError(f"distribution_kind must be one of {DISTRIBUTIONS}")
        for name in ("herald_bg_per_gate", "idlerA_bg_per_gate", "idlerB_bg_per_gate"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise DomainError(f"{name} must lie in [0, 1), got {v}")
        if self.bg_reference_peak_power_W <= 0:
            raise DomainError("bg_reference_peak_power_W must be positive")
        if not 0 < self.tail_bound <= DEFAULT_TAIL_BOUND:
            raise DomainError("tail_bound must lie in (0, 1e-12]")

    def background_at(self, peak_power_W):
        """Return ``(herald, idler_a, idler_b)`` background click probabilities."""
        if peak_power_W <= 0:
            scale = 0.0 if self.bg_power_exponent > 0 else 1.0
        else:
            scale = (peak_power_W / self.bg_reference_peak_power_W) ** self.bg_power_exponent
        return tuple(
            min(v * scale, 1.0 - 1e-15)
            for v in (self.herald_bg_per_gate, self.idlerA_bg_per_gate, self.idlerB_bg_per_gate)
        )


@dataclass(frozen=True, eq=False)
class PairNumberPMF:
    probabilities: np.ndarray
    truncation_nmax: int
    tail_bound: float
    kind: str = "poisson"

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        object.__setattr__(self, "probabilities", p)
        if p.ndim != 1 or len(p) != self.truncation_nmax + 1:
            raise DomainError("probabilities must have truncation_nmax + 1 entries")
        if np.any(p < 0):
            raise DomainError("negative probability")

    @property
    def support(self):
        return np.arange(self.truncation_nmax + 1)

    @property
    def mean(self):
        return float(np.dot(self.support, self.probabilities))

    def total(self):
        return math.fsum(self.probabilities)


@dataclass(frozen=True, eq=False)
class HeraldedPMF(PairNumberPMF):
    # per-pulse probability that the herald fires; the normalizer of the conditioning
    herald_probability: float = field(default=1.0)


def peak_power(config: PumpConfig) -> float:
    # rectangular pulse: all energy of one period delivered in pulse_duration
    return config.avg_power_W / (config.rep_rate_hz * config.pulse_duration_s)


def mean_pairs_from_power(model: SourceModel, peak_power_W: float) -> float:
    if peak_power_W < 0:
        raise DomainError("peak power must be non-negative")
    return model.pair_coeff_k * peak_power_W**2


def _poisson_nmax(mu, tail_bound):
    n = int(stats.poisson.isf(tail_bound, mu))
    if n > MAX_NMAX:
        raise DomainError(f"mean pair number {mu:g} needs nmax > {MAX_NMAX}")
    while stats.poisson.sf(n, mu) > tail_bound:
        n += 1
    while n > 0 and stats.poisson.sf(n - 1, mu) <= tail_bound:
        n -= 1
    return n


def pair_pmf(mu: float, kind: str = "poisson", tail_bound: float = DEFAULT_TAIL_BOUND) -> PairNumberPMF:
    """Truncated pair-number distribution with mean ``mu``.

    ``kind="poisson"`` is the many-mode limit; ``kind="thermal"`` is the
    single-mode (geometric) law. Truncation stops at the smallest ``nmax``
    with ``P(N > nmax) <= tail_bound``; the kept values are not renormalized.
    """
    if mu < 0 or not math.isfinite(mu):
        raise DomainError(f"mean pair number must be finite and >= 0, got {mu}")
    if kind not in DISTRIBUTIONS:
        raise DomainError(f"unknown distribution kind {kind!r}")
    if mu == 0:
        return PairNumberPMF(np.array([1.0]), 0, tail_bound, kind)
    if kind == "poisson":
        nmax = _poisson_nmax(mu, tail_bound)
        values = lambda n: stats.poisson.pmf(n, mu)
    else:
        r = mu / (1.0 + mu)
        # tail P(N > n) = r**(n+1)
        nmax = max(0, math.ceil(math.log(tail_bound) / math.log(r)) - 1)
        values = lambda n: np.exp(n * math.log(r) - math.log1p(mu))
    p = values(np.arange(nmax + 1))
    # the analytic tail can undershoot the rounding defect of the summed values
    while 1.0 - math.fsum(p) > tail_bound:
        nmax += 1
        p = np.append(p, values(nmax))
    if nmax > MAX_NMAX:
        raise DomainError(f"mean pair number {mu:g} needs nmax > {MAX_NMAX}")
    return PairNumberPMF(p, nmax, tail_bound, kind)


def herald_conditioned_pmf(pmf: PairNumberPMF, eta_H: float, bg_H: float) -> HeraldedPMF:
    """Pair-number distribution given that the herald detector clicked.

    Weighting by the threshold click probability ``1 - (1-bg)(1-eta)**n``
    favours larger ``n``; for small ``eta`` and no background this is the
    size-biased law. The returned object carries the normalizer as
    ``herald_probability``.
    """
    if not 0 <= eta_H <= 1:
        raise DomainError("eta_H must lie in [0, 1]")
    if not 0 <= bg_H <= 1:
        raise DomainError("bg_H must lie in [0, 1]")
    n = pmf.support
    click = 1.0 - (1.0 - bg_H) * (1.0 - eta_H) ** n
    weights = pmf.probabilities * click
    p_h = math.fsum(weights)
    if p_h <= 0:
        raise HeraldNeverFires("herald never fires")
    return HeraldedPMF(
        weights / p_h,
        pmf.truncation_nmax,
        min(1.0, pmf.tail_bound / p_h),
        pmf.kind,
        herald_probability=p_h,
    )


def thin(pmf: PairNumberPMF, eta: float) -> PairNumberPMF:
    """Binomial thinning: each of the ``n`` quanta survives with probability ``eta``."""
    if not 0 <= eta <= 1:
        raise DomainError("eta must lie in [0, 1]")
    n = pmf.support
    if eta == 1:
        return PairNumberPMF(pmf.probabilities.copy(), pmf.truncation_nmax, pmf.tail_bound, pmf.kind)
    if eta == 0:
        p = np.zeros_like(pmf.probabilities)
        p[0] = pmf.total()
        return PairNumberPMF(p, pmf.truncation_nmax, pmf.tail_bound, pmf.kind)
    # binomial kernel in log space; scipy's binom.pmf overflows for subnormal eta
    k, m = n[:, None], n[None, :]
    valid = k <= m
    d = np.where(valid, m - k, 0)
    log_k = special.gammaln(m + 1) - special.gammaln(k + 1) - special.gammaln(d + 1) + k * math.log(eta) + d * math.log1p(-eta)
    kernel = np.where(valid, np.exp(np.where(valid, log_k, -np.inf)), 0.0)
    return PairNumberPMF(kernel @ pmf.probabilities, pmf.truncation_nmax, pmf.tail_bound, pmf.kind)


def total_variation(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = max(len(p), len(q))
    p = np.pad(p, (0, m - len(p)))
    q = np.pad(q, (0, m - len(q)))
    return 0.5 * float(np.abs(p - q).sum())
