"""Resolve (pump, source, chain) into the per-pulse quantities every engine uses."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .detection_chain import ChainConfig
from .photon_statistics import (
    PairNumberPMF,
    PumpConfig,
    SourceModel,
    mean_pairs_from_power,
    pair_pmf,
    peak_power,
)


@dataclass(frozen=True)
class OperatingPoint:
    peak_power_W: float
    mu: float
    pmf: PairNumberPMF
    # detectors with pump-driven background merged into bg_per_gate
    chain: ChainConfig


def effective_chain(source: SourceModel, chain: ChainConfig, peak_power_W: float) -> ChainConfig:
    bg_h, bg_a, bg_b = source.background_at(peak_power_W)
    return replace(
        chain,
        herald=chain.herald.with_extra_background(bg_h),
        idler_a=chain.idler_a.with_extra_background(bg_a),
        idler_b=chain.idler_b.with_extra_background(bg_b),
    )


def operating_point(pump: PumpConfig, source: SourceModel, chain: ChainConfig, power_scale: float = 1.0) -> OperatingPoint:
    p = peak_power(pump) * power_scale
    mu = mean_pairs_from_power(source, p)
    return OperatingPoint(p, mu, pair_pmf(mu, source.distribution_kind, source.tail_bound), effective_chain(source, chain, p))
