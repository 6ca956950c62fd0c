"""Threshold detectors, the 50/50 HBT splitter, gating and dead time."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError

ROUTING_SLACK = 1e-12


@dataclass(frozen=True)
class DetectorModel:
    """A threshold detector with its arm losses folded into ``efficiency``.

    ``bg_per_gate`` is the dark/background click probability per activated
    gate (one pulse slot). ``dead_time_pulses`` counts pulse slots after a
    click during which gates are blocked.
    """

    efficiency: float
    bg_per_gate: float = 0.0
    dead_time_pulses: int = 0
    gated: bool = False

    def __post_init__(self):
        if not 0 <= self.efficiency <= 1:
            raise DomainError(f"efficiency must lie in [0, 1], got {self.efficiency}")
        if not 0 <= self.bg_per_gate < 1:
            raise DomainError(f"bg_per_gate must lie in [0, 1), got {self.bg_per_gate}")
        if int(self.dead_time_pulses) != self.dead_time_pulses or self.dead_time_pulses < 0:
            raise DomainError("dead_time_pulses must be a non-negative integer")

    def with_extra_background(self, extra: float) -> "DetectorModel":
        if extra == 0:
            return self
        bg = 1.0 - (1.0 - self.bg_per_gate) * (1.0 - extra)
        return replace(self, bg_per_gate=min(bg, 1.0 - 1e-15))


@dataclass(frozen=True)
class ChainConfig:
    """Herald detector plus the two HBT detectors behind the idler splitter.

    Idler efficiencies are per-photon routing-and-detection totals: a photon
    reaching the splitter is detected at A with probability
    ``idler_a.efficiency`` and at B with ``idler_b.efficiency``, never both.
    ``splitter_ratio`` records the nominal split; use :meth:`from_idler_arm`
    to derive the per-detector totals from an arm efficiency.
    """

    herald: DetectorModel
    idler_a: DetectorModel
    idler_b: DetectorModel
    splitter_ratio: float = 0.5

    def __post_init__(self):
        if not 0 <= self.splitter_ratio <= 1:
            raise DomainError("splitter_ratio must lie in [0, 1]")
        if self.idler_a.efficiency + self.idler_b.efficiency > 1 + ROUTING_SLACK:
            raise DomainError("idler_a.efficiency + idler_b.efficiency exceeds 1")

    @classmethod
    def from_idler_arm(cls, herald, arm_efficiency, splitter_ratio=0.5, bg_a=0.0, bg_b=0.0, dead_time_pulses=0):
        a = DetectorModel(arm_efficiency * splitter_ratio, bg_a, dead_time_pulses, gated=True)
        b = DetectorModel(arm_efficiency * (1 - splitter_ratio), bg_b, dead_time_pulses, gated=True)
        return cls(herald, a, b, splitter_ratio)


def _hit_probability(x, n):
    """``1 - (1 - x)**n``, exact for small ``x`` and safe at ``x = 1``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        per = np.log1p(-x) if x < 1 else -np.inf
        return np.where(n == 0, 0.0, -np.expm1(n * per))


def click_probability(n_photons, det: DetectorModel):
    n = np.asarray(n_photons)
    if np.any(n < 0):
        raise DomainError("photon number must be non-negative")
    q = 1.0 - det.bg_per_gate
    # 1 - q (1 - eta)^n = (1 - q) + q (1 - (1 - eta)^n), both terms >= 0
    p = det.bg_per_gate + q * _hit_probability(det.efficiency, n)
    return float(p) if p.ndim == 0 else p


def splitter_joint_clicks(n_photons, chain: ChainConfig):
    """Return ``(pA, pB, pAB)`` for ``n`` photons entering the HBT splitter.

    Each photon goes to A (prob ``a``), B (prob ``b``) or is lost; the two
    backgrounds are independent. This equals the inclusion-exclusion form
    ``1 - (1-dA)(1-a)^n - (1-dB)(1-b)^n + (1-dA)(1-dB)(1-a-b)^n`` but is
    summed from non-negative pieces so that rare coincidences keep full
    relative precision and one photon gives exactly zero.
    """
    a, b = chain.idler_a.efficiency, chain.idler_b.efficiency
    if a + b > 1 + ROUTING_SLACK:
        raise DomainError("routing probabilities a + b exceed 1")
    n = np.asarray(n_photons)
    if np.any(n < 0):
        raise DomainError("photon number must be non-negative")
    d_a, d_b = chain.idler_a.bg_per_gate, chain.idler_b.bg_per_gate
    hit_a = _hit_probability(a, n)
    hit_b = _hit_probability(b, n)
    miss_a, miss_b = 1.0 - hit_a, 1.0 - hit_b
    lost = max(0.0, 1.0 - a - b)
    with np.errstate(divide="ignore", invalid="ignore"):
        miss_both = np.where(n == 0, 1.0, lost**n)
        # photons reach A but none reaches B: (1-b)^n - (1-a-b)^n
        only_a = miss_b * _hit_probability(a / (1.0 - b), n) if b < 1 else np.zeros_like(hit_a)
        only_b = miss_a * _hit_probability(b / (1.0 - a), n) if a < 1 else np.zeros_like(hit_b)
        # photons reach both arms; (1-a)(1-b) = 1-a-b+ab gives the ratio below
        log_r = np.log1p(-a * b / ((1.0 - a) * (1.0 - b))) if max(a, b) < 1 and a + b < 1 else -np.inf
        both = hit_a * hit_b + miss_a * miss_b * np.expm1(np.where(n == 0, 0.0, n * log_r))
    both = np.where(n <= 1, 0.0, np.maximum(both, 0.0))

    p_a = d_a + (1.0 - d_a) * hit_a
    p_b = d_b + (1.0 - d_b) * hit_b
    p_ab = both + only_a * d_b + only_b * d_a + miss_both * d_a * d_b
    p_ab = np.minimum(p_ab, np.minimum(p_a, p_b))
    if p_a.ndim == 0:
        return float(p_a), float(p_b), float(p_ab)
    return p_a, p_b, p_ab


def accept_clicks(click_slots, dead_time_pulses: int):
    """Filter candidate clicks through a non-paralyzable dead time.

    A click at slot ``s`` blocks slots ``s+1 .. s+dead_time_pulses``; blocked
    candidates neither register nor extend the dead time.
    """
    slots = np.asarray(click_slots, dtype=np.int64)
    if len(slots) and np.any(np.diff(slots) < 0):
        raise DomainError("click slots must be in nondecreasing order")
    if dead_time_pulses == 0 or len(slots) == 0:
        # a detector registers at most one click per slot
        return np.unique(slots)
    keep = np.zeros(len(slots), dtype=bool)
    free_from = np.iinfo(np.int64).min
    for i, s in enumerate(slots.tolist()):
        if s >= free_from:
            keep[i] = True
            free_from = s + dead_time_pulses + 1
    return slots[keep]


def apply_dead_time(gate_slots, latent_clicks, det: DetectorModel):
    """Arm or block a sequence of gate requests on one detector.

    ``gate_slots`` are pulse indices in nondecreasing order and
    ``latent_clicks`` says whether each gate would click if armed. Returns
    ``(armed, clicked)`` boolean arrays; a gate is blocked iff the detector
    clicked within the previous ``dead_time_pulses`` slots.
    """
    gates = np.asarray(gate_slots, dtype=np.int64)
    latent = np.asarray(latent_clicks, dtype=bool)
    if gates.shape != latent.shape:
        raise DomainError("gate_slots and latent_clicks must have the same length")
    if len(gates) and np.any(np.diff(gates) < 0):
        raise DomainError("gate requests must be in nondecreasing pulse order")
    d = int(det.dead_time_pulses)
    if d == 0:
        return np.ones(len(gates), dtype=bool), latent.copy()
    accepted = accept_clicks(gates[latent], d)
    # last accepted click strictly before each gate
    pos = np.searchsorted(accepted, gates, side="left") - 1
    prev = np.where(pos >= 0, accepted[np.maximum(pos, 0)], np.iinfo(np.int64).min // 2)
    armed = (gates - prev) > d
    clicked = armed & latent
    return armed, clicked
