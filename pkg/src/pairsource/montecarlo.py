"""Pulse-train Monte Carlo producing TDC-style event streams.

Two engines share one counting path:

* ``full_train`` walks every pump pulse. Only slots that hold at least one
  pair or a background click are materialized, so the cost scales with the
  number of events rather than pulses. Each photon is followed individually
  (herald detection by binomial draw, idler routing A / B / lost by
  chained binomial draws), which keeps this engine independent of the closed-form
  click formulas used by the analytic model.
* ``heralded_only`` samples heralded pulses directly from the
  herald-conditioned pair distribution and draws joint idler clicks from the
  splitter's click table. Dead time is not modelled in this mode.

Randomness: pulses (or heralds) are cut into fixed-size blocks. Block ``i``
draws from ``PCG64(SeedSequence(seed, spawn_key=(engine, i)))``, so results
depend on (seed, block_size) but not on the thread count or scheduling.
"""

from __future__ import annotations

import hashlib
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .analysis import CoincidenceReport, OffsetCounts, count_stream
from .detection_chain import ChainConfig, accept_clicks, apply_dead_time, splitter_joint_clicks
from .errors import DomainError
from .events import EventStream
from .model import operating_point
from .photon_statistics import PumpConfig, SourceModel, herald_conditioned_pmf

RNG_ALGORITHM = "numpy-pcg64-seedsequence-block-v1"
MODES = ("full_train", "heralded_only")
_ENGINE_KEY = {"full_train": 0, "heralded_only": 1}
DEFAULT_BLOCK = 1 << 24


@dataclass(frozen=True)
class SimRun:
    pump: PumpConfig
    source: SourceModel
    chain: ChainConfig
    seed: int = 1
    mode: str = "full_train"
    n_pulses: int | None = None
    n_heralds: int | None = None
    # D_B is gated on the herald this many heralds after the one gating D_A
    offset_n: int = 0
    g2_offsets: tuple = ()
    # extra D_A activations this many pulse slots after each herald (CAR scan)
    car_delays: tuple = (1, 2, 3)
    block_size: int = DEFAULT_BLOCK
    threads: int = 1
    config_hash: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")
        if self.mode == "full_train" and (self.n_pulses is None or self.n_heralds is not None):
            raise DomainError("full_train runs need n_pulses and no n_heralds")
        if self.mode == "heralded_only" and (self.n_heralds is None or self.n_pulses is not None):
            raise DomainError("heralded_only runs need n_heralds and no n_pulses")
        count = self.n_pulses if self.mode == "full_train" else self.n_heralds
        if count < 0:
            raise DomainError("sample count must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be a 64-bit unsigned integer")
        if self.offset_n < 0 or any(o < 0 for o in self.g2_offsets):
            raise DomainError("herald offsets must be >= 0")
        if any(d <= 0 for d in self.car_delays):
            raise DomainError("car_delays must be positive pulse counts")
        if self.block_size <= 0 or self.threads <= 0:
            raise DomainError("block_size and threads must be positive")

    @property
    def offsets(self):
        return tuple(sorted({0, self.offset_n, *self.g2_offsets}))

    def hash(self):
        if self.config_hash:
            return self.config_hash
        text = repr((self.pump, self.source, self.chain, self.mode, self.block_size, self.car_delays))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _block_rng(seed, engine, block):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_ENGINE_KEY[engine], block))))


def _blocks(total, size):
    return [(i, i * size, min(size, total - i * size)) for i in range(math.ceil(total / size))]


def _map_blocks(fn, blocks, threads):
    if threads == 1 or len(blocks) <= 1:
        return [fn(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, blocks))


def _sparse_positions(rng, length, p):
    """Positions of successes in ``length`` Bernoulli(p) trials, sorted."""
    if p <= 0 or length == 0:
        return np.zeros(0, dtype=np.int64)
    k = int(rng.binomial(length, min(p, 1.0)))
    return np.sort(rng.choice(length, size=k, replace=False)).astype(np.int64)


def _sample_from(probabilities, u, offset=0):
    cdf = np.cumsum(probabilities)
    cdf /= cdf[-1]
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(cdf) - 1) + offset


def _train_block(run: SimRun, block):
    index, start, length = block
    rng = _block_rng(run.seed, "full_train", index)
    scale = 1.0
    if run.pump.power_jitter > 0:
        scale = max(0.0, 1.0 + run.pump.power_jitter * rng.standard_normal())
    op = operating_point(run.pump, run.source, run.chain, scale)
    p = op.pmf.probabilities
    ch = op.chain

    pair_slots = _sparse_positions(rng, length, math.fsum(p[1:]))
    k = len(pair_slots)
    if k:
        n = _sample_from(p[1:], rng.random(k), offset=1)
        herald_photon = rng.binomial(n, ch.herald.efficiency) > 0
        a, b = ch.idler_a.efficiency, ch.idler_b.efficiency
        # multinomial A / B / lost routing, drawn as two chained binomials
        to_a = rng.binomial(n, a)
        to_b = rng.binomial(n - to_a, min(1.0, b / (1.0 - a)) if a < 1 else 0.0)
        photon_a = to_a > 0
        photon_b = to_b > 0
    else:
        herald_photon = photon_a = photon_b = np.zeros(0, dtype=bool)

    bg_h = _sparse_positions(rng, length, ch.herald.bg_per_gate)
    bg_a = _sparse_positions(rng, length, ch.idler_a.bg_per_gate)
    bg_b = _sparse_positions(rng, length, ch.idler_b.bg_per_gate)
    return (
        np.union1d(pair_slots[herald_photon], bg_h) + start,
        np.union1d(pair_slots[photon_a], bg_a) + start,
        np.union1d(pair_slots[photon_b], bg_b) + start,
    )


def _contains(sorted_values, queries):
    idx = np.searchsorted(sorted_values, queries)
    idx = np.minimum(idx, max(len(sorted_values) - 1, 0))
    if len(sorted_values) == 0:
        return np.zeros(len(queries), dtype=bool)
    return sorted_values[idx] == queries


def simulate_pulse_train(run: SimRun):
    """Simulate every pulse of the train; return ``(EventStream, CoincidenceReport)``.

    The herald detector runs free; D_A is gated on each herald pulse and
    ``car_delays`` slots after it, D_B on each herald pulse. A herald is kept
    only if its own A and B gates were armed (the TDC ignores events that hit
    a detector's dead time). The stream records the kept heralds and every
    click in their gates. With dead time, delayed gates right after an A click
    are blocked, so the raw accidental counts come out low.
    """
    if run.mode != "full_train":
        raise DomainError("simulate_pulse_train needs mode='full_train'")
    total = run.n_pulses
    parts = _map_blocks(lambda blk: _train_block(run, blk), _blocks(total, run.block_size), run.threads)
    cat = lambda i: np.concatenate([p[i] for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    latent_h, latent_a, latent_b = cat(0), cat(1), cat(2)

    heralds = accept_clicks(latent_h, run.chain.herald.dead_time_pulses)
    delays = np.array(sorted({0, *run.car_delays}), dtype=np.int64)

    gates_a = np.unique((heralds[:, None] + delays[None, :]).ravel())
    gates_a = gates_a[gates_a < total]
    armed_a, click_a = apply_dead_time(gates_a, _contains(latent_a, gates_a), run.chain.idler_a)
    armed_b, click_b = apply_dead_time(heralds, _contains(latent_b, heralds), run.chain.idler_b)

    # discard rule: the herald's own A and B gates must both be armed. A
    # blocked delayed gate only loses that accidental sample, since whether
    # it is blocked depends on this pulse's own A click.
    keep = armed_b & armed_a[np.searchsorted(gates_a, heralds)]
    kept = heralds[keep]

    owned_a = np.unique((kept[:, None] + delays[None, :]).ravel())
    rec_a = np.intersect1d(owned_a, gates_a[click_a], assume_unique=True)
    rec_b = kept[click_b[keep]]
    slots = np.union1d(np.union1d(kept, rec_a), rec_b)

    meta = {
        "config_hash": run.hash(),
        "seed": run.seed,
        "rng": RNG_ALGORITHM,
        "mode": run.mode,
        "n_pulses": total,
        "block_size": run.block_size,
        "car_delays": list(run.car_delays),
        "offset_n": run.offset_n,
    }
    stream = EventStream(
        slots,
        _contains(kept, slots),
        _contains(rec_a, slots),
        _contains(rec_b, slots),
        np.full(len(slots), run.offset_n, dtype=np.int32),
        meta,
    )
    report = count_stream(stream, offsets=run.offsets, delays=run.car_delays, n_pulses=total)
    report.metadata.update(mode=run.mode, n_pulses_simulated=total)
    return stream, report


@dataclass
class _HeraldTables:
    cond: np.ndarray
    p_a: np.ndarray
    p_ab: np.ndarray
    p_any: np.ndarray
    threshold: float
    p_a_unconditional: float = field(default=0.0)


def _herald_tables(run: SimRun):
    op = operating_point(run.pump, run.source, run.chain)
    hp = herald_conditioned_pmf(op.pmf, op.chain.herald.efficiency, op.chain.herald.bg_per_gate)
    n = hp.support
    p_a, p_b, p_ab = (np.atleast_1d(x) for x in splitter_joint_clicks(n, op.chain))
    p_any = p_a + p_b - p_ab
    support = hp.probabilities > 0
    threshold = float(min(1.0, p_any[support].max()))
    p_a_u = float(np.dot(op.pmf.probabilities, p_a))
    return _HeraldTables(hp.probabilities, p_a, p_ab, p_any, threshold, p_a_u)


def _heralded_block(run, tables, block):
    index, start, length = block
    rng = _block_rng(run.seed, "heralded_only", index)
    # only heralds whose click uniform falls below the largest any-click
    # probability can click at all; sample those positions sparsely
    cand = _sparse_positions(rng, length, tables.threshold)
    u = rng.random(len(cand)) * tables.threshold
    n = _sample_from(tables.cond, rng.random(len(cand)))
    a = u < tables.p_a[n]
    b = (u < tables.p_ab[n]) | ((u >= tables.p_a[n]) & (u < tables.p_any[n]))
    delayed = [int(rng.binomial(length, tables.p_a_unconditional)) for _ in run.car_delays]
    return cand[a] + start, cand[b] + start, delayed


def simulate_heralded(run: SimRun) -> CoincidenceReport:
    """Sample ``n_heralds`` heralded pulses directly; return the counts.

    Delayed D_A gates land on pulses unrelated to the herald, so their click
    counts are drawn from the unconditional single-pulse A click probability.
    """
    if run.mode != "heralded_only":
        raise DomainError("simulate_heralded needs mode='heralded_only'")
    tables = _herald_tables(run)
    total = run.n_heralds
    parts = _map_blocks(lambda blk: _heralded_block(run, tables, blk), _blocks(total, run.block_size), run.threads)
    a_idx = np.concatenate([p[0] for p in parts]) if parts else np.zeros(0, dtype=np.int64)
    b_idx = np.concatenate([p[1] for p in parts]) if parts else np.zeros(0, dtype=np.int64)

    counts = {}
    for off in run.offsets:
        if off >= total:
            counts[off] = OffsetCounts(0, 0, 0, 0)
            continue
        a_part = a_idx[a_idx < total - off]
        counts[off] = OffsetCounts(
            total - off,
            len(a_part),
            int((b_idx >= off).sum()),
            len(np.intersect1d(a_part + off, b_idx, assume_unique=True)),
        )
    base = counts[0]
    hist = {0: base.n_A}
    for j, m in enumerate(run.car_delays):
        hist[int(m)] = sum(p[2][j] for p in parts)
    meta = {"config_hash": run.hash(), "seed": run.seed, "rng": RNG_ALGORITHM, "mode": run.mode}
    return CoincidenceReport(None, base.n_heralds, base.n_A, base.n_B, base.n_AB, counts, hist, meta)


def simulate(run: SimRun):
    """Dispatch on ``run.mode``; returns ``(stream_or_None, report)``."""
    if run.mode == "full_train":
        return simulate_pulse_train(run)
    return None, simulate_heralded(run)
