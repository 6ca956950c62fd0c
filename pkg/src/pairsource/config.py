"""Sectioned key=value run configuration with strict validation.

Files are INI-style (``configparser``) with ``#`` comments::

    [pump]
    avg_power_W = 0.0125

Unknown sections or keys are errors. Missing keys fall back to the dataclass
defaults. Every value passes through the owning module's invariants at load.
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .detection_chain import ChainConfig, DetectorModel
from .errors import ConfigError, DomainError
from .montecarlo import DEFAULT_BLOCK, MODES, SimRun
from .phasematch import DispersionModel
from .photon_statistics import PumpConfig, SourceModel

CONFIG_DIR_ENV = "PAIRSOURCE_CONFIG_DIR"
PROFILE_DIR = Path(__file__).parent / "profiles"


@dataclass(frozen=True)
class RunSettings:
    mode: str = "heralded_only"
    n_pulses: int | None = None
    n_heralds: int | None = 10_000_000
    seed: int = 1
    offset_n: int = 0
    g2_offsets: tuple = (1, 2, 3, 6)
    car_delays: tuple = (1, 2, 3)
    block_size: int = DEFAULT_BLOCK
    threads: int = 1
    events_out: str = "events.csv"
    report_out: str = "report.json"

    def __post_init__(self):
        if self.mode not in MODES:
            raise DomainError(f"run.mode must be one of {MODES}")


@dataclass(frozen=True)
class RunConfig:
    pump: PumpConfig
    source: SourceModel
    chain: ChainConfig
    dispersion: DispersionModel | None
    run: RunSettings

    def hash(self) -> str:
        # outputs, seed and thread count do not change the physics or the sampler
        run = replace(self.run, seed=0, threads=1, events_out="", report_out="")
        text = dump_config(replace(self, run=run))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def sim_run(self, seed=None) -> SimRun:
        r = self.run
        return SimRun(
            self.pump,
            self.source,
            self.chain,
            seed=r.seed if seed is None else seed,
            mode=r.mode,
            n_pulses=r.n_pulses if r.mode == "full_train" else None,
            n_heralds=r.n_heralds if r.mode == "heralded_only" else None,
            offset_n=r.offset_n,
            g2_offsets=tuple(r.g2_offsets),
            car_delays=tuple(r.car_delays),
            block_size=r.block_size,
            threads=r.threads,
            config_hash=self.hash(),
        )


# ------------------------------------------------------------ value codecs


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text):
    f = float(text)
    if not f.is_integer():
        raise ValueError(f"not an integer: {text!r}")
    return int(text) if text.strip().lstrip("-").isdigit() else int(f)


def _optional(conv):
    def parse(text):
        return None if text.strip().lower() in ("none", "") else conv(text)

    return parse


def _float_list(text):
    return tuple(float(v) for v in text.split(",") if v.strip())


def _int_list(text):
    return tuple(_int(v) for v in text.split(",") if v.strip())


_CODECS = {
    "pump": (PumpConfig, {f: float for f in ("wavelength_nm", "pulse_duration_s", "rep_rate_hz", "avg_power_W", "power_jitter")}),
    "source": (
        SourceModel,
        {
            "pair_coeff_k": float,
            "distribution_kind": str.strip,
            "herald_bg_per_gate": float,
            "idlerA_bg_per_gate": float,
            "idlerB_bg_per_gate": float,
            "bg_power_exponent": float,
            "bg_reference_peak_power_W": float,
            "tail_bound": float,
        },
    ),
    "detector": (DetectorModel, {"efficiency": float, "bg_per_gate": float, "dead_time_pulses": _int, "gated": _bool}),
    "dispersion": (
        DispersionModel,
        {
            "reference_wavelength_nm": float,
            "beta_coeffs": _float_list,
            "gamma": float,
            "zdw_nm": _optional(float),
            "valid_range_nm": _float_list,
        },
    ),
    "run": (
        RunSettings,
        {
            "mode": str.strip,
            "n_pulses": _optional(_int),
            "n_heralds": _optional(_int),
            "seed": _int,
            "offset_n": _int,
            "g2_offsets": _int_list,
            "car_delays": _int_list,
            "block_size": _int,
            "threads": _int,
            "events_out": str.strip,
            "report_out": str.strip,
        },
    ),
}
_DETECTOR_SECTIONS = {"detectors.herald": "herald", "detectors.idler_a": "idler_a", "detectors.idler_b": "idler_b"}
SECTIONS = ("pump", "source", "detectors", *_DETECTOR_SECTIONS, "dispersion", "run")


def _parse_section(section, values, codec_name):
    cls, codec = _CODECS[codec_name]
    kwargs = {}
    for key, raw in values.items():
        if key not in codec:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        try:
            kwargs[key] = codec[key](raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: {exc}") from None
    try:
        return cls(**kwargs)
    except (DomainError, TypeError) as exc:
        raise ConfigError(f"[{section}] {exc}") from None


def _format(value):
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (tuple, list)):
        return ", ".join(_format(v) for v in value)
    return str(value)


# ------------------------------------------------------------------ io


def resolve_config_path(name_or_path) -> Path:
    p = Path(name_or_path)
    if p.exists():
        return p
    candidates = []
    env = os.environ.get(CONFIG_DIR_ENV)
    for base in ([Path(env)] if env else []) + [PROFILE_DIR]:
        candidates += [base / p, base / f"{p}.cfg"]
    for c in candidates:
        if c.exists():
            return c
    raise ConfigError(f"config {str(name_or_path)!r} not found (searched {', '.join(str(c) for c in candidates)})")


def parse_config(text: str, overrides=()) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",), strict=True)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None

    for item in overrides:
        target, sep, value = item.partition("=")
        section, dot, key = target.strip().rpartition(".")
        if not sep or not dot or not key:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        if section not in SECTIONS:
            raise ConfigError(f"override {item!r}: unknown section [{section}]")
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section, key, value.strip())

    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")

    def values(section):
        return dict(parser.items(section)) if parser.has_section(section) else {}

    pump = _parse_section("pump", values("pump"), "pump")
    source = _parse_section("source", values("source"), "source")
    dets = {attr: _parse_section(sec, values(sec), "detector") for sec, attr in _DETECTOR_SECTIONS.items() if parser.has_section(sec)}
    missing = set(_DETECTOR_SECTIONS.values()) - set(dets)
    if missing:
        raise ConfigError(f"missing detector sections: {', '.join(sorted('detectors.' + m for m in missing))}")
    chain_vals = values("detectors")
    unknown = set(chain_vals) - {"splitter_ratio"}
    if unknown:
        raise ConfigError(f"[detectors] unknown key(s) {sorted(unknown)}")
    try:
        ratio = float(chain_vals.get("splitter_ratio", 0.5))
        chain = ChainConfig(splitter_ratio=ratio, **dets)
    except (ValueError, DomainError) as exc:
        raise ConfigError(f"[detectors] {exc}") from None
    dispersion = _parse_section("dispersion", values("dispersion"), "dispersion") if parser.has_section("dispersion") else None
    run = _parse_section("run", values("run"), "run")
    cfg = RunConfig(pump, source, chain, dispersion, run)
    try:
        cfg.sim_run()
    except DomainError as exc:
        raise ConfigError(f"[run] {exc}") from None
    return cfg


def load_config(name_or_path, overrides=()) -> RunConfig:
    path = resolve_config_path(name_or_path)
    return parse_config(path.read_text(encoding="utf-8"), overrides)


def dump_config(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config(dump_config(c)) == c``."""
    lines = []

    def section(name, obj):
        lines.append(f"[{name}]")
        for f in fields(obj):
            lines.append(f"{f.name} = {_format(getattr(obj, f.name))}")
        lines.append("")

    section("pump", cfg.pump)
    section("source", cfg.source)
    lines += ["[detectors]", f"splitter_ratio = {_format(cfg.chain.splitter_ratio)}", ""]
    section("detectors.herald", cfg.chain.herald)
    section("detectors.idler_a", cfg.chain.idler_a)
    section("detectors.idler_b", cfg.chain.idler_b)
    if cfg.dispersion is not None:
        section("dispersion", cfg.dispersion)
    section("run", cfg.run)
    return "\n".join(lines)
