"""Command-line front end: simulate, analyze, sweep, phasematch, calibrate.

Exit codes: 0 success, 2 config error, 3 runtime error, 4 insufficient statistics.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .analysis import (
    CalibrationTargets,
    CoincidenceReport,
    analytic_prediction,
    calibrate_model,
    count_stream,
    estimate_car,
    estimate_g2,
)
from .config import dump_config, load_config
from .errors import CalibrationError, ConfigError, DomainError, HeraldNeverFires, InsufficientStatistics, StreamFormatError
from .events import read_stream, write_binary, write_csv
from .montecarlo import RNG_ALGORITHM, simulate
from .phasematch import phase_mismatch, scan_mismatch, solve_sidebands
from .photon_statistics import peak_power

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_STATS = 0, 2, 3, 4
DEFAULT_CONFIG = "paper_12p5mW"

# published measurements at 12.5 mW average power
MEASURED_TARGETS = CalibrationTargets(herald_rate_hz=3.5e4, p_A_given_H=2.975e-3, p_B_given_H=3.162e-3, car=18.3)


def _int_list(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _clean(obj):
    """Make floats JSON-safe (NaN/inf become null / strings)."""
    if isinstance(obj, float):
        if math.isnan(obj):
            return None
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def _dumps(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _estimates(report, offsets):
    g2, errors = [], {}
    for off in offsets:
        try:
            g2.append(asdict(estimate_g2(report, off)))
        except InsufficientStatistics as exc:
            errors[f"g2[{off}]"] = str(exc)
    car = None
    if len(report.offset_histogram) > 1:
        try:
            car = asdict(estimate_car(report.offset_histogram))
        except InsufficientStatistics as exc:
            errors["car"] = str(exc)
    return g2, car, errors


def _meta_header(cfg_hash, seed):
    return f"# config_hash={cfg_hash}\n# seed={seed}\n"


def _write_text(path, text):
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(text)


# ------------------------------------------------------------- commands


def cmd_simulate(args):
    cfg = load_config(args.config, args.override)
    run = cfg.sim_run(seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        stream, report = simulate(run)
    except HeraldNeverFires:
        # only reachable in heralded-only mode: nothing to sample
        stream, report = None, CoincidenceReport(None, 0, 0, 0, 0, metadata={"config_hash": run.hash(), "seed": run.seed})
    if stream is not None:
        path = out / cfg.run.events_out
        if path.suffix in (".bin", ".evb"):
            write_binary(stream, path)
        else:
            write_csv(stream, path)
    offsets = sorted(report.offset_counts)
    g2, car, errors = _estimates(report, offsets)
    try:
        analytic = analytic_prediction(cfg.source, cfg.chain, cfg.pump)
    except HeraldNeverFires:
        analytic = None
    doc = {
        "config_hash": run.hash(),
        "seed": run.seed,
        "rng": RNG_ALGORITHM,
        "report": report.to_dict(),
        "g2": g2,
        "car": car,
        "errors": errors,
        "analytic": analytic.as_dict() if analytic else None,
    }
    (out / cfg.run.report_out).write_text(_dumps(doc), encoding="ascii")

    if report.n_pulses:
        herald_rate = report.n_heralds / report.n_pulses * cfg.pump.rep_rate_hz
        rate_text = f"heralds/s={herald_rate:.4g}"
    else:
        rate_text = f"heralds/s={analytic.herald_rate_hz:.4g} (analytic)" if analytic else "heralds/s=0"
    g2_0 = next((g for g in g2 if g["offset_n"] == 0), None)
    g2_text = f"g2(0)={g2_0['value']:.4f}+-{g2_0['std_error']:.4f}" if g2_0 else "g2(0)=n/a"
    car_text = f"CAR={car['value']:.3g}" if car else "CAR=n/a"
    print(f"{rate_text} heralds={report.n_heralds} {g2_text} {car_text}")
    return EXIT_OK


def cmd_analyze(args):
    path = Path(args.stream)
    if path.stat().st_size == 0:
        raise InsufficientStatistics("insufficient statistics: empty stream file")
    stream = read_stream(path)
    if args.config:
        cfg = load_config(args.config, args.override)
        stream_hash = stream.metadata.get("config_hash")
        if stream_hash is not None and stream_hash != cfg.hash():
            print(f"warning: stream config_hash {stream_hash} differs from config {cfg.hash()}", file=sys.stderr)
    offsets = _int_list(args.offsets)
    delays = _int_list(args.delays) if args.delays is not None else None
    report = count_stream(stream, offsets=offsets, delays=delays)
    g2 = [asdict(estimate_g2(report, off)) for off in offsets]
    car = asdict(estimate_car(report.offset_histogram)) if len(report.offset_histogram) > 1 else None
    doc = {"source": str(path), "report": report.to_dict(), "g2": g2, "car": car}
    _write_text(args.out, _dumps(doc))
    return EXIT_OK


SWEEP_COLUMNS = ["avg_power_mW", "mu", "herald_rate", "coinc_rate", "g2", "g2_err", "car"]


def cmd_sweep(args):
    cfg = load_config(args.config, args.override)
    powers = _float_list(args.powers)
    if len(powers) < 2:
        raise ConfigError("sweep needs at least 2 powers")
    columns = list(SWEEP_COLUMNS)
    if not args.analytic_only:
        columns += ["herald_rate_analytic", "coinc_rate_analytic", "g2_analytic", "car_analytic"]
    buf = io.StringIO()
    buf.write(_meta_header(cfg.hash(), "analytic" if args.analytic_only else (args.seed if args.seed is not None else cfg.run.seed)))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for p_mw in powers:
        pump = replace(cfg.pump, avg_power_W=p_mw * 1e-3)
        an = analytic_prediction(cfg.source, cfg.chain, pump)
        row = {"avg_power_mW": p_mw, "mu": an.mu}
        if args.analytic_only:
            row.update(herald_rate=an.herald_rate_hz, coinc_rate=an.coincidence_rate_hz, g2=an.g2, g2_err=0.0, car=an.car)
        else:
            run = replace(cfg, pump=pump).sim_run(seed=args.seed)
            _, rep = simulate(run)
            if rep.n_pulses:
                herald_rate = rep.n_heralds / rep.n_pulses * pump.rep_rate_hz
                coinc = rep.n_A_given_H / rep.n_pulses * pump.rep_rate_hz
            else:
                # heralded-only runs do not measure the herald rate
                herald_rate = an.herald_rate_hz
                coinc = herald_rate * rep.n_A_given_H / rep.n_heralds
            try:
                g = estimate_g2(rep, 0)
                g2v, g2e = g.value, g.std_error
            except InsufficientStatistics:
                g2v = g2e = math.nan
            try:
                carv = estimate_car(rep.offset_histogram).value
            except InsufficientStatistics:
                carv = math.nan
            row.update(
                herald_rate=herald_rate, coinc_rate=coinc, g2=g2v, g2_err=g2e, car=carv,
                herald_rate_analytic=an.herald_rate_hz, coinc_rate_analytic=an.coincidence_rate_hz,
                g2_analytic=an.g2, car_analytic=an.car,
            )
        writer.writerow([repr(float(row[c])) for c in columns])
    _write_text(args.out, buf.getvalue())
    return EXIT_OK


def cmd_phasematch(args):
    cfg = load_config(args.config, args.override)
    if cfg.dispersion is None:
        raise ConfigError("config has no [dispersion] section")
    pump_nm = args.pump_nm if args.pump_nm is not None else cfg.pump.wavelength_nm
    power = args.power_W if args.power_W is not None else peak_power(cfg.pump)
    lo, hi = args.scan
    signal, idler, mismatch = scan_mismatch(cfg.dispersion, pump_nm, power, (lo, hi), args.step)
    roots = solve_sidebands(cfg.dispersion, pump_nm, power, (lo, hi), args.step)

    buf = io.StringIO()
    buf.write(_meta_header(cfg.hash(), "none"))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["signal_nm", "idler_nm", "mismatch_per_m"])
    for row in zip(signal.tolist(), idler.tolist(), mismatch.tolist()):
        writer.writerow([repr(v) for v in row])
    _write_text(args.out, buf.getvalue())

    rbuf = io.StringIO()
    rbuf.write(_meta_header(cfg.hash(), "none"))
    rw = csv.writer(rbuf, lineterminator="\n")
    rw.writerow(["signal_nm", "idler_nm", "mismatch_per_m", "energy_residual_per_nm"])
    for t in roots:
        rw.writerow([repr(t.signal_nm), repr(t.idler_nm), repr(phase_mismatch(cfg.dispersion, pump_nm, t.signal_nm, power)), repr(t.energy_residual)])
    if args.roots:
        _write_text(args.roots, rbuf.getvalue())
    summary = ", ".join(f"{t.signal_nm:.2f}/{t.idler_nm:.2f} nm" for t in roots) or "none"
    print(f"phase-matched sidebands (signal/idler) for pump {pump_nm} nm at {power:.4g} W: {summary}", file=sys.stderr)
    return EXIT_OK


def cmd_calibrate(args):
    cfg = load_config(args.config, args.override)
    targets = CalibrationTargets(args.herald_rate, args.p_a, args.p_b, args.car)
    result = calibrate_model(targets, cfg.pump, cfg.chain, cfg.source)
    new_cfg = replace(cfg, source=result.source)
    doc = {
        "targets": asdict(targets),
        "source": asdict(result.source),
        "prediction": result.prediction.as_dict(),
        "residuals": result.residuals,
        "iterations": result.iterations,
        "non_identifiable": result.non_identifiable,
        "config_hash": new_cfg.hash(),
    }
    sys.stdout.write(_dumps(doc))
    if args.out:
        Path(args.out).write_text(dump_config(new_cfg), encoding="utf-8")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser():
    ap = argparse.ArgumentParser(prog="pairsource", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, seed=True):
        p.add_argument("--config", default=DEFAULT_CONFIG, help="profile name or path (profiles also searched in $PAIRSOURCE_CONFIG_DIR)")
        p.add_argument("--override", action="append", default=[], metavar="SECTION.KEY=VALUE")
        if seed:
            p.add_argument("--seed", type=int, default=None)

    p = sub.add_parser("simulate", help="run the Monte Carlo and write events + report")
    common(p)
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="recompute counts and estimators from an event stream")
    p.add_argument("stream")
    p.add_argument("--offsets", default="0", help="comma-separated herald offsets for g2(n)")
    p.add_argument("--delays", default=None, help="D_A gate delays for CAR (default: from stream metadata)")
    p.add_argument("--config", default=None, help="optional config to cross-check the stream's hash")
    p.add_argument("--override", action="append", default=[])
    p.add_argument("--out", default=None, help="JSON output path (default stdout)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="g2, rates and CAR versus average pump power")
    common(p)
    p.add_argument("--powers", required=True, help="comma-separated average powers in mW")
    p.add_argument("--analytic-only", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("phasematch", help="scan the FWM phase mismatch and solve for sidebands")
    common(p, seed=False)
    p.add_argument("--pump-nm", type=float, default=None)
    p.add_argument("--power-W", type=float, default=None, help="peak power (default: from [pump])")
    p.add_argument("--scan", type=float, nargs=2, default=(760.0, 1064.0), metavar=("MIN_NM", "MAX_NM"))
    p.add_argument("--step", type=float, default=0.5)
    p.add_argument("--out", default=None, help="scan table CSV (default stdout)")
    p.add_argument("--roots", default=None, help="roots CSV path")
    p.set_defaults(func=cmd_phasematch)

    p = sub.add_parser("calibrate", help="fit pair coefficient and backgrounds to measured targets")
    common(p, seed=False)
    p.add_argument("--herald-rate", type=float, default=MEASURED_TARGETS.herald_rate_hz)
    p.add_argument("--p-a", type=float, default=MEASURED_TARGETS.p_A_given_H)
    p.add_argument("--p-b", type=float, default=MEASURED_TARGETS.p_B_given_H)
    p.add_argument("--car", type=float, default=MEASURED_TARGETS.car)
    p.add_argument("--out", default=None, help="write the calibrated config here")
    p.set_defaults(func=cmd_calibrate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InsufficientStatistics as exc:
        print(f"insufficient statistics: {exc}", file=sys.stderr)
        return EXIT_STATS
    except (DomainError, StreamFormatError, CalibrationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
