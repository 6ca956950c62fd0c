"""Sideband wavelengths of degenerate-pump four-wave mixing in a fiber.

Wavelengths are in nm throughout the public API. Internally the propagation
constant is a Taylor series in angular frequency (rad/ps) about a reference
wavelength, with coefficients in ps^m/km, so ``beta`` comes out in 1/km.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, FlatMismatch, NoPhysicalIdler

C_M_PER_S = 299_792_458.0
ENERGY_TOL_PER_NM = 1e-12
ROOT_TOL_PER_M = 1e-6


def angular_frequency(wavelength_nm):
    """Angular frequency in rad/ps for a vacuum wavelength in nm."""
    return 2.0 * math.pi * (C_M_PER_S * 1e-3) / np.asarray(wavelength_nm, dtype=float)


@dataclass(frozen=True)
class WavelengthTriple:
    pump_nm: float
    signal_nm: float
    idler_nm: float

    def __post_init__(self):
        if min(self.pump_nm, self.signal_nm, self.idler_nm) <= 0:
            raise DomainError("wavelengths must be positive")
        # a few ulps of slack: near degeneracy 1/(2/p - 1/s) rounds either way
        slack = 1e-12 * self.pump_nm
        if not (self.signal_nm <= self.pump_nm + slack and self.pump_nm <= self.idler_nm + slack):
            raise DomainError("expected signal_nm <= pump_nm <= idler_nm")
        if abs(self.energy_residual) >= ENERGY_TOL_PER_NM:
            raise DomainError(f"energy not conserved (residual {self.energy_residual:g} 1/nm)")

    @property
    def energy_residual(self) -> float:
        return 2.0 / self.pump_nm - 1.0 / self.signal_nm - 1.0 / self.idler_nm


@dataclass(frozen=True)
class DispersionModel:
    """Fiber dispersion as a Taylor series about ``reference_wavelength_nm``.

    ``beta_coeffs`` holds beta2, beta3, ... in ps^2/km, ps^3/km, ...; beta0 and
    beta1 cancel in the FWM mismatch and are not stored. ``gamma`` is in
    1/(W km). ``zdw_nm``, when given, must be a zero of the group-velocity
    dispersion implied by the coefficients. ``valid_range_nm`` bounds the
    wavelengths at which the truncated series is trusted.
    """

    reference_wavelength_nm: float
    beta_coeffs: tuple
    gamma: float = 0.0
    zdw_nm: float | None = None
    valid_range_nm: tuple = (400.0, 2500.0)

    def __post_init__(self):
        object.__setattr__(self, "beta_coeffs", tuple(float(b) for b in self.beta_coeffs))
        object.__setattr__(self, "valid_range_nm", tuple(float(v) for v in self.valid_range_nm))
        if self.reference_wavelength_nm <= 0:
            raise DomainError("reference wavelength must be positive")
        lo, hi = self.valid_range_nm
        if not 0 < lo < hi:
            raise DomainError("valid_range_nm must be an increasing pair of positive wavelengths")
        if self.zdw_nm is not None:
            gvd = self.beta2_at(self.zdw_nm)
            if abs(gvd) >= 1e-6:
                raise DomainError(f"zdw_nm={self.zdw_nm} is inconsistent with beta_coeffs (beta2 = {gvd:g} ps^2/km there)")

    def beta(self, wavelength_nm):
        """Propagation constant minus its constant and linear parts, in 1/km."""
        dw = angular_frequency(wavelength_nm) - angular_frequency(self.reference_wavelength_nm)
        total = np.zeros_like(dw)
        for m, bm in enumerate(self.beta_coeffs, start=2):
            total = total + bm / math.factorial(m) * dw**m
        return total

    def beta2_at(self, wavelength_nm):
        dw = angular_frequency(wavelength_nm) - angular_frequency(self.reference_wavelength_nm)
        total = np.zeros_like(dw)
        for m, bm in enumerate(self.beta_coeffs, start=2):
            total = total + bm / math.factorial(m - 2) * dw ** (m - 2)
        return float(total) if np.ndim(total) == 0 else total

    def contains(self, wavelength_nm) -> bool:
        lo, hi = self.valid_range_nm
        w = np.asarray(wavelength_nm)
        return bool(np.all((w >= lo) & (w <= hi)))


def idler_from_energy_conservation(pump_nm, signal_nm):
    inv = 2.0 / pump_nm - 1.0 / signal_nm
    if pump_nm <= 0 or signal_nm <= 0 or inv <= 0:
        raise NoPhysicalIdler(f"no physical idler for pump {pump_nm} nm, signal {signal_nm} nm")
    if signal_nm == pump_nm:
        return float(pump_nm)
    return 1.0 / inv


def _idler_array(pump_nm, signal_nm):
    inv = 2.0 / pump_nm - 1.0 / np.asarray(signal_nm, dtype=float)
    if np.any(inv <= 0):
        raise NoPhysicalIdler("no physical idler for part of the signal range")
    return 1.0 / inv


def phase_mismatch(model: DispersionModel, pump_nm, signal_nm, peak_power_W):
    """Linear plus nonlinear phase mismatch in 1/m.

    ``beta(ws) + beta(wi) - 2 beta(wp) + 2 gamma P``; vectorized over ``signal_nm``.
    """
    idler = _idler_array(pump_nm, signal_nm)
    per_km = model.beta(signal_nm) + model.beta(idler) - 2.0 * model.beta(pump_nm) + 2.0 * model.gamma * peak_power_W
    out = per_km * 1e-3
    return float(out) if np.ndim(out) == 0 else out


def scan_grid(lo_nm, hi_nm, step_nm):
    if step_nm <= 0 or hi_nm < lo_nm:
        raise DomainError("scan needs step > 0 and hi >= lo")
    count = int(math.floor((hi_nm - lo_nm) / step_nm + 1e-9)) + 1
    return lo_nm + step_nm * np.arange(count)


def scan_mismatch(model, pump_nm, peak_power_W, scan_range_nm, scan_step_nm):
    """Tabulate ``(signal_nm, idler_nm, mismatch_per_m)`` over the signal grid."""
    lo, hi = scan_range_nm
    hi = min(hi, pump_nm)
    signal = scan_grid(lo, hi, scan_step_nm)
    if not model.contains(signal):
        raise DomainError(f"signal scan {lo}-{hi} nm leaves the model's valid range {model.valid_range_nm}")
    idler = _idler_array(pump_nm, signal)
    if not model.contains(idler):
        raise DomainError(
            f"idlers {idler.min():.1f}-{idler.max():.1f} nm leave the model's valid range {model.valid_range_nm}"
        )
    return signal, idler, phase_mismatch(model, pump_nm, signal, peak_power_W)


def _bisect(f, lo, hi, f_lo):
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if abs(f_mid) < ROOT_TOL_PER_M or mid in (lo, hi):
            return mid
        if (f_mid < 0) == (f_lo < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return mid


def solve_sidebands(model: DispersionModel, pump_nm, peak_power_W, scan_range_nm, scan_step_nm):
    """Phase-matched (signal, idler) pairs found by scanning then bisecting.

    Signals are scanned on ``[lo, min(hi, pump)]``; a root is recorded at each
    sign change of the mismatch (or exact zero on the grid) and refined until
    ``|mismatch| < 1e-6 /m``. A mismatch that vanishes on the whole grid is
    degenerate and raises :class:`FlatMismatch`.
    """
    signal, _, values = scan_mismatch(model, pump_nm, peak_power_W, scan_range_nm, scan_step_nm)
    if np.all(np.abs(values) < ROOT_TOL_PER_M):
        raise FlatMismatch("phase mismatch is flat (zero) over the whole scan; roots are not isolated")

    def f(s):
        return phase_mismatch(model, pump_nm, s, peak_power_W)

    roots = []
    for i, v in enumerate(values):
        if v == 0.0:
            roots.append(float(signal[i]))
        elif i + 1 < len(values) and values[i + 1] != 0.0 and (v < 0) != (values[i + 1] < 0):
            roots.append(_bisect(f, float(signal[i]), float(signal[i + 1]), float(v)))
    out = []
    for s in sorted(roots):
        idler = idler_from_energy_conservation(pump_nm, s)
        out.append(WavelengthTriple(float(pump_nm), s, idler))
    return out
