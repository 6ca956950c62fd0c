"""Simulation and analysis of a heralded photon-pair source pumped in a fiber."""

from .analysis import (
    AnalyticPrediction,
    CalibrationTargets,
    CoincidenceReport,
    G2Estimate,
    analytic_prediction,
    brute_force_oracle,
    calibrate_model,
    estimate_car,
    estimate_g2,
    fit_power_law,
)
from .detection_chain import ChainConfig, DetectorModel, click_probability, splitter_joint_clicks
from .montecarlo import SimRun, simulate, simulate_heralded, simulate_pulse_train
from .phasematch import DispersionModel, WavelengthTriple, idler_from_energy_conservation, phase_mismatch, solve_sidebands
from .photon_statistics import PumpConfig, SourceModel, herald_conditioned_pmf, pair_pmf, peak_power, thin

__version__ = "0.1.0"
