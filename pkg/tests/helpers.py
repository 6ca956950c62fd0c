"""Small builders shared by the test modules."""

from pairsource.photon_statistics import PumpConfig, SourceModel


def source_for_mu(mu, pump=PumpConfig(), **kw):
    p = pump.avg_power_W / (pump.rep_rate_hz * pump.pulse_duration_s)
    return SourceModel(pair_coeff_k=mu / p**2, **kw)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = []
