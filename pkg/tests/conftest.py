import pytest

from pairsource.config import load_config
from pairsource.detection_chain import ChainConfig, DetectorModel
from pairsource.phasematch import DispersionModel
from pairsource.photon_statistics import PumpConfig, SourceModel

# Sample fiber: beta2 = +5 ps^2/km at 1064 nm, zero dispersion at 1092 nm,
# beta4 found once by a coarse grid search so the 1064 nm pump phase-matches
# near 810 nm (scripts/find_dispersion_fixture.py). Not a measured fiber.
FIXTURE_BETAS = (5.0, 0.10572223926185882, -0.00019498445997580456)
FIXTURE_GAMMA = 10.0


@pytest.fixture(scope="session")
def fixture_fiber():
    return DispersionModel(1064.0, FIXTURE_BETAS, gamma=FIXTURE_GAMMA, zdw_nm=1092.0, valid_range_nm=(600.0, 2500.0))


@pytest.fixture(scope="session")
def paper_cfg():
    return load_config("paper_12p5mW")


@pytest.fixture(scope="session")
def paper_cfg_20mw():
    return load_config("paper_20mW")


@pytest.fixture
def simple_chain():
    return ChainConfig(DetectorModel(0.08), DetectorModel(2.5e-3, gated=True), DetectorModel(2.5e-3, gated=True))


@pytest.fixture
def pump():
    return PumpConfig()


def pytest_terminal_summary(terminalreporter):
    from helpers import ACCEPTANCE_LINES

    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
