import numpy as np
import pytest

from gdcfit import SynthConfig, fit_gdc, fit_sdc, generate_pulse, normalize


@pytest.fixture(scope="session")
def sdc_trace():
    """Noiseless unit-rate SDC on the default grid."""
    return generate_pulse(SynthConfig(pulse_id="sdc_ref"))


@pytest.fixture(scope="session")
def sdc_pulse(sdc_trace):
    return normalize(sdc_trace)


@pytest.fixture(scope="session")
def sdc_gdc_fit(sdc_pulse):
    return fit_gdc(sdc_pulse)


@pytest.fixture(scope="session")
def sdc_sdc_fit(sdc_pulse):
    return fit_sdc(sdc_pulse)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
