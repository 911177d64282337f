import numpy as np
import pytest

from nanotip import smm
from nanotip.constants import PI
from nanotip.field import EnvelopeKind, PulseParams, make_pulse

# reference parameter sets used across the suite
SMM_PARAMS = PulseParams(wavelength=800e-9, fwhm_duration=6.3e-15,
                         peak_field=10.4e9, ce_phase=0.0)
TDSE_PARAMS = PulseParams(wavelength=800e-9, fwhm_duration=5.5e-15,
                          peak_field=9.9e9, ce_phase=0.0,
                          envelope_kind=EnvelopeKind.GAUSSIAN)
WORK_FUNCTION = 5.2


@pytest.fixture(scope="session")
def smm_pulse():
    return make_pulse(SMM_PARAMS)


@pytest.fixture(scope="session")
def smm_cfg():
    return smm.SmmConfig()


@pytest.fixture(scope="session")
def smm_ensemble(smm_pulse, smm_cfg):
    return smm.trajectory_ensemble(smm_pulse, smm_cfg)


@pytest.fixture(scope="session")
def phase_grid_16():
    return -PI + PI / 8 * np.arange(16)


@pytest.fixture(scope="session")
def smm_map(smm_cfg, phase_grid_16):
    return smm.phase_scan(SMM_PARAMS, phase_grid_16, smm_cfg)
