"""Strong-field photoemission from a nanoscale metal tip: semiclassical and
quantum simulation of carrier-envelope-phase controlled spectra, plus the
analysis pipeline that extracts modulation depth, peak visibility, and
cut-off position."""

from ._kernels import BACKEND_NAME as kernel_backend, available_backends
from .field import (
    EnvelopeKind,
    FieldSample,
    Pulse,
    PulseParams,
    field_at,
    keldysh_parameter,
    make_pulse,
    ponderomotive_energy,
)
from .smm import SmmConfig, Trajectory, TrajectoryEnsemble
from .spectrum import Spectrum, SpectrumMap
from .tdse import PopulationTrace, PotentialGrid, TdseConfig, WaveState

__version__ = "0.1.0"

__all__ = [
    "EnvelopeKind", "FieldSample", "Pulse", "PulseParams", "field_at",
    "keldysh_parameter", "make_pulse", "ponderomotive_energy",
    "SmmConfig", "Trajectory", "TrajectoryEnsemble",
    "Spectrum", "SpectrumMap",
    "TdseConfig", "PotentialGrid", "WaveState", "PopulationTrace",
    "kernel_backend", "available_backends",
]
