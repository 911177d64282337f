"""Few-cycle laser field: envelope, carrier, vector potential, strong-field parameters.

Sign convention: the scalar field E(t) is positive when it points out of the
metal into vacuum, so the force on an electron is F = -|e| E(t) (into the
metal for positive fields).  The carrier is referenced to the envelope
maximum: E(t) = f(t) cos(w (t - t_center) + ce_phase), which makes
ce_phase = 0 an exactly cosine-like pulse for any (non-integer) cycle count.
All pulses are centered at t = 0.

The vector potential uses the gauge A(t_start) = 0 and is evaluated by
cumulative Simpson quadrature on a dense uniform grid (configurable points
per optical cycle) with cubic-spline interpolation between nodes.  Running
integrals of A and A^2 are tabulated the same way; the trajectory model
consumes them directly.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .constants import C_LIGHT, E_CHARGE, EV, M_E, PI

# FWHM of sin^4 in units of its half-period: n = omega tau / SINE_SQ_FWHM_FACTOR
SINE_SQ_FWHM_FACTOR = 4.0 * math.acos(2.0 ** -0.25)


class EnvelopeKind(enum.Enum):
    SINE_SQUARE = "SineSquare"
    GAUSSIAN = "Gaussian"


def _canonical_phase(phase: float) -> float:
    """Map an angle to (-pi, pi], with -pi mapping to +pi."""
    out = phase - 2.0 * PI * math.floor((phase + PI) / (2.0 * PI))
    if out <= -PI:
        out = PI
    return out


@dataclass(frozen=True)
class PulseParams:
    """User-facing pulse definition (SI units).

    wavelength : central wavelength (m)
    fwhm_duration : FWHM of the intensity envelope (s)
    peak_field : peak electric field (V/m); field enhancement is folded in here
    ce_phase : carrier-envelope phase (rad), stored canonically in (-pi, pi]
    envelope_kind : SINE_SQUARE or GAUSSIAN
    """

    wavelength: float
    fwhm_duration: float
    peak_field: float
    ce_phase: float = 0.0
    envelope_kind: EnvelopeKind = EnvelopeKind.SINE_SQUARE

    def __post_init__(self):
        if not self.wavelength > 0:
            raise ValueError(f"wavelength must be > 0, got {self.wavelength}")
        if not self.fwhm_duration > 0:
            raise ValueError(f"fwhm_duration must be > 0, got {self.fwhm_duration}")
        if self.peak_field < 0:
            raise ValueError(f"peak_field must be >= 0, got {self.peak_field}")
        if not isinstance(self.envelope_kind, EnvelopeKind):
            object.__setattr__(self, "envelope_kind", EnvelopeKind(self.envelope_kind))
        object.__setattr__(self, "ce_phase", _canonical_phase(float(self.ce_phase)))

    def replace(self, **kwargs) -> "PulseParams":
        from dataclasses import replace as _replace
        return _replace(self, **kwargs)


@dataclass(frozen=True)
class FieldSample:
    """Electric field (V/m) and vector potential (V s/m) at one instant."""

    e_field: float
    vector_potential: float


class Pulse:
    """A realized pulse: envelope support, carrier frequency, tabulated A(t).

    Immutable after construction; all evaluation methods are pure and accept
    scalars or arrays.
    """

    def __init__(self, params: PulseParams, samples_per_cycle: int = 8192,
                 gaussian_support: float = 4.0, tail_cycles: float = 1.5):
        self.params = params
        self.carrier_frequency = 2.0 * PI * C_LIGHT / params.wavelength
        self.period = 2.0 * PI / self.carrier_frequency
        self.n_cycles = (self.carrier_frequency * params.fwhm_duration
                         / SINE_SQ_FWHM_FACTOR)
        if params.envelope_kind is EnvelopeKind.SINE_SQUARE:
            half = 0.5 * self.n_cycles * self.period
        else:
            half = gaussian_support * params.fwhm_duration
        self.t_start = -half
        self.t_end = half
        self._gaussian_support = gaussian_support

        # dense quadrature grid, extended past the envelope so trajectories
        # launched near the trailing edge still have a full flight window
        n_cycles_grid = 2.0 * half / self.period + tail_cycles
        n_nodes = int(math.ceil(n_cycles_grid * samples_per_cycle)) + 1
        t_grid = np.linspace(self.t_start, self.t_end + tail_cycles * self.period,
                             n_nodes)
        e_grid = self.efield(t_grid)
        a_grid = -cumulative_simpson(e_grid, x=t_grid, initial=0.0)
        b_grid = cumulative_simpson(a_grid, x=t_grid, initial=0.0)
        c_grid = cumulative_simpson(a_grid * a_grid, x=t_grid, initial=0.0)
        for arr in (t_grid, e_grid, a_grid, b_grid, c_grid):
            arr.flags.writeable = False
        self.t_grid = t_grid
        self.e_grid = e_grid
        self.a_grid = a_grid
        self._a_spline = CubicSpline(t_grid, a_grid)
        self._b_spline = CubicSpline(t_grid, b_grid)
        self._c_spline = CubicSpline(t_grid, c_grid)

    # -- field evaluation -------------------------------------------------

    def envelope(self, t):
        """Envelope f(t) >= 0 (V/m); exactly zero outside the support."""
        p = self.params
        t = np.asarray(t, dtype=float)
        if p.envelope_kind is EnvelopeKind.SINE_SQUARE:
            # exclusive bounds: the edge value is exactly 0, not cos^2(pi/2)
            inside = (t > self.t_start) & (t < self.t_end)
            arg = PI * t / (self.n_cycles * self.period)
            out = np.where(inside, p.peak_field * np.cos(arg) ** 2, 0.0)
        else:
            inside = np.abs(t) <= self._gaussian_support * p.fwhm_duration
            out = np.where(
                inside,
                p.peak_field * np.exp(-2.0 * np.log(2.0) * t ** 2
                                      / p.fwhm_duration ** 2),
                0.0,
            )
        return out if out.ndim else float(out)

    def efield(self, t):
        """E(t) = f(t) cos(w t + ce_phase) (V/m)."""
        t = np.asarray(t, dtype=float)
        out = self.envelope(t) * np.cos(self.carrier_frequency * t
                                        + self.params.ce_phase)
        return out if out.ndim else float(out)

    def vector_potential(self, t):
        """A(t) = -int_{t_start}^{t} E dt' (V s/m), constant outside the grid."""
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, self.t_grid[0], self.t_grid[-1])
        out = self._a_spline(tc)
        return out if out.ndim else float(out)

    def a_running_integral(self, t):
        """B(t) = int_{t_start}^{t} A dt' (V s^2/m); linear continuation outside."""
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, self.t_grid[0], self.t_grid[-1])
        out = self._b_spline(tc)
        out = out + (t - tc) * self._a_spline(tc)
        return out if out.ndim else float(out)

    def a_squared_running_integral(self, t):
        """C(t) = int_{t_start}^{t} A^2 dt' (V^2 s^3/m^2)."""
        t = np.asarray(t, dtype=float)
        tc = np.clip(t, self.t_grid[0], self.t_grid[-1])
        a_end = self._a_spline(tc)
        out = self._c_spline(tc) + (t - tc) * a_end ** 2
        return out if out.ndim else float(out)


def make_pulse(params: PulseParams, samples_per_cycle: int = 8192,
               gaussian_support: float = 4.0) -> Pulse:
    """Construct a Pulse; rejects degenerate parameters.

    samples_per_cycle sets the vector-potential quadrature density (>= 4096
    keeps -dA/dt = E below 1e-8 relative).
    """
    if samples_per_cycle < 4096:
        raise ValueError("samples_per_cycle must be >= 4096")
    pulse = Pulse(params, samples_per_cycle=samples_per_cycle,
                  gaussian_support=gaussian_support)
    if pulse.n_cycles <= 0.5:
        raise ValueError(
            f"pulse too short: {pulse.n_cycles:.3g} carrier cycles in envelope")
    return pulse


def field_at(pulse: Pulse, t):
    """Sample the field and vector potential at time t (scalar or array)."""
    return FieldSample(pulse.efield(t), pulse.vector_potential(t))


def ponderomotive_energy(params: PulseParams) -> float:
    """Cycle-averaged quiver energy Up = e^2 E0^2 / (4 m w^2), in eV."""
    omega = 2.0 * PI * C_LIGHT / params.wavelength
    up = (E_CHARGE * params.peak_field) ** 2 / (4.0 * M_E * omega ** 2)
    return up / EV


def keldysh_parameter(params: PulseParams, work_function_ev: float) -> float:
    """Adiabaticity parameter gamma = w sqrt(2 m phi) / (|e| E0), dimensionless."""
    if not work_function_ev > 0:
        raise ValueError("work_function must be > 0")
    if not params.peak_field > 0:
        raise ValueError("keldysh_parameter undefined for zero peak field")
    omega = 2.0 * PI * C_LIGHT / params.wavelength
    return (omega * math.sqrt(2.0 * M_E * work_function_ev * EV)
            / (E_CHARGE * params.peak_field))
