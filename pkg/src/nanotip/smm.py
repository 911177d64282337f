"""Extended simple man's model: tunneling emission, classical re-collision
trajectories, quantum-orbit phases, and coherent carrier-envelope-phase
resolved spectra.

The model emits electrons at the tunnel exit z_exit = phi/(|e| |E(t0)|) with
zero velocity while the field points into the metal (E < 0), propagates them
classically in the uniform time-dependent field, keeps only those that
return to the surface within one optical cycle, reflects them elastically
off a hard wall, and sums sqrt(rate) amplitudes coherently per final-energy
bin with the quasiclassical action phase.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels
from .constants import E_CHARGE, EV, HBAR, M_E
from .errors import EmptySpectrumError, IntegrationError, PhaseScanError
from .field import Pulse, PulseParams, make_pulse
from .spectrum import Spectrum, SpectrumMap


@dataclass(frozen=True)
class SmmConfig:
    """Model parameters.

    work_function : metal work function phi (eV)
    rate_prefactor : overall scale A of the emission rate (arbitrary units)
    t0_samples_per_cycle : emission-time grid density (per optical cycle)
    max_flight_cycles : drop trajectories that stay out longer than this
    energy_bin_width : spectrum bin width (eV)
    energy_max : spectrum upper edge (eV)
    """

    work_function: float = 5.2
    rate_prefactor: float = 1.0
    t0_samples_per_cycle: int = 12288
    max_flight_cycles: float = 1.0
    energy_bin_width: float = 0.05
    energy_max: float = 25.0

    def __post_init__(self):
        if not self.work_function > 0:
            raise ValueError("work_function must be > 0")
        if self.t0_samples_per_cycle < 100:
            raise ValueError("t0_samples_per_cycle must be >= 100")
        if not 0 < self.energy_bin_width <= 0.2:
            raise ValueError("energy_bin_width must be in (0, 0.2] eV")
        if not self.max_flight_cycles > 0:
            raise ValueError("max_flight_cycles must be > 0")

    @property
    def n_bins(self) -> int:
        return int(round(self.energy_max / self.energy_bin_width))

    def energy_grid(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) * self.energy_bin_width


@dataclass(frozen=True)
class Trajectory:
    """One re-colliding quantum orbit.

    t_emit/t_rescatter in s, z_exit in m, drift_momentum (after re-scattering)
    in kg m/s, final_energy in eV, action in J s, phase = action/hbar in rad,
    weight = emission rate at t_emit (arbitrary units).
    """

    t_emit: float
    t_rescatter: float
    z_exit: float
    drift_momentum: float
    final_energy: float
    action: float
    phase: float
    weight: float


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """Vectorized census of the re-colliding trajectories of one pulse.

    Arrays are aligned and sorted by emission time; dt0 is the emission-time
    grid spacing used for amplitude weights; n_samples counts all eligible
    (negative-field) emission samples including non-returning ones.
    """

    ce_phase: float
    dt0: float
    n_samples: int
    t_emit: np.ndarray
    t_rescatter: np.ndarray
    z_exit: np.ndarray
    p_direct: np.ndarray
    drift_momentum: np.ndarray
    final_energy: np.ndarray
    action: np.ndarray
    weight: np.ndarray

    @property
    def phase(self) -> np.ndarray:
        return self.action / HBAR


def emission_rate(pulse: Pulse, t, cfg: SmmConfig):
    """Tunneling emission rate W(t); zero wherever E(t) >= 0.

    W = (A/|E|) exp(-4 sqrt(2m) phi^(3/2) / (3 hbar |e E|)) for E < 0.
    """
    e_t = np.asarray(pulse.efield(t), dtype=float)
    phi = cfg.work_function * EV
    scalar = e_t.ndim == 0
    e_t = np.atleast_1d(e_t)
    out = np.zeros_like(e_t)
    neg = e_t < 0.0
    if np.any(neg):
        mag = np.abs(e_t[neg])
        expo = -4.0 * math.sqrt(2.0 * M_E) * phi ** 1.5 / (3.0 * HBAR * E_CHARGE * mag)
        safe = expo > -700.0
        vals = np.zeros_like(mag)
        vals[safe] = cfg.rate_prefactor / mag[safe] * np.exp(expo[safe])
        out[neg] = vals
    return float(out[0]) if scalar else out


def tunnel_exit(pulse: Pulse, t0: float, cfg: SmmConfig) -> float:
    """Tunnel exit position phi/(|e| |E(t0)|) (m); requires E(t0) < 0."""
    e0 = pulse.efield(t0)
    if not e0 < 0.0:
        raise ValueError(f"no tunnel exit: E(t0) = {e0:.4g} V/m is not negative")
    return cfg.work_function * EV / (E_CHARGE * abs(e0))


def drift_momenta(pulse: Pulse, t0: float, t1: float):
    """Drift momenta (p0, p1) of the direct and re-scattered electron (kg m/s)."""
    if not t1 > t0:
        raise ValueError("t1 must be after t0")
    a0 = pulse.vector_potential(t0)
    a1 = pulse.vector_potential(t1)
    p0 = -E_CHARGE * a0
    p1 = -E_CHARGE * (2.0 * a1 - a0)
    return p0, p1


def _action_from_times(pulse: Pulse, t0, t1, p0, p1, phi_j):
    """Quasiclassical action S(t0, t1), reference time = pulse start.

    S = int_{t_ref}^{t1} {[p1 + |e|A]^2/2m + phi} dt
        - int_{t0}^{t1} {[p0 + |e|A]^2/2m + phi} dt
    evaluated through the tabulated running integrals of A and A^2.
    """
    q = E_CHARGE
    t_ref = pulse.t_start
    b_t1 = pulse.a_running_integral(t1)
    b_t0 = pulse.a_running_integral(t0)
    c_t1 = pulse.a_squared_running_integral(t1)
    c_t0 = pulse.a_squared_running_integral(t0)
    first = ((p1 ** 2 / (2.0 * M_E) + phi_j) * (t1 - t_ref)
             + (q * p1 / M_E) * b_t1 + (q ** 2 / (2.0 * M_E)) * c_t1)
    second = ((p0 ** 2 / (2.0 * M_E) + phi_j) * (t1 - t0)
              + (q * p0 / M_E) * (b_t1 - b_t0)
              + (q ** 2 / (2.0 * M_E)) * (c_t1 - c_t0))
    return first - second


def action(pulse: Pulse, traj: Trajectory, cfg: SmmConfig) -> float:
    """Action along a trajectory (J s); phase = action/hbar."""
    p0, p1 = drift_momenta(pulse, traj.t_emit, traj.t_rescatter)
    return float(_action_from_times(pulse, traj.t_emit, traj.t_rescatter,
                                    p0, p1, cfg.work_function * EV))


def propagate(pulse: Pulse, t0: float, cfg: SmmConfig,
              z_start: float | None = None) -> Trajectory | None:
    """Integrate one trajectory with adaptive RK45 and locate the re-collision.

    Newton's equation m z'' = -|e| E(t) from z(t0) = z_exit (or z_start if
    given), z'(t0) = 0.  Returns None when the electron does not return to
    z = 0 within max_flight_cycles optical cycles; raises IntegrationError on
    integrator failure.  This is the reference route; the ensemble kernel is
    cross-checked against it.
    """
    e0 = pulse.efield(t0)
    if not e0 < 0.0:
        raise ValueError(f"emission requires E(t0) < 0, got {e0:.4g} V/m")
    z0 = tunnel_exit(pulse, t0, cfg) if z_start is None else float(z_start)
    t_max = t0 + cfg.max_flight_cycles * pulse.period

    def rhs(t, y):
        return (y[1], -(E_CHARGE / M_E) * pulse.efield(t))

    def hit_surface(t, y):
        return y[0]
    hit_surface.terminal = True
    hit_surface.direction = -1.0

    # tolerances sized so the dense-output interpolant (which locates the
    # event root) is reliable to sub-attosecond level
    sol = solve_ivp(rhs, (t0, t_max), (z0, 0.0), method="RK45",
                    rtol=1e-12, atol=(1e-22, 1e-12), events=hit_surface,
                    max_step=pulse.period / 256.0, dense_output=False)
    if not sol.success:
        raise IntegrationError(f"RK45 failed at t0={t0:.4e}: {sol.message}")
    if len(sol.t_events[0]) == 0:
        return None
    t1 = float(sol.t_events[0][0])
    p0, p1 = drift_momenta(pulse, t0, t1)
    phi_j = cfg.work_function * EV
    s = float(_action_from_times(pulse, t0, t1, p0, p1, phi_j))
    return Trajectory(
        t_emit=t0, t_rescatter=t1, z_exit=z0, drift_momentum=p1,
        final_energy=p1 ** 2 / (2.0 * M_E) / EV, action=s, phase=s / HBAR,
        weight=float(emission_rate(pulse, t0, cfg)),
    )


def trajectory_ensemble(pulse: Pulse, cfg: SmmConfig,
                        z_exit_scale: float = 1.0) -> TrajectoryEnsemble:
    """Scan emission times over the pulse support and collect all
    re-colliding trajectories (fast kernel route).

    z_exit_scale rescales the tunnel-exit offset (0 places the launch at the
    surface, the textbook three-step configuration).
    """
    max_flight = cfg.max_flight_cycles * pulse.period
    if pulse.t_grid[-1] < pulse.t_end + max_flight - 1e-20:
        raise ValueError(
            "pulse grid does not cover the flight window; rebuild the pulse "
            "with a larger tail (max_flight_cycles exceeds the pulse tail)")

    dt0 = pulse.period / cfg.t0_samples_per_cycle
    n0 = int(math.floor((pulse.t_end - pulse.t_start) / dt0))
    t0s = pulse.t_start + dt0 * np.arange(n0)
    e_t0 = np.asarray(pulse.efield(t0s))
    eligible = e_t0 < 0.0
    t0s = t0s[eligible]
    e_t0 = e_t0[eligible]
    n_samples = len(t0s)

    phi_j = cfg.work_function * EV
    z_exit = z_exit_scale * phi_j / (E_CHARGE * np.abs(e_t0))
    a0 = np.asarray(pulse.vector_potential(t0s))
    b0 = np.asarray(pulse.a_running_integral(t0s))

    b_spline = pulse._b_spline
    t1 = _kernels.trajectory_batch(
        pulse.t_grid, b_spline(pulse.t_grid), np.ascontiguousarray(b_spline.c),
        t0s, a0, b0, z_exit, E_CHARGE / M_E, max_flight, 1e-19)

    found = ~np.isnan(t1)
    t0f = t0s[found]
    t1f = t1[found]
    a0f = a0[found]
    a1f = np.asarray(pulse.vector_potential(t1f))
    p0 = -E_CHARGE * a0f
    p1 = -E_CHARGE * (2.0 * a1f - a0f)
    s = _action_from_times(pulse, t0f, t1f, p0, p1, phi_j)
    expo = (-4.0 * math.sqrt(2.0 * M_E) * phi_j ** 1.5
            / (3.0 * HBAR * E_CHARGE * np.abs(e_t0[found])))
    weight = np.where(expo > -700.0,
                      cfg.rate_prefactor / np.abs(e_t0[found]) * np.exp(expo),
                      0.0)
    return TrajectoryEnsemble(
        ce_phase=pulse.params.ce_phase, dt0=dt0, n_samples=n_samples,
        t_emit=t0f, t_rescatter=t1f, z_exit=z_exit[found], p_direct=p0,
        drift_momentum=p1, final_energy=p1 ** 2 / (2.0 * M_E) / EV,
        action=s, weight=weight)


def spectrum_from_ensemble(ens: TrajectoryEnsemble, cfg: SmmConfig,
                           include: np.ndarray | None = None) -> Spectrum:
    """Coherent per-bin sum |sum_j sqrt(W_j) dt0 exp(i S_j/hbar)|^2.

    include optionally masks trajectories (census experiments); accumulation
    runs in emission-time order, so results are bit-reproducible.
    """
    if include is None:
        include = np.ones(len(ens.t_emit), dtype=bool)
    if len(ens.t_emit) == 0:
        raise EmptySpectrumError("no re-colliding trajectories in the ensemble")
    amp = np.zeros(cfg.n_bins, dtype=complex)
    idx = np.floor(ens.final_energy / cfg.energy_bin_width).astype(int)
    ok = include & (idx >= 0) & (idx < cfg.n_bins)
    contrib = (np.sqrt(ens.weight[ok]) * ens.dt0
               * np.exp(1j * (ens.action[ok] / HBAR)))
    np.add.at(amp, idx[ok], contrib)
    return Spectrum(cfg.energy_grid(), np.abs(amp) ** 2)


def spectrum(pulse: Pulse, cfg: SmmConfig) -> Spectrum:
    """Carrier-envelope-phase resolved photoelectron spectrum of one pulse."""
    return spectrum_from_ensemble(trajectory_ensemble(pulse, cfg), cfg)


def _scan_one(args):
    params, ce, cfg = args
    pulse = make_pulse(params.replace(ce_phase=ce))
    return spectrum(pulse, cfg).values


def phase_scan(params: PulseParams, phases, cfg: SmmConfig,
               workers: int = 1) -> SpectrumMap:
    """Run spectrum() for each carrier-envelope phase; rows ordered by phase."""
    phases = np.asarray(phases, dtype=float)
    if phases.size == 0:
        raise ValueError("phases grid is empty")
    jobs = [(params, float(ce), cfg) for ce in phases]
    rows = []
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futures = [ex.submit(_scan_one, j) for j in jobs]
            for ce, fut in zip(phases, futures):
                try:
                    rows.append(fut.result())
                except Exception as exc:
                    raise PhaseScanError(float(ce), str(exc)) from exc
    else:
        for job in jobs:
            try:
                rows.append(_scan_one(job))
            except Exception as exc:
                raise PhaseScanError(job[1], str(exc)) from exc
    return SpectrumMap(phases, cfg.energy_grid(), np.vstack(rows))


def classical_cutoff(params: PulseParams, phases, cfg: SmmConfig) -> np.ndarray:
    """Maximum classical final energy (eV) for each carrier-envelope phase."""
    phases = np.asarray(phases, dtype=float)
    out = np.empty(len(phases))
    for i, ce in enumerate(phases):
        ens = trajectory_ensemble(make_pulse(params.replace(ce_phase=float(ce))), cfg)
        out[i] = ens.final_energy.max() if len(ens.final_energy) else 0.0
    return out
