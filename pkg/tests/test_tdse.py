import math

import numpy as np
import pytest

from nanotip import tdse
from nanotip.constants import EV, E_CHARGE, EPS0, FS, HBAR, M_E, NM, PI
from nanotip.errors import AnalysisError
from nanotip.field import EnvelopeKind, PulseParams, make_pulse
from nanotip.spectrum import Spectrum

from conftest import TDSE_PARAMS

# a short box for cheap unit tests (full-scale runs live in the acceptance
# suite); detector close in, small drift
FAST_CFG = tdse.TdseConfig(grid_min=-2e-9, grid_max=40e-9, grid_step=0.02e-9,
                           time_step=2e-18, absorber_width=8e-9,
                           detector_plane=25e-9, drift_time=4e-15)


@pytest.fixture(scope="module")
def fast_potential():
    return tdse.build_potential(FAST_CFG)


@pytest.fixture(scope="module")
def fast_ground(fast_potential):
    return tdse.ground_state(fast_potential)


def test_config_invariants():
    with pytest.raises(ValueError):
        tdse.TdseConfig(grid_min=1e-9)
    with pytest.raises(ValueError):
        tdse.TdseConfig(detector_plane=175e-9)  # collides with absorber
    with pytest.raises(ValueError):
        tdse.TdseConfig(time_step=0.0)


def test_schottky_lowering_value():
    # sqrt(e^3 E / 4 pi eps0) at 0.4 GV/m
    expected = math.sqrt(E_CHARGE ** 3 * 0.4e9 / (4 * PI * EPS0)) / EV
    assert tdse.schottky_lowering(0.4e9) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.76, abs=0.02)
    assert tdse.schottky_lowering(0.0) == 0.0


def test_effective_barrier(fast_potential):
    assert fast_potential.effective_barrier == pytest.approx(
        6.0 - tdse.schottky_lowering(0.4e9), rel=1e-12)
    assert fast_potential.effective_barrier == pytest.approx(5.2, abs=0.05)


def test_numeric_barrier_matches_analytic(fast_potential, fast_ground):
    _, e0 = fast_ground
    z, v = fast_potential.z, fast_potential.v
    vac = (z > 0) & (z < 5 * NM)
    barrier = v[vac].max() - e0
    assert barrier == pytest.approx(fast_potential.effective_barrier, abs=0.02)


def test_potential_finite_and_well_placed(fast_potential):
    assert np.all(np.isfinite(fast_potential.v))
    z, v = fast_potential.z, fast_potential.v
    # well floor on the metal side at -(fermi + work)
    assert fast_potential.well_bottom == pytest.approx(-15.0, rel=1e-12)
    assert fast_potential.well_width > 0
    # vacuum side approaches the capped extraction value
    assert v[-1] == pytest.approx(
        -0.4e9 * FAST_CFG.detector_plane
        - E_CHARGE / (16 * PI * EPS0 * FAST_CFG.detector_plane), rel=1e-6)


def test_pure_step_configuration():
    cfg = tdse.TdseConfig(grid_min=-2e-9, grid_max=40e-9, grid_step=0.02e-9,
                          absorber_width=8e-9, detector_plane=25e-9,
                          static_field=0.0, use_image_potential=False)
    pot = tdse.build_potential(cfg)
    vac = pot.z > 0
    np.testing.assert_allclose(pot.v[vac], 0.0, atol=1e-12)
    assert pot.effective_barrier == pytest.approx(6.0)
    _, e0 = tdse.ground_state(pot)
    assert e0 - pot.well_bottom == pytest.approx(9.0, abs=0.01)


def test_ground_state_energy_matches_fermi(fast_potential, fast_ground):
    state, e0 = fast_ground
    assert e0 - fast_potential.well_bottom == pytest.approx(9.0, abs=0.01)
    # normalized
    assert np.sum(np.abs(state.psi) ** 2) * fast_potential.grid_step == \
        pytest.approx(1.0, abs=1e-12)


def test_ground_state_against_finite_well_dispersion():
    # symmetric finite square well: the eigensolver must reproduce the
    # analytic transcendental ground state (xi tan xi = eta)
    from scipy.optimize import brentq

    dz = 0.002e-9
    z = np.arange(-2e-9, 5e-9 + dz / 2, dz)
    v0 = 50.0
    a = 0.2e-9  # half width
    v = np.where(np.abs(z) <= a, -v0, 0.0)
    pot = tdse.PotentialGrid(z=z, v=v, well_width=2 * a,
                             effective_barrier=v0)
    _, e_num = tdse.ground_state(pot)

    r = a * math.sqrt(2 * M_E * v0 * EV) / HBAR

    def disp(xi):
        return xi * math.tan(xi) - math.sqrt(max(r * r - xi * xi, 0.0))

    xi0 = brentq(disp, 1e-9, min(PI / 2 - 1e-9, r - 1e-12))
    e_inside = (HBAR * xi0 / a) ** 2 / (2 * M_E) / EV
    e_oracle = e_inside - v0
    assert e_num == pytest.approx(e_oracle, abs=2e-3)


def test_deep_well_approaches_box_limit():
    # hard deep walls around a fixed width: the eigensolver's ground energy
    # converges to hbar^2 pi^2 / (2 m w^2) as the wall height grows
    dz = 0.002e-9
    z = np.arange(-2e-9, 5e-9 + dz / 2, dz)
    w = 0.3e-9
    e_box = (HBAR * PI / w) ** 2 / (2 * M_E) / EV
    errs = []
    for v_wall in (4e3, 4e4):
        v = np.where(np.abs(z) <= w / 2, 0.0, v_wall)
        pot = tdse.PotentialGrid(z=z, v=v, well_width=w,
                                 effective_barrier=v_wall)
        _, e0 = tdse.ground_state(pot)
        errs.append(abs(e0 - e_box) / e_box)
    assert errs[1] < errs[0]
    assert errs[1] < 0.05


def test_field_free_ground_state_is_stationary(fast_potential, fast_ground):
    state, _ = fast_ground
    quiet = PulseParams(800e-9, 5.5e-15, 0.0, envelope_kind=EnvelopeKind.GAUSSIAN)
    pulse = make_pulse(quiet)
    final, trace = tdse.propagate(state, fast_potential, pulse, FAST_CFG,
                                  t_final=pulse.t_start + 10e-15,
                                  record_every=100)
    assert trace.population[0] == pytest.approx(1.0, abs=1e-12)
    assert np.all(np.abs(trace.population - 1.0) < 1e-8)


def test_norm_conservation_without_absorber(fast_ground, fast_potential):
    # Crank-Nicolson without absorbing layer: norm drift < 1e-10 per step
    from nanotip import _kernels
    state, _ = fast_ground
    z = fast_potential.z
    dz = fast_potential.grid_step
    nsteps = 500
    e_mid = 9.9e9 * np.sin(np.linspace(0, 8, nsteps))
    cap = np.zeros(len(z))
    laser = E_CHARGE * np.clip(z, 0.0, FAST_CFG.detector_plane)
    kin = HBAR ** 2 / (2 * M_E * dz ** 2)
    alpha = FAST_CFG.time_step / (2 * HBAR)
    _, _, norms = _kernels.cn_propagate(state.psi, fast_potential.v * EV, cap,
                                        laser, e_mid, kin, alpha, state.psi,
                                        dz, 1)
    drift = np.abs(np.diff(norms))
    assert drift.max() < 1e-10


def test_norm_non_increasing_with_absorber(fast_potential, fast_ground):
    state, _ = fast_ground
    pulse = make_pulse(TDSE_PARAMS)
    final, _ = tdse.propagate(state, fast_potential, pulse, FAST_CFG,
                              t_final=pulse.t_start + 8e-15, record_every=50)
    assert final.norm <= 1.0 + 1e-10


def test_free_gaussian_spreading_matches_dispersion():
    # flat potential; sigma(t) = sigma0 sqrt(1 + (hbar t / 2 m sigma0^2)^2)
    cfg = tdse.TdseConfig(grid_min=-30e-9, grid_max=30e-9, grid_step=0.01e-9,
                          time_step=1e-18, absorber_width=5e-9,
                          detector_plane=20e-9, static_field=0.0,
                          use_image_potential=False)
    z = cfg.z_grid()
    pot = tdse.PotentialGrid(z=z, v=np.zeros(len(z)), well_width=0.0,
                             effective_barrier=0.0)
    sigma0 = 0.5e-9
    psi = np.exp(-((z) ** 2) / (4 * sigma0 ** 2)).astype(complex)
    psi /= math.sqrt(float(np.sum(np.abs(psi) ** 2)) * cfg.grid_step)
    state = tdse.WaveState(psi=psi, time=0.0, norm=1.0)
    quiet = PulseParams(800e-9, 5.5e-15, 0.0, envelope_kind=EnvelopeKind.GAUSSIAN)
    pulse = make_pulse(quiet)
    t_prop = 4e-15
    final, _ = tdse.propagate(state, pot, pulse, cfg,
                              t_final=pulse.t_start + t_prop, record_every=4000)
    prob = np.abs(final.psi) ** 2
    prob /= prob.sum() * cfg.grid_step
    mean = np.sum(z * prob) * cfg.grid_step
    var = np.sum((z - mean) ** 2 * prob) * cfg.grid_step
    sigma_num = math.sqrt(var)
    sigma_ref = sigma0 * math.sqrt(1 + (HBAR * t_prop / (2 * M_E * sigma0 ** 2)) ** 2)
    assert sigma_num == pytest.approx(sigma_ref, rel=1e-4)


def test_absorber_reflection_below_tolerance():
    # 20 eV packet into the absorbing layer: returned norm < 1e-6
    cfg = tdse.TdseConfig()
    z = np.arange(0.0, 60e-9 + 1e-12, 0.01e-9)
    nz = len(z)
    pot_v = np.zeros(nz)
    cap = np.zeros(nz)
    cap_w = cfg.absorber_width
    on = z[-1] - cap_w
    m = z > on
    cap[m] = tdse.CAP_STRENGTH_EV * ((z[m] - on) / cap_w) ** 4
    k0 = math.sqrt(2 * M_E * 20.0 * EV) / HBAR
    sigma = 2e-9
    z0 = 20e-9
    psi = np.exp(-((z - z0) ** 2) / (4 * sigma ** 2) + 1j * k0 * z)
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * 0.01e-9)
    from nanotip import _kernels
    v_speed = HBAR * k0 / M_E
    t_total = (z[-1] - z0 + 30e-9) / v_speed
    nsteps = int(t_total / 1e-18)
    e_mid = np.zeros(nsteps)
    kin = HBAR ** 2 / (2 * M_E * (0.01e-9) ** 2)
    psi_f, _, norms = _kernels.cn_propagate(
        psi.astype(complex), pot_v, cap * EV, np.zeros(nz), e_mid, kin,
        1e-18 / (2 * HBAR), psi.astype(complex), 0.01e-9, nsteps)
    # whatever norm remains on the grid is unabsorbed (reflected or
    # transmitted-and-bounced) flux
    assert norms[-1] < 1e-6


def test_analyze_spectrum_plane_wave_packet(fast_potential):
    # synthetic outgoing packet at k0 beyond the detector plane peaks at
    # hbar^2 k0^2/2m + V_end within one bin
    cfg = FAST_CFG
    z = fast_potential.z
    v_end = fast_potential.v[-1]
    e_target = 8.0
    k0 = math.sqrt(2 * M_E * (e_target - v_end) * EV) / HBAR
    z0 = 33e-9
    sigma = 1.5e-9  # 4 sigma clearance to the mask and the grid end
    psi = np.exp(-((z - z0) ** 2) / (4 * sigma ** 2) + 1j * k0 * z)
    psi[z < cfg.detector_plane + 2e-9] = 0.0
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * fast_potential.grid_step)
    state = tdse.WaveState(psi=psi.astype(complex), time=0.0, norm=1.0)
    # the fast box has a short analysis region; pad harder for k resolution
    spec = tdse.analyze_spectrum(state, fast_potential, cfg, pad_factor=64)
    peak = spec.energies[np.argmax(spec.values)]
    assert abs(peak - e_target) <= 0.05


def test_analyze_spectrum_parseval_accounting(fast_potential):
    cfg = FAST_CFG
    z = fast_potential.z
    rng = np.random.default_rng(8)
    psi = (rng.normal(size=len(z)) + 1j * rng.normal(size=len(z)))
    psi *= np.exp(-((z - 30e-9) / 4e-9) ** 2)
    psi /= np.sqrt(np.sum(np.abs(psi) ** 2) * fast_potential.grid_step)
    state = tdse.WaveState(psi=psi, time=0.0, norm=1.0)
    spec, diag = tdse.analyze_spectrum(state, fast_potential, cfg,
                                       full_output=True)
    total = spec.values.sum() + diag["below_range"] + diag["above_range"]
    assert total == pytest.approx(diag["region_norm"], rel=1e-12)


def test_analyze_spectrum_rejects_empty_region(fast_potential, fast_ground):
    state, _ = fast_ground  # no amplitude beyond the detector plane
    with pytest.raises(AnalysisError):
        tdse.analyze_spectrum(state, fast_potential, FAST_CFG)


def test_phase_scan_requires_gaussian():
    from nanotip.errors import PhaseScanError
    bad = PulseParams(800e-9, 5.5e-15, 9.9e9)  # sine-square
    with pytest.raises(ValueError):
        tdse.phase_scan_tdse(FAST_CFG, bad, np.array([0.0]))
