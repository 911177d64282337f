"""Analysis of phase-resolved photoelectron spectra: differentiation of
retardation curves, Savitzky-Golay smoothing, exponential normalization,
modulation depth, peak visibility, and cut-off extraction."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import curve_fit
from scipy.signal import savgol_coeffs

from .constants import C_LIGHT, EV, H_PLANCK, PI
from .errors import AnalysisError, FitError
from .spectrum import Spectrum, SpectrumMap

# photon energy of the 800 nm carrier, the default peak spacing seed (eV)
DEFAULT_PEAK_SPACING = H_PLANCK * C_LIGHT / 800e-9 / EV


@dataclass(frozen=True)
class RetardationCurve:
    """Integrated count rate vs kinetic energy (high-pass characteristic).

    energy in eV with the origin at the vacuum level; counts in counts/s.
    """

    energy: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.energy, dtype=float)
        c = np.asarray(self.counts, dtype=float)
        if e.shape != c.shape or e.ndim != 1:
            raise ValueError("energy and counts must be congruent 1-D arrays")
        if np.any(np.diff(e) <= 0):
            raise AnalysisError("energy grid must be strictly increasing")
        if np.any(c < 0):
            raise ValueError("counts must be non-negative")
        for arr in (e, c):
            arr.flags.writeable = False
        object.__setattr__(self, "energy", e)
        object.__setattr__(self, "counts", c)


@dataclass(frozen=True)
class SinusoidFit:
    """offset + amplitude * cos(phase - phase0), period fixed at 2 pi.

    phase0 is NaN when the amplitude is indistinguishable from zero.
    """

    offset: float
    amplitude: float
    phase0: float
    amplitude_error: float


@dataclass(frozen=True)
class ModulationResult:
    energy: float
    depth: float
    fit: SinusoidFit

    @property
    def depth_error(self) -> float:
        return self.fit.amplitude_error / self.fit.offset if self.fit.offset else math.nan


@dataclass(frozen=True)
class VisibilityResult:
    peak_energies: np.ndarray
    visibilities: np.ndarray
    average: float


@dataclass(frozen=True)
class CutoffResult:
    cutoff_energy: float
    steep_slope: float      # decay constant 1/eV (steeper, high-energy side)
    shallow_slope: float    # retained for diagnostics
    threshold: float


# ---------------------------------------------------------------------------
# basic operations


def differentiate(curve: RetardationCurve) -> Spectrum:
    """Spectrum as minus the energy derivative of the integrated count rate.

    Central differences inside, one-sided at the endpoints; the sign makes a
    valid (non-increasing) high-pass curve yield a non-negative spectrum.
    """
    if len(curve.energy) < 5:
        raise AnalysisError("need at least 5 points to differentiate")
    deriv = np.gradient(curve.counts, curve.energy)
    return Spectrum(curve.energy, -deriv)


def savitzky_golay(series, window_points: int, poly_order: int) -> np.ndarray:
    """Least-squares local polynomial smoothing.

    window_points must be odd and fit in the series; poly_order < window
    points.  Boundaries are handled by symmetric windows that shrink toward
    the edges (order capped at the shrunk window size minus one), so a
    single-point window is the identity.
    """
    y = np.asarray(series, dtype=float)
    n = len(y)
    if window_points < 1 or window_points % 2 == 0:
        raise AnalysisError("window must be a positive odd point count")
    if window_points > n:
        raise AnalysisError(f"window of {window_points} exceeds series length {n}")
    if poly_order >= window_points:
        raise AnalysisError("poly_order must be smaller than the window")
    half = window_points // 2
    if half == 0:
        return y.copy()
    # deriv=0 coefficients are symmetric, so convolution = correlation
    out = np.convolve(y, savgol_coeffs(window_points, poly_order), mode="same")
    # shrinking symmetric windows near the boundaries
    for i in range(min(half, n)):
        for i2 in (i, n - 1 - i):
            if i == 0:
                out[i2] = y[i2]
                continue
            w = 2 * i + 1
            c = savgol_coeffs(w, min(poly_order, w - 1))
            out[i2] = float(np.dot(c, y[i2 - i:i2 + i + 1]))
    return out


def savgol_window_points(width_ev: float, grid_step_ev: float) -> int:
    """Odd point count spanning approximately width_ev on a uniform grid."""
    pts = int(round(width_ev / grid_step_ev))
    return max(1, pts | 1)


def smooth_spectrum(spec: Spectrum, width_ev: float = 1.5,
                    poly_order: int = 2) -> Spectrum:
    """Savitzky-Golay smoothing over a fixed energy span (default 1.5 eV)."""
    pts = savgol_window_points(width_ev, spec.bin_width)
    pts = min(pts, (len(spec.values) - 1) | 1)
    return Spectrum(spec.energies, savitzky_golay(spec.values, pts, poly_order))


def smooth_phase_axis(smap: SpectrumMap, window_points: int = 5,
                      poly_order: int = 2) -> SpectrumMap:
    """Smooth along the carrier-envelope-phase axis.

    The map must cover exactly one 2 pi period on a uniform grid; it is
    tiled periodically to 4 pi before filtering so the boundaries see real
    (wrapped) neighbors, then cropped back.
    """
    step = smap.phase_step
    n = len(smap.ce_phases)
    if not math.isclose(n * step, 2.0 * PI, rel_tol=1e-9):
        raise AnalysisError(
            f"phase grid covers {n * step:.6f} rad, need exactly 2 pi")
    tiled = np.vstack([smap.counts, smap.counts])
    sm = np.empty_like(tiled)
    for j in range(tiled.shape[1]):
        sm[:, j] = savitzky_golay(tiled[:, j], window_points, poly_order)
    half = n // 2
    cropped = sm[half:half + n, :]
    # cropped rows correspond to phases rolled by half; roll back
    restored = np.roll(cropped, half, axis=0)
    return SpectrumMap(smap.ce_phases, smap.energies, restored)


def normalize_exponential(spec: Spectrum, region: tuple[float, float]) -> Spectrum:
    """Divide by a C exp(-E/E0) fit over the given energy region.

    The fit is linear least squares on log counts (positive points in the
    region); the returned spectrum is counts divided by the fitted curve on
    the full grid.
    """
    lo, hi = region
    m = (spec.energies >= lo) & (spec.energies <= hi)
    if not np.any(m):
        raise AnalysisError(f"region [{lo}, {hi}] eV is outside the data")
    e = spec.energies[m]
    c = spec.values[m]
    pos = c > 0
    if not np.any(pos):
        raise AnalysisError("no positive counts in the normalization region")
    slope, intercept = np.polyfit(e[pos], np.log(c[pos]), 1)
    fit = np.exp(intercept + slope * spec.energies)
    return Spectrum(spec.energies, spec.values / fit)


def sinusoid_fit(phases, values) -> SinusoidFit:
    """Least-squares offset + amplitude cos(phi - phase0), period 2 pi.

    Linear in (offset, a, b) with a = A cos(phase0), b = A sin(phase0); the
    amplitude error follows from the parameter covariance.
    """
    phi = np.asarray(phases, dtype=float)
    y = np.asarray(values, dtype=float)
    if len(phi) < 4:
        raise AnalysisError("need at least 4 points for a sinusoid fit")
    if np.ptp(phi) < 2.0 * PI - PI / 2:
        raise AnalysisError("phases must span at least one period")
    x = np.column_stack([np.ones_like(phi), np.cos(phi), np.sin(phi)])
    gram = x.T @ x
    if np.linalg.matrix_rank(gram) < 3:
        raise FitError("sinusoid design matrix is rank deficient")
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    offset, a, b = coef
    amplitude = math.hypot(a, b)
    resid = y - x @ coef
    dof = max(len(y) - 3, 1)
    sigma2 = float(resid @ resid) / dof
    cov = sigma2 * np.linalg.inv(gram)
    if amplitude > 0:
        grad = np.array([0.0, a / amplitude, b / amplitude])
        amp_err = math.sqrt(max(float(grad @ cov @ grad), 0.0))
    else:
        amp_err = math.sqrt(max(cov[1, 1], cov[2, 2], 0.0))
    scale = max(abs(offset), float(np.max(np.abs(y))) if len(y) else 1.0, 1e-300)
    phase0 = math.atan2(b, a) if amplitude > 1e-9 * scale else math.nan
    return SinusoidFit(offset=float(offset), amplitude=float(amplitude),
                       phase0=phase0, amplitude_error=float(amp_err))


def modulation_depth(smap: SpectrumMap, energy: float,
                     half_width: float = 0.75) -> ModulationResult:
    """Modulation of the count rate with carrier-envelope phase at one energy.

    Counts are averaged over [energy - half_width, energy + half_width] per
    phase and fitted with a fixed-period sinusoid; depth = amplitude/offset
    clipped to [0, 1].
    """
    lo, hi = energy - half_width, energy + half_width
    if lo < smap.energies[0] - 0.5 * (smap.energies[1] - smap.energies[0]) or \
            hi > smap.energies[-1] + 0.5 * (smap.energies[1] - smap.energies[0]):
        raise AnalysisError(
            f"window [{lo:.2f}, {hi:.2f}] eV extends beyond the energy grid")
    m = (smap.energies >= lo) & (smap.energies <= hi)
    series = smap.counts[:, m].mean(axis=1)
    fit = sinusoid_fit(smap.ce_phases, series)
    if fit.offset <= 0:
        raise FitError(f"non-positive mean count rate at {energy:.2f} eV")
    depth = min(max(fit.amplitude / fit.offset, 0.0), 1.0)
    return ModulationResult(energy=energy, depth=depth, fit=fit)


# ---------------------------------------------------------------------------
# peak visibility


def _gaussian_train(e, *p):
    base0, base1 = p[0], p[1]
    out = base0 + base1 * e
    for k in range(2, len(p), 3):
        amp, center, sigma = p[k], p[k + 1], p[k + 2]
        out = out + amp * np.exp(-0.5 * ((e - center) / sigma) ** 2)
    return out


def fringe_contrast(spec: Spectrum, region: tuple[float, float],
                    peak_spacing: float = DEFAULT_PEAK_SPACING) -> float:
    """Relative amplitude of the spacing-periodic component over the region
    (detrended); equals amplitude/mean for a pure sinusoidal modulation.
    Used as the peak-prominence test."""
    lo, hi = region
    m = (spec.energies >= lo) & (spec.energies <= hi)
    if m.sum() < 4:
        raise AnalysisError("region too small for a contrast estimate")
    e = spec.energies[m]
    y = spec.values[m]
    mean = float(np.mean(y))
    if mean <= 0:
        return 0.0
    slope, icpt = np.polyfit(e, y, 1)
    resid = y - (icpt + slope * e)
    comp = np.mean(resid * np.exp(2j * PI * e / peak_spacing))
    return float(2.0 * np.abs(comp) / mean)


def peak_visibility(spec: Spectrum, peak_region: tuple[float, float],
                    n_peaks: int, peak_spacing: float = DEFAULT_PEAK_SPACING,
                    seed_width: float = 0.3, presmooth: bool = False,
                    min_contrast: float = 0.02) -> VisibilityResult:
    """Contrast of photon-order peaks from a multi-Gaussian fit.

    A sum of n_peaks Gaussians plus a linear baseline is fitted over
    peak_region, seeded at peak_spacing intervals from the region's lowest
    local maximum.  Per peak, visibility = (A - B)/(A + B) with A the fit
    value at the peak maximum and B the mean of the fit values at the two
    adjacent minima.  Weak peak structure can be pre-smoothed first.

    When the spacing-periodic component of the (detrended) region falls
    below min_contrast there is no peak train to fit and the visibility is
    zero by definition (a fit would hallucinate structure from the slope).
    """
    if n_peaks < 1:
        raise AnalysisError("n_peaks must be >= 1")
    lo, hi = peak_region
    work = smooth_spectrum(spec, 0.9) if presmooth else spec
    m = (work.energies >= lo) & (work.energies <= hi)
    if m.sum() < 3 * n_peaks + 2:
        raise AnalysisError("peak region too small for the requested peak count")
    e = work.energies[m]
    y = work.values[m]
    if fringe_contrast(work, peak_region, peak_spacing) < min_contrast:
        centers = e[0] + peak_spacing * (np.arange(n_peaks) + 0.5)
        return VisibilityResult(peak_energies=centers,
                                visibilities=np.zeros(n_peaks), average=0.0)

    # seed from the lowest-energy local maximum in the region
    interior = np.nonzero((y[1:-1] >= y[:-2]) & (y[1:-1] >= y[2:]))[0]
    first_peak = e[interior[0] + 1] if len(interior) else e[np.argmax(y)]
    centers = first_peak + peak_spacing * np.arange(n_peaks)
    if centers[-1] > hi:
        centers = np.linspace(first_peak, hi - 0.5 * peak_spacing, n_peaks)
    scale = float(y.max() - y.min()) or 1.0

    # anchor the linear baseline to the valley envelope so the fit cannot
    # trade baseline depth for peak amplitude (degenerate full-contrast fits)
    minima = np.nonzero((y[1:-1] <= y[:-2]) & (y[1:-1] <= y[2:]))[0] + 1
    if len(minima) >= 2:
        env_slope, env_icpt = np.polyfit(e[minima], y[minima], 1)
    else:
        env_slope, env_icpt = 0.0, float(y.min())
    span = hi - lo
    p0 = [float(env_icpt), float(env_slope)]
    bounds_lo = [env_icpt - 0.1 * scale, env_slope - 0.1 * scale / span]
    bounds_hi = [env_icpt + 0.1 * scale, env_slope + 0.1 * scale / span]
    for ck in centers:
        base_ck = env_icpt + env_slope * ck
        amp0 = max(float(np.interp(ck, e, y)) - base_ck, 0.05 * scale)
        p0 += [amp0, float(ck), min(max(seed_width, 0.12 * peak_spacing),
                                    0.33 * peak_spacing)]
        bounds_lo += [0.0, lo, 0.1 * peak_spacing]
        bounds_hi += [1.5 * scale, hi, 0.35 * peak_spacing]
    try:
        popt, _ = curve_fit(_gaussian_train, e, y, p0=p0,
                            bounds=(bounds_lo, bounds_hi), maxfev=20000)
    except Exception as exc:
        raise FitError(f"multi-Gaussian fit diverged: {exc}") from exc

    fitted_centers = np.sort(popt[3::3])
    if n_peaks > 1 and np.min(np.diff(fitted_centers)) < 0.4 * peak_spacing:
        raise FitError("fitted peaks collapsed below the separation floor")

    # evaluate one spacing past the region so edge peaks see both minima
    dense = np.linspace(e[0] - peak_spacing, e[-1] + peak_spacing, 60 * len(e))
    curve = _gaussian_train(dense, *popt)
    peak_es, vis = [], []
    for ck in fitted_centers:
        win = 0.5 * peak_spacing
        sel = (dense >= ck - win) & (dense <= ck + win)
        i_max = np.argmax(curve[sel])
        e_pk = dense[sel][i_max]
        a_val = curve[sel][i_max]
        left = (dense >= e_pk - peak_spacing) & (dense < e_pk)
        right = (dense > e_pk) & (dense <= e_pk + peak_spacing)
        if not (left.any() and right.any()) or a_val <= 0:
            continue
        # count rates are non-negative; an overshooting fit baseline must
        # not push the contrast beyond total
        b_val = max(0.5 * (max(curve[left].min(), 0.0)
                           + max(curve[right].min(), 0.0)), 0.0)
        denom = a_val + b_val
        v = (a_val - b_val) / denom if denom != 0 else 0.0
        peak_es.append(e_pk)
        vis.append(min(max(v, -1.0), 1.0))
    if not vis:
        raise FitError("no usable peaks in the fit curve")
    return VisibilityResult(peak_energies=np.asarray(peak_es),
                            visibilities=np.asarray(vis),
                            average=float(np.mean(vis)))


# ---------------------------------------------------------------------------
# cut-off position


def _log_linear_fit(e, c, window, label):
    lo, hi = window
    m = (e >= lo) & (e <= hi)
    if m.sum() < 2:
        raise AnalysisError(f"{label} window [{lo}, {hi}] eV has fewer than 2 points")
    pos = m & (c > 0)
    # tolerate empty bins at a hard spectral edge, but not a mostly dead
    # window: enough populated bins spanning a usable lever arm
    if pos.sum() < 5 or (e[pos].max() - e[pos].min()) < 0.3 * (hi - lo):
        raise AnalysisError(f"non-positive counts in the {label} window")
    slope, intercept = np.polyfit(e[pos], np.log(c[pos]), 1)
    return -slope, intercept  # decay constant 1/eV, log amplitude


def cutoff_position(spec: Spectrum, steep_window: tuple[float, float],
                    shallow_window: tuple[float, float],
                    threshold: float) -> CutoffResult:
    """Cut-off as the crossing of the steep exponential fit with a constant
    count-rate threshold.

    Exponentials are fitted (log-linear least squares) in the two windows;
    only the steep fit defines the cut-off, the shallow fit is kept for
    diagnostics (the slope intersection is too noise sensitive).
    """
    if not shallow_window[1] <= steep_window[0]:
        raise AnalysisError("windows must be disjoint with steep at higher energy")
    if threshold <= 0:
        raise AnalysisError("threshold must be positive")
    steep_k, steep_b = _log_linear_fit(spec.energies, spec.values, steep_window, "steep")
    shallow_k, shallow_b = _log_linear_fit(spec.energies, spec.values,
                                           shallow_window, "shallow")
    if steep_k <= shallow_k:
        raise FitError(
            f"steep-window decay ({steep_k:.3g}/eV) is not faster than the "
            f"shallow one ({shallow_k:.3g}/eV); check the windows")
    fit_hi = math.exp(steep_b - steep_k * steep_window[1])
    fit_lo = math.exp(steep_b - steep_k * steep_window[0])
    if not fit_hi <= threshold <= fit_lo:
        raise AnalysisError(
            f"threshold {threshold:.3g} outside the steep fit's range "
            f"[{fit_hi:.3g}, {fit_lo:.3g}] over its window")
    cutoff = (steep_b - math.log(threshold)) / steep_k
    if not spec.energies[0] <= cutoff <= spec.energies[-1]:
        raise AnalysisError(
            f"threshold {threshold:.3g} is not crossed inside the data range "
            f"(fit crossing at {cutoff:.2f} eV)")
    return CutoffResult(cutoff_energy=float(cutoff), steep_slope=float(steep_k),
                        shallow_slope=float(shallow_k), threshold=threshold)


def suggest_threshold(spec: Spectrum, plateau_region: tuple[float, float],
                      fraction: float = 0.05) -> float:
    """Threshold as a fraction of the plateau median count rate (arbitrary
    units do not transfer between datasets, so the level is data derived)."""
    lo, hi = plateau_region
    m = (spec.energies >= lo) & (spec.energies <= hi)
    if not np.any(m):
        raise AnalysisError("plateau region outside the data")
    med = float(np.median(spec.values[m]))
    if med <= 0:
        raise AnalysisError("plateau median is not positive")
    return fraction * med


def suggest_cutoff_windows(spec: Spectrum, plateau_region: tuple[float, float],
                           width: float = 1.5):
    """Heuristic window choice: steepest log-slope segment above the plateau
    for the steep window, the plateau tail for the shallow one.  A
    convenience default; supply explicit windows for controlled analyses."""
    sm = smooth_spectrum(spec, 0.5)
    e = sm.energies
    pos = sm.values > 0
    lo, hi = plateau_region
    floor = max(np.max(sm.values[pos]) * 1e-9, 0.0)
    logv = np.where(sm.values > floor, np.log(np.maximum(sm.values, floor)), np.nan)
    step = e[1] - e[0]
    w_pts = max(int(round(width / step)), 3)
    best_slope, best_i = 0.0, None
    # a window this wide averages over photon-order oscillations, so the
    # steepest least-squares slope marks the spectral fall-off; empty bins
    # at a hard edge are tolerated up to 40% of the window
    start = np.searchsorted(e, lo)
    for i in range(start, len(e) - w_pts):
        seg = logv[i:i + w_pts]
        fin = np.isfinite(seg)
        if fin.sum() < max(5, int(0.6 * w_pts)):
            continue
        slope = np.polyfit(e[i:i + w_pts][fin], seg[fin], 1)[0]
        if slope < best_slope:
            best_slope, best_i = slope, i
    if best_i is None:
        raise AnalysisError("no clean steep segment found above the plateau")
    steep = (float(e[best_i]), float(e[best_i + w_pts - 1]))
    shallow = (max(lo, steep[0] - 2.5 * width), steep[0] - 0.25 * width)
    return steep, shallow


# ---------------------------------------------------------------------------
# map-level conveniences used by the pipeline


def modulation_profile(smap: SpectrumMap, energies=None,
                       half_width: float = 0.75) -> list[ModulationResult]:
    """Modulation depth at a set of probe energies (default: every 0.5 eV
    where the averaging window fits inside the grid and carries counts;
    windows beyond the signal, e.g. past the cut-off, are skipped)."""
    if energies is None:
        lo = smap.energies[0] + half_width
        hi = smap.energies[-1] - half_width
        energies = np.arange(math.ceil(lo * 2) / 2, hi + 1e-9, 0.5)
    floor = 1e-12 * float(smap.counts.max()) if smap.counts.size else 0.0
    out = []
    for en in energies:
        m = (smap.energies >= en - half_width) & (smap.energies <= en + half_width)
        if not np.any(m) or smap.counts[:, m].mean() <= floor:
            continue
        out.append(modulation_depth(smap, float(en), half_width))
    return out


def visibility_vs_phase(smap: SpectrumMap, peak_region: tuple[float, float],
                        n_peaks: int, peak_spacing: float = DEFAULT_PEAK_SPACING,
                        presmooth: bool = False) -> np.ndarray:
    """Average plateau peak visibility for each phase row.

    Rows whose fit collapses are retried with strong smoothing (the
    weak-peak-structure branch of the reference procedure); if the peaks
    still collapse the row has no resolvable peak train and its visibility
    is recorded as zero.
    """
    out = np.empty(len(smap.ce_phases))
    for i in range(len(smap.ce_phases)):
        try:
            out[i] = peak_visibility(smap.row(i), peak_region, n_peaks,
                                     peak_spacing=peak_spacing,
                                     presmooth=presmooth).average
        except FitError:
            try:
                out[i] = peak_visibility(smap.row(i), peak_region, n_peaks,
                                         peak_spacing=peak_spacing,
                                         presmooth=True).average
            except FitError:
                out[i] = 0.0
    return out


def cutoff_vs_phase(smap: SpectrumMap, steep_window, shallow_window,
                    threshold: float | None, plateau=None,
                    threshold_fraction: float = 0.05) -> np.ndarray:
    """Cut-off position for each phase row.

    With explicit windows every row is fitted in the same intervals at one
    common threshold (the retarding-spectrometer protocol).  With
    steep_window=None the steep segment is anchored per row to its own
    spectral edge and the threshold is the given fraction of that row's
    plateau median; this variant tracks hard, phase-dependent edges (the
    semiclassical maps) where no single window covers all rows.
    """
    out = np.empty(len(smap.ce_phases))
    if steep_window is not None:
        if threshold is None:
            raise AnalysisError("explicit windows need an explicit threshold")
        for i in range(len(smap.ce_phases)):
            out[i] = cutoff_position(smap.row(i), steep_window, shallow_window,
                                     threshold).cutoff_energy
        return out
    if plateau is None:
        raise AnalysisError("per-row window mode needs the plateau region")
    for i in range(len(smap.ce_phases)):
        row = smap.row(i)
        sm = smooth_spectrum(row, 0.5)
        pm = (sm.energies >= plateau[0]) & (sm.energies <= plateau[1])
        level = float(np.median(sm.values[pm]))
        if level <= 0:
            raise AnalysisError(f"row {i}: empty plateau region")
        thr_i = threshold_fraction * level
        above = np.nonzero((sm.values >= thr_i)
                           & (sm.energies > plateau[0]))[0]
        if len(above) == 0 or above[-1] == len(sm.energies) - 1:
            raise AnalysisError(
                f"row {i}: spectrum does not fall below the threshold")
        j = above[-1]
        e0v, e1 = sm.energies[j], sm.energies[j + 1]
        v0, v1 = sm.values[j], sm.values[j + 1]
        frac = (v0 - thr_i) / (v0 - v1) if v0 != v1 else 0.0
        out[i] = e0v + frac * (e1 - e0v)
    return out
