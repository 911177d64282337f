"""Shared spectral containers exchanged between simulation and analysis."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _frozen(a) -> np.ndarray:
    out = np.asarray(a, dtype=float).copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Spectrum:
    """Photoelectron probability vs kinetic energy.

    energies : uniform bin centers (eV), strictly increasing
    values : probability per bin (arbitrary units), >= 0
    """

    energies: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "energies", _frozen(self.energies))
        object.__setattr__(self, "values", _frozen(self.values))
        if self.energies.ndim != 1 or self.energies.shape != self.values.shape:
            raise ValueError("energies and values must be 1-D and congruent")
        d = np.diff(self.energies)
        if len(d) and (np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9)):
            raise ValueError("energies must be strictly increasing and uniform")

    @property
    def bin_width(self) -> float:
        return float(self.energies[1] - self.energies[0])

    def slice(self, lo: float, hi: float) -> "Spectrum":
        m = (self.energies >= lo) & (self.energies <= hi)
        return Spectrum(self.energies[m], self.values[m])


@dataclass(frozen=True)
class SpectrumMap:
    """Count rate on a (carrier-envelope phase x energy) grid.

    ce_phases : phase grid (rad), one row per phase
    energies : energy bin centers (eV)
    counts : array of shape (len(ce_phases), len(energies)), >= 0
    """

    ce_phases: np.ndarray
    energies: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ce_phases", _frozen(self.ce_phases))
        object.__setattr__(self, "energies", _frozen(self.energies))
        counts = np.asarray(self.counts, dtype=float).copy()
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)
        if self.counts.shape != (len(self.ce_phases), len(self.energies)):
            raise ValueError(
                f"counts shape {self.counts.shape} inconsistent with grids "
                f"({len(self.ce_phases)} phases, {len(self.energies)} energies)")

    def row(self, i: int) -> Spectrum:
        return Spectrum(self.energies, self.counts[i])

    def phase_average(self) -> Spectrum:
        return Spectrum(self.energies, self.counts.mean(axis=0))

    @property
    def phase_step(self) -> float:
        d = np.diff(self.ce_phases)
        if len(d) == 0:
            raise ValueError("single-phase map has no phase step")
        if not np.allclose(d, d[0], rtol=1e-9, atol=1e-12):
            raise ValueError("phase grid is not uniform")
        return float(d[0])
