"""Exception types shared across the package."""


class NanotipError(Exception):
    """Base class for errors raised by this package."""


class IntegrationError(NanotipError):
    """A numerical integrator failed to converge (distinct from a no-return trajectory)."""


class EmptySpectrumError(NanotipError):
    """No re-colliding trajectories contributed to the requested spectrum."""


class SolverError(NanotipError):
    """An eigenvalue or root solve failed (no bracket, no convergence)."""


class FitError(NanotipError):
    """A least-squares fit diverged, collapsed, or is rank deficient."""


class AnalysisError(NanotipError):
    """Invalid input to an analysis operation (grids, windows, thresholds)."""


class ConfigError(NanotipError):
    """Run configuration failed validation; message names the offending field."""


class IngestError(NanotipError):
    """A data file could not be parsed or its blocks are inconsistent."""


class PhaseScanError(NanotipError):
    """A phase scan failed for one phase; carries the offending phase value."""

    def __init__(self, ce_phase, message):
        super().__init__(f"phase {ce_phase!r}: {message}")
        self.ce_phase = ce_phase
