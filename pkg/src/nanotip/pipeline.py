"""Configuration, orchestration, and file I/O: run simulation scans, analyze
maps, ingest measured retardation curves, and write plot-ready CSVs.

All outputs are deterministic for a given configuration (no timestamps);
map files embed the full configuration as a provenance block and round-trip
bit exactly.
"""
from __future__ import annotations

import dataclasses
import enum
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import smm, spectra, tdse
from .constants import FS, NM, PI
from .errors import AnalysisError, ConfigError, IngestError
from .field import EnvelopeKind, PulseParams
from .spectrum import Spectrum, SpectrumMap
from .spectra import RetardationCurve
from .tdse import PopulationTrace

MAPFILE_VERSION = 1
CONFIG_VERSION = 1
OUTPUT_DIR_ENV = "NANOTIP_OUTPUT_DIR"


class RunMode(enum.Enum):
    SMM_SCAN = "SmmScan"
    TDSE_SCAN = "TdseScan"
    ANALYZE = "Analyze"


@dataclass(frozen=True)
class PhaseGrid:
    """Uniform carrier-envelope-phase grid [start, stop) with the given step."""

    start: float = -PI
    stop: float = PI
    step: float = PI / 8

    def values(self) -> np.ndarray:
        if abs((2.0 * PI / self.step) - round(2.0 * PI / self.step)) > 1e-9:
            raise ConfigError("phases.step must divide 2 pi")
        n = (self.stop - self.start) / self.step
        if abs(n - round(n)) > 1e-9:
            raise ConfigError("phases.step must divide (stop - start)")
        return self.start + self.step * np.arange(int(round(n)))


@dataclass(frozen=True)
class AnalysisParams:
    """Parameters of the derived analyses run on a spectrum map."""

    plateau: tuple[float, float] = (5.0, 12.0)
    n_peaks: int = 4
    peak_spacing: float = spectra.DEFAULT_PEAK_SPACING
    modulation_half_width: float = 0.75
    cutoff_threshold_fraction: float = 0.05
    steep_window: tuple[float, float] | None = None
    shallow_window: tuple[float, float] | None = None
    smooth_phase: bool = True
    presmooth_peaks: bool = False


@dataclass(frozen=True)
class RunConfig:
    mode: RunMode
    pulse: PulseParams
    smm: smm.SmmConfig | None = None
    tdse: tdse.TdseConfig | None = None
    phases: PhaseGrid = field(default_factory=PhaseGrid)
    analysis: AnalysisParams = field(default_factory=AnalysisParams)
    input_map: str | None = None
    seed: int = 0
    workers: int = 1
    output_dir: str = "out"

    def validate(self):
        if self.mode is RunMode.SMM_SCAN and self.smm is None:
            raise ConfigError("mode SmmScan requires the 'smm' section")
        if self.mode is RunMode.TDSE_SCAN and self.tdse is None:
            raise ConfigError("mode TdseScan requires the 'tdse' section")
        if self.mode is RunMode.ANALYZE and not self.input_map:
            raise ConfigError("mode Analyze requires 'input_map'")
        self.phases.values()
        return self


# ---------------------------------------------------------------------------
# config file handling

_PULSE_FIELDS = {"wavelength", "fwhm_duration", "peak_field", "ce_phase",
                 "envelope_kind"}

PRESETS = {
    # reference parameter sets used throughout the test suite
    "paper-smm": {
        "mode": "SmmScan",
        "pulse": {"wavelength": 800e-9, "fwhm_duration": 6.3e-15,
                  "peak_field": 10.4e9, "ce_phase": 0.0,
                  "envelope_kind": "SineSquare"},
        "smm": {"work_function": 5.2},
    },
    "paper-tdse": {
        "mode": "TdseScan",
        "pulse": {"wavelength": 800e-9, "fwhm_duration": 5.5e-15,
                  "peak_field": 9.9e9, "ce_phase": 0.0,
                  "envelope_kind": "Gaussian"},
        "tdse": {"work_function": 6.0, "fermi_energy": 9.0,
                 "static_field": 0.4e9},
    },
}


def _build_section(cls, data, section):
    if data is None:
        return None
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown field '{section}.{sorted(unknown)[0]}'")
    coerced = {}
    for key, val in data.items():
        if isinstance(val, list):
            val = tuple(val)
        coerced[key] = val
    try:
        return cls(**coerced)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section '{section}': {exc}") from exc


def config_from_dict(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config root must be a mapping")
    data = dict(data)
    version = data.pop("config_version", CONFIG_VERSION)
    if version != CONFIG_VERSION:
        raise ConfigError(f"unsupported config_version {version!r}")
    try:
        mode = RunMode(data.pop("mode"))
    except KeyError:
        raise ConfigError("missing required field 'mode'") from None
    except ValueError as exc:
        raise ConfigError(f"field 'mode': {exc}") from None
    pulse_data = data.pop("pulse", None)
    if pulse_data is None:
        raise ConfigError("missing required section 'pulse'")
    unknown = set(pulse_data) - _PULSE_FIELDS
    if unknown:
        raise ConfigError(f"unknown field 'pulse.{sorted(unknown)[0]}'")
    try:
        pulse = PulseParams(**pulse_data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"section 'pulse': {exc}") from exc

    cfg = RunConfig(
        mode=mode,
        pulse=pulse,
        smm=_build_section(smm.SmmConfig, data.pop("smm", None), "smm"),
        tdse=_build_section(tdse.TdseConfig, data.pop("tdse", None), "tdse"),
        phases=_build_section(PhaseGrid, data.pop("phases", None), "phases")
        or PhaseGrid(),
        analysis=_build_section(AnalysisParams, data.pop("analysis", None),
                                "analysis") or AnalysisParams(),
        input_map=data.pop("input_map", None),
        seed=int(data.pop("seed", 0)),
        workers=int(data.pop("workers", 1)),
        output_dir=str(data.pop("output_dir", "out")),
    )
    if data:
        raise ConfigError(f"unknown field '{sorted(data)[0]}'")
    return cfg.validate()


def load_config(path=None, preset=None, overrides=None) -> RunConfig:
    """Build a RunConfig from a preset and/or YAML file plus dotted-key
    overrides (CLI flags win over the file, the file over the preset)."""
    data: dict = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(
                f"unknown preset {preset!r}; available: {sorted(PRESETS)}")
        data = json.loads(json.dumps(PRESETS[preset]))
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            loaded = yaml.safe_load(fh)
        if loaded is None:
            loaded = {}
        _deep_update(data, loaded)
    for key, val in (overrides or {}).items():
        _set_dotted(data, key, val)
    return config_from_dict(data)


def _deep_update(base: dict, extra: dict):
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(base.get(key), dict):
            _deep_update(base[key], val)
        else:
            base[key] = val


def _set_dotted(data: dict, dotted: str, value):
    keys = dotted.split(".")
    node = data
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot override through non-mapping '{key}'")
    node[keys[-1]] = value


def config_to_dict(cfg: RunConfig) -> dict:
    def _clean(obj):
        if isinstance(obj, enum.Enum):
            return obj.value
        if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
            return {k: _clean(v) for k, v in dataclasses.asdict(obj).items()}
        if isinstance(obj, dict):
            return {k: _clean(v) for k, v in obj.items()}
        if isinstance(obj, (list, tuple)):
            return [_clean(v) for v in obj]
        return obj

    out = {"config_version": CONFIG_VERSION, "mode": cfg.mode.value}
    for name in ("pulse", "smm", "tdse", "phases", "analysis"):
        val = getattr(cfg, name)
        if val is not None:
            out[name] = _clean(val)
    if cfg.input_map:
        out["input_map"] = cfg.input_map
    out.update(seed=cfg.seed, workers=cfg.workers, output_dir=cfg.output_dir)
    return out


# ---------------------------------------------------------------------------
# map file format


def write_map(smap: SpectrumMap, path, provenance: dict | None = None):
    """Layout: provenance header lines ('# key: value', JSON for the config),
    then a CSV matrix with energies in the first row and phases in the first
    column.  Floats use shortest round-trip formatting, so read(write(x))
    is bit exact."""
    lines = [f"# mapfile-version: {MAPFILE_VERSION}",
             "# units: energy=eV phase=rad counts=arb"]
    if provenance is not None:
        lines.append("# provenance: " + json.dumps(provenance, sort_keys=True))
    header = "phase\\energy," + ",".join(repr(e) for e in smap.energies.tolist())
    lines.append(header)
    for ce, row in zip(smap.ce_phases.tolist(), smap.counts):
        lines.append(repr(ce) + "," + ",".join(repr(v) for v in row.tolist()))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_map(path):
    """Read a map file; returns (SpectrumMap, provenance dict or None)."""
    provenance = None
    rows = []
    energies = None
    phases = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if body.startswith("provenance:"):
                    provenance = json.loads(body[len("provenance:"):])
                elif body.startswith("mapfile-version:"):
                    ver = int(body.split(":", 1)[1])
                    if ver != MAPFILE_VERSION:
                        raise IngestError(f"unsupported mapfile version {ver}")
                continue
            cells = line.split(",")
            if energies is None:
                if not cells[0].startswith("phase"):
                    raise IngestError(f"line {lineno}: missing map header row")
                energies = np.array([float(c) for c in cells[1:]])
                continue
            try:
                phases.append(float(cells[0]))
                rows.append([float(c) for c in cells[1:]])
            except ValueError as exc:
                raise IngestError(f"line {lineno}: {exc}") from exc
    if energies is None or not rows:
        raise IngestError(f"{path}: no map data found")
    return SpectrumMap(np.array(phases), energies, np.array(rows)), provenance


def _atomic_write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


# ---------------------------------------------------------------------------
# CSV export

_FMT = "{:.12g}"


def _table_csv(path, header_cells, rows):
    lines = [",".join(header_cells)]
    for row in rows:
        lines.append(",".join(_FMT.format(v) for v in row))
    _atomic_write_text(path, "\n".join(lines) + "\n")


def export_csv(result, path):
    """Write a result object as UTF-8 CSV with a units header row.

    Dispatches on type: Spectrum, SpectrumMap (map layout, bit-exact),
    RetardationCurve, PopulationTrace, a list of ModulationResult, or a
    (phases, values, label) tuple for per-phase series.
    """
    if isinstance(result, SpectrumMap):
        write_map(result, path)
    elif isinstance(result, Spectrum):
        _table_csv(path, ["energy_eV", "counts_arb"],
                   zip(result.energies.tolist(), result.values.tolist()))
    elif isinstance(result, RetardationCurve):
        _table_csv(path, ["energy_eV", "counts_per_s"],
                   zip(result.energy.tolist(), result.counts.tolist()))
    elif isinstance(result, PopulationTrace):
        _table_csv(path, ["time_s", "population"],
                   zip(result.times.tolist(), result.population.tolist()))
    elif isinstance(result, list) and all(
            isinstance(r, spectra.ModulationResult) for r in result):
        _table_csv(path, ["energy_eV", "depth", "depth_error"],
                   [(r.energy, r.depth, r.depth_error) for r in result])
    elif isinstance(result, tuple) and len(result) == 3:
        phases, values, label = result
        _table_csv(path, ["ce_phase_rad", label],
                   zip(np.asarray(phases).tolist(), np.asarray(values).tolist()))
    else:
        raise TypeError(f"no CSV exporter for {type(result)!r}")


# ---------------------------------------------------------------------------
# retardation-curve ingestion


def ingest_retardation(path, calibration: float = 5.2):
    """Read two-column (energy, counts) CSV with optional blank-line-separated
    repeat blocks; average the blocks point-wise and shift the energy origin
    to the vacuum level (calibration = vacuum level above the raw origin,
    eV).

    Returns (average: RetardationCurve, blocks: list of RetardationCurve).
    """
    blocks = []
    current_e, current_c = [], []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                if current_e:
                    blocks.append((current_e, current_c))
                    current_e, current_c = [], []
                continue
            if line.startswith("#") or line.lower().startswith("energy"):
                continue
            cells = line.replace(";", ",").split(",")
            if len(cells) < 2:
                raise IngestError(f"{path}:{lineno}: expected two columns")
            try:
                current_e.append(float(cells[0]))
                current_c.append(float(cells[1]))
            except ValueError as exc:
                raise IngestError(f"{path}:{lineno}: {exc}") from exc
    if current_e:
        blocks.append((current_e, current_c))
    if not blocks:
        raise IngestError(f"{path}: no data rows")
    n0 = len(blocks[0][0])
    for i, (e, _) in enumerate(blocks):
        if len(e) != n0:
            raise IngestError(
                f"{path}: block {i + 1} has {len(e)} rows, expected {n0}")
    e0 = np.array(blocks[0][0])
    for i, (e, _) in enumerate(blocks[1:], start=2):
        if not np.allclose(e, e0, rtol=1e-9, atol=1e-12):
            raise IngestError(f"{path}: block {i} energy grid differs from block 1")
    steps = np.diff(e0)
    if len(steps) and np.max(np.abs(steps - steps.mean())) > 0.01 * abs(steps.mean()):
        raise IngestError(f"{path}: energy grid not uniform within 1%")
    counts = np.mean([c for _, c in blocks], axis=0)
    energy = e0 - calibration
    avg = RetardationCurve(energy=energy, counts=counts)
    out_blocks = [RetardationCurve(energy=energy, counts=np.asarray(c, dtype=float))
                  for _, c in blocks]
    return avg, out_blocks


# ---------------------------------------------------------------------------
# orchestration


def analyze_map(smap: SpectrumMap, ap: AnalysisParams):
    """Standard derived analyses of one map: modulation depth vs energy,
    visibility vs phase, cut-off vs phase (common threshold from the
    phase-averaged spectrum)."""
    work = spectra.smooth_phase_axis(smap) if ap.smooth_phase else smap
    mods = spectra.modulation_profile(work, half_width=ap.modulation_half_width)
    vis = spectra.visibility_vs_phase(work, ap.plateau, ap.n_peaks,
                                      peak_spacing=ap.peak_spacing,
                                      presmooth=ap.presmooth_peaks)
    # cut-off protocol: common windows and one threshold across phases
    # (the retarding-spectrometer procedure); when the map's spectral edge
    # is too hard or mobile for a common window, track each row's edge at
    # a fractional threshold instead
    avg = work.phase_average()
    steep_ref = shallow_ref = None
    threshold = None
    cuts = None
    if ap.steep_window is not None and ap.shallow_window is not None:
        steep_ref, shallow_ref = ap.steep_window, ap.shallow_window
        threshold = spectra.suggest_threshold(avg, ap.plateau,
                                              ap.cutoff_threshold_fraction)
        cuts = spectra.cutoff_vs_phase(work, steep_ref, shallow_ref, threshold)
    else:
        try:
            steep_ref, shallow_ref = spectra.suggest_cutoff_windows(avg, ap.plateau)
            threshold = spectra.suggest_threshold(avg, ap.plateau,
                                                  ap.cutoff_threshold_fraction)
            # keep the common threshold inside the steep fit's dynamic range
            k, b = spectra._log_linear_fit(avg.energies, avg.values,
                                           steep_ref, "steep")
            f_hi = math.exp(b - k * steep_ref[1])
            f_lo = math.exp(b - k * steep_ref[0])
            if not f_hi <= threshold <= f_lo:
                threshold = math.sqrt(f_hi * f_lo)
            cuts = spectra.cutoff_vs_phase(work, steep_ref, shallow_ref,
                                           threshold)
        except (AnalysisError, spectra.FitError) as _exc:
            cuts = None
        if cuts is None:
            steep_ref = shallow_ref = None
            threshold = None
            cuts = spectra.cutoff_vs_phase(
                work, None, None, None, plateau=ap.plateau,
                threshold_fraction=ap.cutoff_threshold_fraction)
    return {"map": work, "modulation": mods, "visibility": vis,
            "cutoff": cuts, "windows": (steep_ref, shallow_ref),
            "threshold": threshold}


def run(cfg: RunConfig) -> dict:
    """Execute a configured run and write its artifacts.

    Returns a dict of output paths.  Output files are written atomically;
    on failure nothing is left half-written (a partially produced directory
    may contain earlier completed artifacts of the same run).
    """
    cfg.validate()
    out_dir = Path(os.environ.get(OUTPUT_DIR_ENV) or cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    provenance = config_to_dict(cfg)
    paths = {}

    traces = None
    if cfg.mode is RunMode.SMM_SCAN:
        smap = smm.phase_scan(cfg.pulse, cfg.phases.values(), cfg.smm,
                              workers=cfg.workers)
    elif cfg.mode is RunMode.TDSE_SCAN:
        smap, traces = tdse.phase_scan_tdse(
            cfg.tdse, cfg.pulse, cfg.phases.values(), workers=cfg.workers,
            collect_traces=True)
    else:
        smap, _prov = read_map(cfg.input_map)

    if cfg.mode is not RunMode.ANALYZE:
        map_path = out_dir / "map.csv"
        write_map(smap, map_path, provenance)
        paths["map"] = map_path

    results = analyze_map(smap, cfg.analysis)
    export_csv(results["modulation"], out_dir / "modulation_vs_energy.csv")
    export_csv((smap.ce_phases, results["visibility"], "visibility"),
               out_dir / "visibility_vs_phase.csv")
    export_csv((smap.ce_phases, results["cutoff"], "cutoff_eV"),
               out_dir / "cutoff_vs_phase.csv")
    paths.update({
        "modulation": out_dir / "modulation_vs_energy.csv",
        "visibility": out_dir / "visibility_vs_phase.csv",
        "cutoff": out_dir / "cutoff_vs_phase.csv",
    })
    if traces is not None:
        rows = []
        for ce, trace in zip(smap.ce_phases.tolist(), traces):
            rows.extend((ce, t, p) for t, p in
                        zip(trace.times.tolist(), trace.population.tolist()))
        _table_csv(out_dir / "population_trace.csv",
                   ["ce_phase_rad", "time_s", "population"], rows)
        paths["population"] = out_dir / "population_trace.csv"
    return paths
