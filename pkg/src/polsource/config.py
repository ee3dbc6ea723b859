"""Scenario configuration: JSON with unit-suffixed fields.

The schema lives in pydantic models (unknown keys rejected, types checked);
``build_*`` helpers turn a validated :class:`ScenarioConfig` into the SI
domain objects used elsewhere in the package.
"""

from __future__ import annotations

import hashlib
import json
from importlib import resources
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import counting as ct
from . import spdc_model as sm
from .errors import ConfigurationError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class PolarizationDispersion(_Strict):
    beta1_ps_per_mm: float
    beta2_fs2_per_mm: float


class ProcessConfig(_Strict):
    pm_wavelength_nm: float = Field(gt=0)
    efficiency_pairs_per_photon: float = Field(ge=0)
    detuning_slope_rad_per_m_per_nm: float


class WaveguideConfig(_Strict):
    length_mm: float = Field(1.05, gt=0)
    loss_te_per_cm: float = Field(0.0, ge=0)
    loss_tm_per_cm: float = Field(0.0, ge=0)
    dispersion: dict[Literal["H", "V"], PolarizationDispersion]
    processes: dict[Literal["type0", "typeI", "typeII"], ProcessConfig]


class PumpConfig(_Strict):
    wavelength_nm: float = Field(gt=0)
    polarization: Literal["TE", "TM"] = "TM"
    internal_power_uw: float = Field(47.3, ge=0)


class GridConfig(_Strict):
    n_samples: int = Field(4096, ge=2)
    half_span_rad_per_ps: float = Field(240.0, gt=0)


class FilterConfig(_Strict):
    bandwidth_nm: float = Field(gt=0)
    center_nm: Optional[float] = None  # None: degenerate wavelength of the pump


class DetectorConfig(_Strict):
    efficiency: float = Field(ge=0, le=1)
    dark_rate_hz: float = Field(0.0, ge=0)
    dead_time_us: float = Field(0.0, ge=0)
    mode: Literal["free-running", "gated"] = "free-running"
    gate_width_ns: float = Field(20.0, gt=0)


class DetectorsConfig(_Strict):
    det1: DetectorConfig
    det2: DetectorConfig


class OpticalPathConfig(_Strict):
    objective: float = Field(0.90, ge=0, le=1)
    longpass: float = Field(0.70, ge=0, le=1)
    beamsplitter: float = Field(0.43, ge=0, le=0.5)
    analyzer: float = Field(0.75, ge=0, le=1)
    fiber1: float = Field(0.53, ge=0, le=1)
    fiber2: float = Field(0.34, ge=0, le=1)


class CountingConfig(_Strict):
    pair_rate_hz: float = Field(3.4e4, ge=0)
    duration_s: float = Field(180.0, gt=0)
    bin_width_ns: float = Field(0.05, gt=0)
    span_ns: float = Field(20.0, gt=0)
    window_ns: float = Field(0.5, gt=0)
    electronic_delay_ns: float = 0.0


class TomographyConfig(_Strict):
    pair_flux_hz: float = Field(1.5, gt=0)
    background_hz: float = Field(0.012, ge=0)
    time_s: float = Field(180.0, gt=0)
    bootstrap_resamples: int = Field(100, ge=10)
    n_starts: int = Field(8, ge=1)


class ScanConfig(_Strict):
    ratio: Optional[float] = Field(None, gt=0)
    offset_min_nm: float = -2.0
    offset_max_nm: float = 0.5
    step_nm: float = Field(0.01, gt=0)


class ScenarioConfig(_Strict):
    name: str = "scenario"
    seed: int = Field(7, ge=0)
    waveguide: WaveguideConfig
    pump: PumpConfig
    grid: GridConfig = GridConfig()
    filter: Optional[FilterConfig] = None
    detectors: Optional[DetectorsConfig] = None
    optical_path: OpticalPathConfig = OpticalPathConfig()
    counting: CountingConfig = CountingConfig()
    tomography: TomographyConfig = TomographyConfig()
    scan: ScanConfig = ScanConfig()

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def sha256(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def _line_of(text: str, loc: tuple) -> int | None:
    """Best-effort line number of the last key in ``loc``."""
    keys = [k for k in loc if isinstance(k, str)]
    if not keys:
        return None
    needle = f'"{keys[-1]}"'
    for n, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return n
    return None


def parse_config(text: str, source: str = "<config>") -> ScenarioConfig:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{source}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        cfg = ScenarioConfig.model_validate(data)
    except ValidationError as exc:
        msgs = []
        for err in exc.errors():
            field = ".".join(str(p) for p in err["loc"])
            line = _line_of(text, err["loc"])
            where = f"{source}:{line}" if line else source
            msgs.append(f"{where}: {field}: {err['msg']}")
        raise ConfigurationError("\n".join(msgs)) from None
    # surface domain-level invariants as configuration errors too
    build_waveguide(cfg)
    if cfg.detectors is not None:
        build_detectors(cfg)
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from None
    return parse_config(text, str(path))


def dump_config(cfg: ScenarioConfig) -> str:
    return json.dumps(cfg.model_dump(mode="json"), indent=2) + "\n"


def example_config_path(name: str) -> Path:
    """Path of a shipped example config, e.g. ``"device_1p05mm"``."""
    ref = resources.files("polsource") / "configs" / f"{name.removesuffix('.json')}.json"
    return Path(str(ref))


def load_example(name: str) -> ScenarioConfig:
    return load_config(example_config_path(name))


# -- builders ---------------------------------------------------------------------


def build_waveguide(cfg: ScenarioConfig) -> sm.WaveguideSpec:
    wg = cfg.waveguide
    try:
        disp = sm.DispersionParams(
            beta1={p: d.beta1_ps_per_mm * 1e-9 for p, d in wg.dispersion.items()},
            beta2={p: d.beta2_fs2_per_mm * 1e-27 for p, d in wg.dispersion.items()},
        )
        procs = {
            sm.ProcessKind.parse(k): sm.ProcessParams(
                p.pm_wavelength_nm, p.efficiency_pairs_per_photon, p.detuning_slope_rad_per_m_per_nm
            )
            for k, p in wg.processes.items()
        }
        return sm.WaveguideSpec(
            length=wg.length_mm * 1e-3,
            loss_te=wg.loss_te_per_cm * 100,
            loss_tm=wg.loss_tm_per_cm * 100,
            processes=procs,
            dispersion=disp,
        )
    except (ValueError, ConfigurationError) as exc:
        raise ConfigurationError(f"waveguide: {exc}") from None


def build_grid(cfg: ScenarioConfig, pump_wavelength_nm: float | None = None) -> sm.SpectralGrid:
    lam = cfg.pump.wavelength_nm if pump_wavelength_nm is None else pump_wavelength_nm
    try:
        return sm.SpectralGrid.for_pump(lam, cfg.grid.half_span_rad_per_ps * 1e12, cfg.grid.n_samples)
    except ValueError as exc:
        raise ConfigurationError(f"grid: {exc}") from None


def build_filter(cfg: ScenarioConfig, pump_wavelength_nm: float | None = None) -> sm.FilterSpec | None:
    if cfg.filter is None:
        return None
    lam = cfg.pump.wavelength_nm if pump_wavelength_nm is None else pump_wavelength_nm
    center = cfg.filter.center_nm if cfg.filter.center_nm is not None else 2 * lam
    return sm.FilterSpec(center, cfg.filter.bandwidth_nm)


def _detector(d: DetectorConfig) -> ct.DetectorModel:
    return ct.DetectorModel(d.efficiency, d.dark_rate_hz, d.dead_time_us * 1e-6, d.mode, d.gate_width_ns * 1e-9)


def build_detectors(cfg: ScenarioConfig) -> tuple[ct.DetectorModel, ct.DetectorModel]:
    if cfg.detectors is None:
        raise ConfigurationError("detectors: section required for this command")
    try:
        return _detector(cfg.detectors.det1), _detector(cfg.detectors.det2)
    except ValueError as exc:
        raise ConfigurationError(f"detectors: {exc}") from None


def build_path(cfg: ScenarioConfig) -> ct.OpticalPath:
    return ct.OpticalPath(**cfg.optical_path.model_dump())


def build_histogram_config(cfg: ScenarioConfig) -> ct.HistogramConfig:
    c = cfg.counting
    try:
        return ct.HistogramConfig(c.bin_width_ns * 1e-9, c.span_ns * 1e-9, c.window_ns * 1e-9, c.electronic_delay_ns * 1e-9)
    except ValueError as exc:
        raise ConfigurationError(f"counting: {exc}") from None
