"""Phase matching and joint spectral amplitudes of waveguide SPDC.

Under a monochromatic CW pump the pair spectrum depends on one variable,
the detuning ``Omega`` of the signal photon from the degenerate angular
frequency ``omega0`` (the idler sits at ``omega0 - Omega``).  The phase
mismatch is expanded to second order around degeneracy::

    dk(Omega) = dk0 - (b1_s - b1_i) * Omega - (b2_s + b2_i) / 2 * Omega**2
    dk0       = s_p * (lambda_pump - lambda_pm)

and the amplitude is the z-integral of ``exp(i dk z)`` over the device,
``exp(i dk L / 2) * sinc(dk L / 2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .errors import ConfigurationError, DegenerateFilterError

C_LIGHT = 299_792_458.0  # m/s

#: Edge intensity (relative to peak) above which a grid counts as truncated.
TRUNCATION_LEVEL = 1e-3


class ProcessKind(Enum):
    TYPE0 = "type0"
    TYPE_I = "typeI"
    TYPE_II = "typeII"

    @property
    def polarizations(self) -> tuple[str, str]:
        """(signal, idler) polarization; H is TE, V is TM."""
        return {
            ProcessKind.TYPE0: ("V", "V"),
            ProcessKind.TYPE_I: ("H", "H"),
            ProcessKind.TYPE_II: ("H", "V"),
        }[self]

    @property
    def channel(self) -> str:
        return "".join(self.polarizations)

    @property
    def co_polarized(self) -> bool:
        s, i = self.polarizations
        return s == i

    @classmethod
    def parse(cls, value: "str | ProcessKind") -> "ProcessKind":
        if isinstance(value, cls):
            return value
        for kind in cls:
            if value.lower() in (kind.value.lower(), kind.name.lower()):
                return kind
        raise ConfigurationError(f"unknown SPDC process {value!r}")


@dataclass(frozen=True)
class DispersionParams:
    """Group slowness (s/m) and GVD (s^2/m) per down-converted polarization."""

    beta1: dict[str, float]
    beta2: dict[str, float]

    def __post_init__(self):
        for name, table in (("beta1", self.beta1), ("beta2", self.beta2)):
            if set(table) != {"H", "V"}:
                raise ConfigurationError(f"{name} needs exactly the keys H and V")
            if not all(np.isfinite(v) for v in table.values()):
                raise ConfigurationError(f"{name} values must be finite")
        if all(v == 0.0 for v in self.beta2.values()):
            raise ConfigurationError("beta2 must be nonzero for at least one polarization")


@dataclass(frozen=True)
class ProcessParams:
    """Per-process phase-matching data.

    ``detuning_slope`` is d(dk0)/d(lambda_pump) in rad/m per nm.  It must be
    nonzero; with normal dispersion it is negative (the pump is slower than
    the down-converted photons, so dk0 falls as the pump wavelength grows).
    """

    pm_wavelength_nm: float
    efficiency: float
    detuning_slope: float

    def __post_init__(self):
        if self.efficiency < 0:
            raise ConfigurationError("efficiency must be >= 0")
        if self.pm_wavelength_nm <= 0:
            raise ConfigurationError("PM wavelength must be positive")
        if not np.isfinite(self.detuning_slope) or self.detuning_slope == 0:
            raise ConfigurationError("detuning slope must be finite and nonzero")


@dataclass(frozen=True)
class WaveguideSpec:
    length: float = 1.05e-3
    loss_te: float = 0.0
    loss_tm: float = 0.0
    processes: dict[ProcessKind, ProcessParams] = field(default_factory=dict)
    dispersion: DispersionParams = field(
        default_factory=lambda: DispersionParams({"H": 0.0, "V": 0.0}, {"H": 1e-24, "V": 1e-24})
    )

    def __post_init__(self):
        if self.length <= 0:
            raise ConfigurationError("waveguide length must be positive")
        if self.loss_te < 0 or self.loss_tm < 0:
            raise ConfigurationError("propagation losses must be >= 0")

    def process(self, kind: ProcessKind) -> ProcessParams:
        try:
            return self.processes[kind]
        except KeyError:
            raise ConfigurationError(f"process {kind.value} is not declared for this waveguide") from None

    def with_process(self, kind: ProcessKind, **changes) -> "WaveguideSpec":
        procs = dict(self.processes)
        procs[kind] = replace(self.process(kind), **changes)
        return replace(self, processes=procs)


@dataclass(frozen=True)
class SpectralGrid:
    """Uniform grid of signal detunings, exactly symmetric about zero."""

    omega0: float
    half_span: float
    n: int = 4096

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("grid needs at least two samples")
        if not 0 < self.half_span < self.omega0:
            raise ValueError("half span must lie in (0, omega0)")

    @classmethod
    def for_pump(cls, pump_wavelength_nm: float, half_span: float, n: int = 4096) -> "SpectralGrid":
        return cls(omega0=np.pi * C_LIGHT / (pump_wavelength_nm * 1e-9), half_span=half_span, n=n)

    @property
    def step(self) -> float:
        return 2.0 * self.half_span / (self.n - 1)

    @property
    def omega(self) -> np.ndarray:
        # half-integer offsets are exact in binary, so omega[::-1] == -omega bitwise
        return (np.arange(self.n) - (self.n - 1) / 2.0) * self.step

    @property
    def degenerate_wavelength_nm(self) -> float:
        return 2e9 * np.pi * C_LIGHT / self.omega0

    def wavelength_nm(self, sign: int = 1) -> np.ndarray:
        """Wavelength of the signal (sign=+1) or idler (sign=-1) photon."""
        return 2e9 * np.pi * C_LIGHT / (self.omega0 + sign * self.omega)


@dataclass(frozen=True, eq=False)
class JointAmplitude:
    """Complex spectral amplitude of one polarization channel.

    ``weight`` is the quadrature of the un-normalized ``|sinc|^2`` (rad/s),
    i.e. the relative spectral brightness that normalization removes.
    """

    channel: str
    grid: SpectralGrid
    values: np.ndarray
    normalized: bool = True
    weight: float = 1.0
    truncated: bool = False

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.values) ** 2

    def norm(self) -> float:
        return float(np.trapezoid(self.intensity, dx=self.grid.step))

    def reflected(self, channel: str | None = None) -> "JointAmplitude":
        """Swap the roles of signal and idler: Omega -> -Omega."""
        return replace(self, channel=channel or self.channel[::-1], values=self.values[::-1].copy())


@dataclass(frozen=True)
class FilterSpec:
    """Ideal rectangular band-pass acting on both photons."""

    center_nm: float
    bandwidth_nm: float
    shape: str = "rectangular"

    def __post_init__(self):
        if self.bandwidth_nm <= 0:
            raise ValueError("filter bandwidth must be positive")
        if self.shape != "rectangular":
            raise ValueError(f"unsupported filter shape {self.shape!r}")

    def transmission(self, wavelength_nm: np.ndarray) -> np.ndarray:
        return (np.abs(np.asarray(wavelength_nm) - self.center_nm) <= self.bandwidth_nm / 2).astype(float)


def pump_mismatch(process: ProcessKind, pump_wavelength_nm, spec: WaveguideSpec):
    """Degenerate mismatch dk0 (rad/m); affine in the pump wavelength."""
    p = spec.process(process)
    return p.detuning_slope * (np.asarray(pump_wavelength_nm, dtype=float) - p.pm_wavelength_nm)


def phase_mismatch(process: ProcessKind, omega, pump_wavelength_nm: float, spec: WaveguideSpec):
    """Phase mismatch dk(Omega) in rad/m for signal detuning ``omega`` (rad/s)."""
    process = ProcessKind.parse(process)
    s, i = process.polarizations
    b1, b2 = spec.dispersion.beta1, spec.dispersion.beta2
    omega = np.asarray(omega, dtype=float)
    linear = 0.0 if s == i else (b1[s] - b1[i])
    return (
        pump_mismatch(process, pump_wavelength_nm, spec)
        - linear * omega
        - 0.5 * (b2[s] + b2[i]) * omega**2
    )


def _sinc(x):
    # np.sinc is sin(pi x)/(pi x) with the exact limit 1 at 0
    return np.sinc(np.asarray(x) / np.pi)


def _raw_amplitude(process, grid, pump_wavelength_nm, spec):
    x = phase_mismatch(process, grid.omega, pump_wavelength_nm, spec) * spec.length / 2
    return np.exp(1j * x) * _sinc(x)


def _is_truncated(intensity: np.ndarray) -> bool:
    peak = intensity.max()
    return bool(peak > 0 and max(intensity[0], intensity[-1]) > TRUNCATION_LEVEL * peak)


def joint_amplitude(
    process: ProcessKind, grid: SpectralGrid, pump_wavelength_nm: float, spec: WaveguideSpec
) -> JointAmplitude:
    """Normalized amplitude of ``process``; for type-II this is the HV channel."""
    process = ProcessKind.parse(process)
    raw = _raw_amplitude(process, grid, pump_wavelength_nm, spec)
    weight = float(np.trapezoid(np.abs(raw) ** 2, dx=grid.step))
    return JointAmplitude(
        channel=process.channel,
        grid=grid,
        values=raw / np.sqrt(weight),
        weight=weight,
        truncated=_is_truncated(np.abs(raw) ** 2),
    )


def type_ii_channels(grid: SpectralGrid, pump_wavelength_nm: float, spec: WaveguideSpec):
    """(HV, VH) amplitudes; VH is the exact reflection of HV."""
    hv = joint_amplitude(ProcessKind.TYPE_II, grid, pump_wavelength_nm, spec)
    return hv, hv.reflected("VH")


def relative_efficiency(
    process: ProcessKind, grid: SpectralGrid, pump_wavelength_nm: float, spec: WaveguideSpec
) -> float:
    """Pair yield at ``pump_wavelength_nm`` relative to pumping at exact PM."""
    process = ProcessKind.parse(process)
    on_pm = joint_amplitude(process, grid, spec.process(process).pm_wavelength_nm, spec)
    here = joint_amplitude(process, grid, pump_wavelength_nm, spec)
    return here.weight / on_pm.weight


def spectral_intensity(amps: list[JointAmplitude]) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Peak-normalized intensity against signal wavelength, per channel."""
    if not amps:
        return {}
    grid = amps[0].grid
    if any(a.grid != grid for a in amps):
        raise ValueError("amplitudes must share one grid")
    wl = grid.wavelength_nm()
    out = {}
    for a in amps:
        inten = a.intensity
        peak = inten.max()
        out[a.channel] = (wl, inten / peak if peak > 0 else inten)
    return out


def shg_tuning_curve(
    process: ProcessKind,
    wavelength_range: tuple[float, float],
    n_points: int,
    spec: WaveguideSpec,
    axis: str = "fundamental",
) -> np.ndarray:
    """Normalized SHG efficiency ``sinc^2(dk0 L / 2)`` over a wavelength range.

    With ``axis="fundamental"`` the range is the fundamental (input)
    wavelength, whose second harmonic plays the pump role, so the peak sits at
    twice the pump PM wavelength.  ``axis="pump"`` evaluates the mismatch
    directly at each wavelength of the range.

    Returns an ``(n_points, 2)`` array of (wavelength, efficiency).
    """
    lo, hi = wavelength_range
    if n_points < 1 or not hi > lo:
        raise ValueError("empty wavelength range")
    if axis not in ("fundamental", "pump"):
        raise ValueError(f"unknown axis {axis!r}")
    process = ProcessKind.parse(process)
    lam = np.linspace(lo, hi, n_points)
    pump = lam / 2 if axis == "fundamental" else lam
    eff = _sinc(pump_mismatch(process, pump, spec) * spec.length / 2) ** 2
    return np.column_stack([lam, eff])


def _band_interval(grid: SpectralGrid, filt: FilterSpec) -> tuple[float, float]:
    """Detuning interval where both photons fall inside the band."""
    two_pi_c = 2e9 * np.pi * C_LIGHT
    lo, hi = filt.center_nm - filt.bandwidth_nm / 2, filt.center_nm + filt.bandwidth_nm / 2
    # photon at omega0 + Omega is in band for Omega in [a, b]; the partner needs -Omega in [a, b]
    a = two_pi_c / hi - grid.omega0
    b = two_pi_c / lo - grid.omega0 if lo > 0 else np.inf
    return max(a, -b), min(b, -a)


def apply_filter(amp: JointAmplitude, filt: FilterSpec) -> tuple[JointAmplitude, float]:
    """Zero every sample where either photon falls outside the band.

    Returns the renormalized amplitude and the fraction of ``|Phi|^2`` that
    survived.  The output weight is scaled by that fraction so that filtered
    brightness stays comparable between channels.

    The two cells straddling a band edge keep the square root of their
    in-band length fraction, so ``|Phi|^2`` quadratures integrate the ideal
    rectangle exactly at cell level and converge smoothly with grid size.
    """
    grid = amp.grid
    a, b = _band_interval(grid, filt)
    h = grid.step
    om = grid.omega
    cover = np.clip((np.minimum(om + h / 2, b) - np.maximum(om - h / 2, a)) / h, 0.0, 1.0)
    kept = amp.values * np.sqrt(cover)
    total = amp.norm()
    surviving = float(np.trapezoid(np.abs(kept) ** 2, dx=h))
    if surviving <= 0.0:
        raise DegenerateFilterError(f"filter {filt} passes none of channel {amp.channel}")
    fraction = min(surviving / total, 1.0)
    return (
        replace(amp, values=kept / np.sqrt(surviving), weight=amp.weight * fraction, normalized=True),
        fraction,
    )


def overlap(a: JointAmplitude, b: JointAmplitude) -> complex:
    """Spectral overlap integral ``sum a * conj(b) dOmega`` (trapezoid)."""
    if a.grid != b.grid:
        raise ValueError("amplitudes live on different grids")
    return complex(np.trapezoid(a.values * np.conj(b.values), dx=a.grid.step))
