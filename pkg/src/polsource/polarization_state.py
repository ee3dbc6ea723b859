"""Two-qubit polarization states built from rates and spectral overlaps.

Density matrices are plain ``(4, 4)`` complex arrays in the basis order
``BASIS``.  Tracing the spectral degree of freedom out of the biphoton state
leaves the channel weights on the diagonal and ``sqrt(w_a w_b) * overlap`` as
the coherence between them.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import spdc_model as sm
from .errors import ConfigurationError, DegenerateSourceError, InvalidStateError

BASIS = ("HH", "HV", "VH", "VV")
HH, HV, VH, VV = range(4)

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-9

_SY = np.array([[0, -1j], [1j, 0]])
_SPIN_FLIP = np.kron(_SY, _SY)


@dataclass(frozen=True)
class SourceRates:
    strong: float
    weak: float

    def __post_init__(self):
        if self.strong < 0 or self.weak < 0:
            raise ValueError("rates must be >= 0")
        if self.strong == 0 and self.weak == 0:
            raise DegenerateSourceError("both generation rates are zero")

    @property
    def ratio(self) -> float:
        return self.strong / self.weak if self.weak else np.inf


@dataclass(frozen=True)
class BellFidelityResult:
    fidelity: float
    phi_deg: float
    family: str


def validate(rho, tol: float = PSD_TOL) -> np.ndarray:
    """Return a cleaned copy of ``rho`` or raise :class:`InvalidStateError`.

    Slightly negative eigenvalues (down to ``-tol``) are clipped and the
    matrix renormalized.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.shape != (4, 4):
        raise InvalidStateError(f"expected a 4x4 matrix, got {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > HERMITIAN_TOL * max(1.0, np.abs(rho).max()):
        raise InvalidStateError("matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > TRACE_TOL or abs(np.trace(rho).imag) > TRACE_TOL:
        raise InvalidStateError(f"trace {np.trace(rho)} != 1")
    rho = 0.5 * (rho + rho.conj().T)
    w, v = np.linalg.eigh(rho)
    if w.min() < -tol:
        raise InvalidStateError(f"matrix has eigenvalue {w.min():.3e} < -{tol:g}")
    if w.min() < 0:
        w = np.clip(w, 0.0, None)
        w /= w.sum()
        rho = (v * w) @ v.conj().T
    return rho


def state_concurrent(eta_i: float, eta_0: float, phi_hh: sm.JointAmplitude, phi_vv: sm.JointAmplitude) -> np.ndarray:
    """Polarization state of concurrent type-I (HH) and type-0 (VV) pairs."""
    if eta_i < 0 or eta_0 < 0:
        raise ValueError("rates must be >= 0")
    total = eta_i + eta_0
    if total == 0:
        raise DegenerateSourceError("both generation rates are zero")
    rho = np.zeros((4, 4), dtype=complex)
    rho[HH, HH] = eta_i / total
    rho[VV, VV] = eta_0 / total
    rho[HH, VV] = np.sqrt(eta_i * eta_0) * sm.overlap(phi_hh, phi_vv) / total
    rho[VV, HH] = np.conj(rho[HH, VV])
    return rho


def state_type_ii(phi_hv: sm.JointAmplitude, phi_vh: sm.JointAmplitude) -> np.ndarray:
    rho = np.zeros((4, 4), dtype=complex)
    rho[HV, HV] = rho[VH, VH] = 0.5
    rho[HV, VH] = 0.5 * sm.overlap(phi_hv, phi_vh)
    rho[VH, HV] = np.conj(rho[HV, VH])
    return rho


def _psd_sqrt(rho):
    w, v = np.linalg.eigh(rho)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T


_RANK_CUT = 1e-14


def concurrence(rho) -> float:
    """Wootters concurrence.

    The ``lambda_i`` are taken as singular values of ``W^T (sy x sy) W`` with
    ``rho = W W^dagger``, which avoids squaring the spectrum.  Eigenvalues
    below ``_RANK_CUT`` (roundoff on rank-deficient states) are dropped first,
    since their square roots would otherwise leak in at the 1e-8 level.
    """
    rho = validate(rho)
    w, v = np.linalg.eigh(rho)
    w = np.where(w > _RANK_CUT * w.max(), w, 0.0)
    W = v * np.sqrt(w)
    lam = np.linalg.svd(W.T @ _SPIN_FLIP @ W, compute_uv=False)
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def _wrap_deg(phi: float) -> float:
    phi = (phi + 180.0) % 360.0 - 180.0
    return 180.0 if phi == -180.0 else phi


def bell_fidelity(rho, family: str = "phi") -> BellFidelityResult:
    """Maximum overlap with ``(|ab> + e^{i phi}|a'b'>)/sqrt(2)`` over phi.

    ``family="phi"`` uses the HH/VV pair, ``"psi"`` the HV/VH pair.
    """
    rho = validate(rho)
    i, j = {"phi": (HH, VV), "psi": (HV, VH)}[family]
    coh = rho[i, j]
    fid = 0.5 * (rho[i, i].real + rho[j, j].real) + abs(coh)
    phi = 0.0 if coh == 0 else _wrap_deg(-np.degrees(np.angle(coh)))
    return BellFidelityResult(float(min(fid, 1.0)), float(phi), family)


def purity(rho) -> float:
    rho = validate(rho)
    return float(np.real(np.trace(rho @ rho)))


def nonmax_state(r: float, phi_deg: float = 0.0) -> np.ndarray:
    """Pure state ``(|HH> + r e^{i phi}|VV>) / sqrt(1 + r^2)``."""
    if not np.isfinite(r) or r < 0:
        raise ValueError("r must be finite and >= 0")
    psi = np.zeros(4, dtype=complex)
    psi[HH] = 1.0
    psi[VV] = r * np.exp(1j * np.radians(phi_deg))
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def bell_state(family: str = "phi", phi_deg: float = 0.0) -> np.ndarray:
    i, j = {"phi": (HH, VV), "psi": (HV, VH)}[family]
    psi = np.zeros(4, dtype=complex)
    psi[i] = 1 / np.sqrt(2)
    psi[j] = np.exp(1j * np.radians(phi_deg)) / np.sqrt(2)
    return np.outer(psi, psi.conj())


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    root = _psd_sqrt(np.asarray(rho))
    w = np.linalg.eigvalsh(root @ np.asarray(sigma) @ root)
    return float(np.sum(np.sqrt(np.clip(w, 0.0, None))) ** 2)


def trace_distance(rho, sigma) -> float:
    return float(0.5 * np.sum(np.abs(np.linalg.eigvalsh(np.asarray(rho) - np.asarray(sigma)))))


def metrics(rho, family: str = "phi") -> dict:
    bf = bell_fidelity(rho, family)
    return {
        "concurrence": concurrence(rho),
        "fidelity": bf.fidelity,
        "phi_deg": bf.phi_deg,
        "family": family,
        "purity": purity(rho),
    }


def rho_to_dict(rho) -> dict:
    rho = np.asarray(rho, dtype=complex)
    return {
        "basis": list(BASIS),
        "rho": [[[float(z.real), float(z.imag)] for z in row] for row in rho],
    }


def rho_from_dict(data: dict) -> np.ndarray:
    if list(data.get("basis", [])) != list(BASIS):
        raise ValueError(f"density matrix basis must be {list(BASIS)}")
    arr = np.asarray(data["rho"], dtype=float)
    if arr.shape != (4, 4, 2):
        raise ValueError("density matrix must be 4x4 [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


# -- sources built from a waveguide --------------------------------------------


@dataclass(frozen=True, eq=False)
class SourceState:
    rho: np.ndarray
    rates: tuple[float, float]  # effective (after detuning and filtering)
    amplitudes: tuple[sm.JointAmplitude, sm.JointAmplitude]
    overlap: complex
    passed_fraction: tuple[float, float] = (1.0, 1.0)


def concurrent_source(
    spec: sm.WaveguideSpec,
    grid: sm.SpectralGrid,
    pump_wavelength_nm: float,
    filt: sm.FilterSpec | None = None,
) -> SourceState:
    """Type-I/type-0 state at a given pump wavelength.

    Each process contributes ``eta_p`` scaled by its yield relative to exact
    phase matching and, when filtered, by the fraction passing the filter.
    """
    rates, amps, passed = [], [], []
    for kind in (sm.ProcessKind.TYPE_I, sm.ProcessKind.TYPE0):
        p = spec.process(kind)
        amp = sm.joint_amplitude(kind, grid, pump_wavelength_nm, spec)
        ref = sm.joint_amplitude(kind, grid, p.pm_wavelength_nm, spec)
        frac = 1.0
        if filt is not None:
            amp, frac = sm.apply_filter(amp, filt)
        rates.append(p.efficiency * amp.weight / ref.weight)
        amps.append(amp)
        passed.append(frac)
    rho = state_concurrent(rates[0], rates[1], amps[0], amps[1])
    return SourceState(rho, tuple(rates), tuple(amps), sm.overlap(*amps), tuple(passed))


def type_ii_source(
    spec: sm.WaveguideSpec,
    grid: sm.SpectralGrid,
    pump_wavelength_nm: float,
    filt: sm.FilterSpec | None = None,
) -> SourceState:
    hv, vh = sm.type_ii_channels(grid, pump_wavelength_nm, spec)
    passed = (1.0, 1.0)
    if filt is not None:
        hv, f1 = sm.apply_filter(hv, filt)
        vh, f2 = sm.apply_filter(vh, filt)
        passed = (f1, f2)
    eta = spec.process(sm.ProcessKind.TYPE_II).efficiency
    return SourceState(state_type_ii(hv, vh), (eta / 2, eta / 2), (hv, vh), sm.overlap(hv, vh), passed)


# -- detuning optimization -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class DetuningScan:
    """Result of :func:`optimize_detuning`.

    ``curve`` columns: offset (nm), concurrence, fidelity, phi (deg),
    effective strong rate, effective weak rate.
    """

    best_offset_nm: float
    curve: np.ndarray
    strong: sm.ProcessKind
    weak: sm.ProcessKind
    pump_wavelength_nm: float
    spec: sm.WaveguideSpec

    COLUMNS = ("offset_nm", "concurrence", "fidelity", "phi_deg", "eta_strong", "eta_weak")

    def at(self, offset_nm: float) -> np.ndarray:
        return self.curve[np.argmin(np.abs(self.curve[:, 0] - offset_nm))]

    @property
    def best(self) -> np.ndarray:
        return self.at(self.best_offset_nm)

    def shifted_spec(self, offset_nm: float | None = None) -> sm.WaveguideSpec:
        off = self.best_offset_nm if offset_nm is None else offset_nm
        lam = self.spec.process(self.weak).pm_wavelength_nm + off
        return self.spec.with_process(self.strong, pm_wavelength_nm=lam)


def scan_offsets(lo: float = -2.0, hi: float = 0.5, step: float = 0.01) -> np.ndarray:
    n = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(n), 12)


def optimize_detuning(
    spec: sm.WaveguideSpec,
    ratio: float | None = None,
    filt: sm.FilterSpec | None = None,
    *,
    half_span: float,
    n: int = 4096,
    offsets: np.ndarray | None = None,
    threads: int = 1,
) -> DetuningScan:
    """Scan the PM wavelength of the stronger co-polarized process.

    ``ratio`` is eta_I / eta_0; when given it overrides the configured
    type-I efficiency.  The pump sits at the weaker process's PM wavelength
    and the stronger process's PM wavelength is set to that plus each offset.
    """
    kinds = (sm.ProcessKind.TYPE_I, sm.ProcessKind.TYPE0)
    if not all(k in spec.processes for k in kinds):
        raise ConfigurationError("detuning optimization needs both type-0 and type-I processes")
    if ratio is not None:
        if not ratio > 0:
            raise ValueError("ratio must be positive")
        spec = spec.with_process(
            sm.ProcessKind.TYPE_I, efficiency=ratio * spec.process(sm.ProcessKind.TYPE0).efficiency
        )
    eta_i = spec.process(sm.ProcessKind.TYPE_I).efficiency
    eta_0 = spec.process(sm.ProcessKind.TYPE0).efficiency
    strong, weak = kinds if eta_i >= eta_0 else kinds[::-1]
    pump = spec.process(weak).pm_wavelength_nm
    grid = sm.SpectralGrid.for_pump(pump, half_span, n)
    offsets = scan_offsets() if offsets is None else np.asarray(offsets, dtype=float)

    def evaluate(off):
        shifted = spec.with_process(strong, pm_wavelength_nm=pump + off)
        src = concurrent_source(shifted, grid, pump, filt)
        rate = dict(zip(kinds, src.rates))
        bf = bell_fidelity(src.rho)
        return (off, concurrence(src.rho), bf.fidelity, bf.phi_deg, rate[strong], rate[weak])

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(evaluate, offsets))
    else:
        rows = [evaluate(o) for o in offsets]
    curve = np.array(rows, dtype=float)
    best = float(curve[int(np.argmax(curve[:, 1])), 0])
    return DetuningScan(best, curve, strong, weak, pump, spec)


def weighted_tuning_curves(
    spec: sm.WaveguideSpec,
    pump_range_nm: tuple[float, float],
    n_pump: int,
    grid: sm.SpectralGrid,
) -> dict[str, np.ndarray]:
    """Efficiency-weighted ``|sinc|^2`` maps versus pump and signal wavelength.

    Returns ``pump_nm`` (n_pump,), ``signal_nm`` (grid.n,) and one
    ``(n_pump, grid.n)`` map per co-polarized channel, each scaled by the
    process efficiency (so the stronger process is brighter).
    """
    pumps = np.linspace(*pump_range_nm, n_pump)
    out = {"pump_nm": pumps, "signal_nm": grid.wavelength_nm()}
    for kind in (sm.ProcessKind.TYPE_I, sm.ProcessKind.TYPE0):
        eta = spec.process(kind).efficiency
        rows = [np.abs(sm._raw_amplitude(kind, grid, p, spec)) ** 2 * eta for p in pumps]
        out[kind.channel] = np.array(rows)
    return out
