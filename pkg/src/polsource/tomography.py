"""Two-qubit polarization tomography: count simulation and Poisson MLE.

The reconstruction follows the usual positive parametrization
``tau = T^dagger T`` with ``T`` lower triangular.  The trace of ``tau`` plays
the role of the overall pair number, so the expected count for setting ``nu``
is ``<psi_nu| tau |psi_nu> + a_nu`` with ``a_nu`` the known accidentals, and
``rho = tau / tr(tau)``.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import polarization_state as ps
from .errors import DegenerateDataError, ReconstructionError

_S2 = 1 / np.sqrt(2)
KETS = {
    "H": np.array([1, 0], dtype=complex),
    "V": np.array([0, 1], dtype=complex),
    "D": np.array([_S2, _S2], dtype=complex),
    "A": np.array([_S2, -_S2], dtype=complex),
    "R": np.array([_S2, -1j * _S2], dtype=complex),
    "L": np.array([_S2, 1j * _S2], dtype=complex),
}

_CANONICAL = (
    "HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH",
    "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL",
)


@dataclass(frozen=True)
class ProjectorSetting:
    id: int
    arm1: str
    arm2: str

    @property
    def ket(self) -> np.ndarray:
        return np.kron(KETS[self.arm1], KETS[self.arm2])

    @property
    def projector(self) -> np.ndarray:
        k = self.ket
        return np.outer(k, k.conj())


@dataclass(frozen=True)
class CountRecord:
    setting: ProjectorSetting
    counts: int
    accidentals: float
    time_s: float

    def __post_init__(self):
        if self.counts < 0 or self.accidentals < 0:
            raise ValueError("counts and accidentals must be >= 0")
        if self.time_s <= 0:
            raise ValueError("integration time must be positive")


@dataclass(frozen=True, eq=False)
class MLEResult:
    rho: np.ndarray
    nll: float
    iterations: int
    converged: bool
    total_pairs: float  # fitted tr(tau)


def canonical_settings() -> list[ProjectorSetting]:
    return [ProjectorSetting(i + 1, s[0], s[1]) for i, s in enumerate(_CANONICAL)]


def expected_counts(rho, settings, pair_flux: float, background_rate: float, time_s: float) -> np.ndarray:
    rho = np.asarray(rho)
    probs = np.array([np.real(s.ket.conj() @ rho @ s.ket) for s in settings])
    return pair_flux * time_s * np.clip(probs, 0.0, None) + background_rate * time_s


def simulate_counts(
    rho,
    settings=None,
    pair_flux: float = 1.0,
    background_rate: float = 0.0,
    time_s: float = 1.0,
    seed=None,
    noiseless: bool = False,
) -> list[CountRecord]:
    """Poisson counts per setting.

    ``noiseless=True`` stores the means themselves (as floats) so that round
    trips can be exact.
    """
    rho = ps.validate(rho)
    settings = canonical_settings() if settings is None else list(settings)
    if pair_flux <= 0 or time_s <= 0:
        raise ValueError("pair flux and time must be positive")
    mean = expected_counts(rho, settings, pair_flux, background_rate, time_s)
    if noiseless:
        counts = mean
    else:
        counts = np.random.default_rng(seed).poisson(mean)
    return [
        CountRecord(s, counts[k] if noiseless else int(counts[k]), background_rate * time_s, time_s)
        for k, s in enumerate(settings)
    ]


def subtract_accidentals(records: list[CountRecord]) -> list[CountRecord]:
    """Net counts clamped at zero, with the accidentals then set to zero."""
    out = []
    for r in records:
        net = max(r.counts - r.accidentals, 0)
        if isinstance(r.counts, (int, np.integer)):
            net = int(round(net))
        out.append(CountRecord(r.setting, net, 0.0, r.time_s))
    return out


# -- parametrization -------------------------------------------------------------

_TRIL = np.tril_indices(4, -1)


def t_matrix(t: np.ndarray) -> np.ndarray:
    """Lower-triangular T from 16 reals: 4 diagonal, then 6 (re, im) pairs."""
    T = np.zeros((4, 4), dtype=complex)
    T[np.diag_indices(4)] = t[:4]
    T[_TRIL] = t[4:10] + 1j * t[10:16]
    return T


def t_params(T: np.ndarray) -> np.ndarray:
    return np.concatenate([np.real(np.diag(T)), T[_TRIL].real, T[_TRIL].imag])


def rho_from_params(t: np.ndarray) -> np.ndarray:
    T = t_matrix(t)
    tau = T.conj().T @ T
    return tau / np.real(np.trace(tau))


def params_for_state(rho, scale: float = 1.0) -> np.ndarray:
    """Parameters whose ``tau`` equals ``scale * rho``.

    Uses the Cholesky factor of the index-reversed matrix, which turns
    ``L L^dagger`` into the ``T^dagger T`` ordering with ``T`` lower triangular.
    """
    P = np.eye(4)[::-1]
    M = scale * np.asarray(rho, dtype=complex) + 1e-12 * scale * np.eye(4)
    L = np.linalg.cholesky(P @ M @ P)
    return t_params(P @ L.conj().T @ P)


class _Problem:
    def __init__(self, records):
        self.kets = np.array([r.setting.ket for r in records])
        self.n = np.array([r.counts for r in records], dtype=float)
        self.a = np.array([r.accidentals for r in records], dtype=float)

    def mean(self, T):
        v = self.kets @ T.T  # rows are T psi
        return np.sum(np.abs(v) ** 2, axis=1) + self.a, v

    def nll(self, t):
        T = t_matrix(t)
        mu, v = self.mean(T)
        mu = np.maximum(mu, 1e-300)
        f = np.sum(mu - self.n * np.log(mu))
        w = 1.0 - self.n / mu
        # d mu / d T* = (T psi) psi^dag; real-parameter gradient is 2 Re / 2 Im
        G = 2.0 * (w[:, None, None] * (v[:, :, None] * self.kets.conj()[:, None, :])).sum(axis=0)
        grad = np.concatenate([np.real(np.diag(G)), G[_TRIL].real, G[_TRIL].imag])
        return f, grad


def _check_coverage(records):
    if len(records) < 16:
        raise ValueError("need at least 16 records")
    A = np.array([r.setting.projector.reshape(-1) for r in records])
    if np.linalg.matrix_rank(A, tol=1e-9) < 16:
        raise ValueError("settings are not tomographically complete")
    if not any(r.counts > 0 for r in records):
        raise DegenerateDataError("all counts are zero")


def negative_log_likelihood(records, rho, total_pairs: float) -> float:
    """Poisson NLL (up to a data-only constant) of ``rho`` at a given pair number."""
    prob = _Problem(records)
    mu = np.array([np.real(k.conj() @ rho @ k) for k in prob.kets]) * total_pairs + prob.a
    mu = np.maximum(mu, 1e-300)
    return float(np.sum(mu - prob.n * np.log(mu)))


def reconstruct(records: list[CountRecord], n_starts: int = 8, seed=0, x0=None) -> MLEResult:
    """Maximum-likelihood density matrix from tomography counts."""
    _check_coverage(records)
    prob = _Problem(records)
    signal = max(float(np.sum(prob.n - prob.a)), float(np.sum(prob.n)) * 0.1, 1e-6)
    # tau = c I / 4 gives sum(mu) = 4c over the complete set, hence T = sqrt(signal / 16) I
    scale = np.sqrt(signal / 16.0)
    rng = np.random.default_rng(seed)
    starts = [] if x0 is None else [np.asarray(x0, dtype=float)]
    starts.append(np.concatenate([np.full(4, scale), np.zeros(12)]))
    while len(starts) < max(n_starts, 1):
        starts.append(rng.uniform(-1, 1, 16) * scale)

    best = None
    for x in starts:
        res = minimize(
            prob.nll, x, jac=True, method="L-BFGS-B",
            options={"maxiter": 5000, "ftol": 1e-15, "gtol": 1e-10},
        )
        if best is None or res.fun < best.fun:
            best = res
    T = t_matrix(best.x)
    tau = T.conj().T @ T
    total = float(np.real(np.trace(tau)))
    rho = tau / total
    rho = 0.5 * (rho + rho.conj().T)
    rho /= np.real(np.trace(rho))
    return MLEResult(rho, float(best.fun), int(best.nit), bool(best.success), total)


def bootstrap_errors(
    records: list[CountRecord],
    m: int = 100,
    seed=0,
    threads: int = 1,
    n_starts: int = 2,
    family: str = "phi",
) -> tuple[float, float]:
    """Parametric-bootstrap standard deviations of (concurrence, fidelity).

    Every resample redraws each count as Poisson(observed) from its own RNG
    stream spawned from ``seed``, so results do not depend on ``threads``.
    Resamples are warm-started from the point estimate.
    """
    if m < 10:
        raise ValueError("bootstrap needs m >= 10 resamples")
    point = reconstruct(records, seed=seed)
    x0 = params_for_state(point.rho, point.total_pairs)
    streams = np.random.SeedSequence(seed).spawn(m)

    def one(k):
        rng = np.random.default_rng(streams[k])
        redrawn = [
            CountRecord(r.setting, int(rng.poisson(r.counts)), r.accidentals, r.time_s) for r in records
        ]
        try:
            rho = reconstruct(redrawn, n_starts=n_starts, seed=int(rng.integers(2**32)), x0=x0).rho
        except Exception as exc:  # noqa: BLE001 - re-raised with the index
            raise ReconstructionError(k, exc) from exc
        return ps.concurrence(rho), ps.bell_fidelity(rho, family).fidelity

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            vals = list(pool.map(one, range(m)))
    else:
        vals = [one(k) for k in range(m)]
    vals = np.array(vals)
    return float(np.std(vals[:, 0], ddof=1)), float(np.std(vals[:, 1], ddof=1))


# -- count files ------------------------------------------------------------------

COUNT_COLUMNS = ("setting_id", "ket_arm1", "ket_arm2", "counts", "accidentals", "time_s")


def records_to_csv(records: list[CountRecord], comment: str | None = None) -> str:
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COUNT_COLUMNS)
    for r in records:
        counts = r.counts if isinstance(r.counts, (int, np.integer)) else repr(float(r.counts))
        w.writerow([r.setting.id, r.setting.arm1, r.setting.arm2, counts, repr(float(r.accidentals)), repr(float(r.time_s))])
    return buf.getvalue()


def records_from_csv(text: str) -> list[CountRecord]:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != COUNT_COLUMNS:
        raise ValueError(f"count file columns must be {COUNT_COLUMNS}")
    out = []
    for row in reader:
        raw = row["counts"]
        counts = int(raw) if raw.strip().lstrip("-").isdigit() else float(raw)
        setting = ProjectorSetting(int(row["setting_id"]), row["ket_arm1"], row["ket_arm2"])
        if setting.arm1 not in KETS or setting.arm2 not in KETS:
            raise ValueError(f"unknown projection ket in setting {setting.id}")
        out.append(CountRecord(setting, counts, float(row["accidentals"]), float(row["time_s"])))
    return out
