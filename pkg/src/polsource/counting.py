"""Event-level model of the coincidence-counting chain.

Pairs leave the waveguide as a Poisson process.  Each photon is routed by a
50:50 splitter, survives its arm with the product of element transmissions
and detector efficiency, and competes with dark counts for detector clicks
subject to a non-paralyzable dead time.  Detector 2 may be gated by the clicks
of detector 1.  All times are in seconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PolsourceError

H_PLANCK = 6.62607015e-34
C_LIGHT = 299_792_458.0

#: Returned by :func:`car` when the floor is empty but the peak is not.
CAR_CAP = 1e9


@dataclass(frozen=True)
class DetectorModel:
    efficiency: float
    dark_rate: float = 0.0
    dead_time: float = 0.0
    mode: str = "free-running"  # or "gated"
    gate_width: float = 20e-9

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ValueError("efficiency must lie in [0, 1]")
        if self.dark_rate < 0 or self.dead_time < 0:
            raise ValueError("dark rate and dead time must be >= 0")
        if self.mode not in ("free-running", "gated"):
            raise ValueError(f"unknown detector mode {self.mode!r}")
        if self.gate_width <= 0:
            raise ValueError("gate width must be positive")


@dataclass(frozen=True)
class OpticalPath:
    """Element transmissions.

    ``beamsplitter`` is the pair-level factor for a 50:50 splitter: it
    includes the 1/2 chance that the photons leave by different ports, so
    it cannot exceed 0.5.  Objective, long-pass filters and analyzer act on
    each photon; the fiber coupling differs per arm.
    """

    objective: float = 0.90
    longpass: float = 0.70
    beamsplitter: float = 0.43
    analyzer: float = 0.75
    fiber1: float = 0.53
    fiber2: float = 0.34

    def __post_init__(self):
        for name in ("objective", "longpass", "beamsplitter", "analyzer", "fiber1", "fiber2"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} transmission must lie in [0, 1]")
        if self.beamsplitter > 0.5:
            raise ValueError("pair-level beamsplitter factor of a 50:50 splitter cannot exceed 0.5")

    @property
    def splitter_port_transmission(self) -> float:
        return math.sqrt(2.0 * self.beamsplitter)

    def arm(self, k: int) -> float:
        """Per-photon transmission of arm ``k`` (1 or 2), splitter loss included."""
        fiber = {1: self.fiber1, 2: self.fiber2}[k]
        return self.objective * self.longpass * self.splitter_port_transmission * self.analyzer * fiber

    @property
    def pair_collection(self) -> float:
        """Probability that a pair arrives with one photon at each fiber output."""
        return 0.5 * self.arm(1) * self.arm(2)


@dataclass(frozen=True)
class HistogramConfig:
    bin_width: float = 0.05e-9
    span: float = 20e-9
    window: float = 0.5e-9
    electronic_delay: float = 0.0

    def __post_init__(self):
        if self.window < self.bin_width:
            raise ValueError("coincidence window must be at least one bin wide")
        if self.span < 4 * self.window:
            raise ValueError("histogram span must be much wider than the window")

    @property
    def n_bins(self) -> int:
        return int(round(self.span / self.bin_width))

    @property
    def edges(self) -> np.ndarray:
        return (np.arange(self.n_bins + 1) - self.n_bins / 2) * self.bin_width


@dataclass(eq=False)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray
    duration: float
    stats: dict = field(default_factory=dict)

    @property
    def bin_start_ns(self) -> np.ndarray:
        return self.edges[:-1] * 1e9

    def window_mask(self, cfg: HistogramConfig) -> np.ndarray:
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        return np.abs(mid) < cfg.window / 2


def poisson_times(rate: float, duration: float, rng: np.random.Generator) -> np.ndarray:
    """Arrival times of a Poisson process from exponential inter-arrival gaps."""
    if rate <= 0:
        return np.empty(0)
    n = int(rate * duration + 10 * math.sqrt(rate * duration) + 10)
    t = np.cumsum(rng.exponential(1.0 / rate, n))
    while t[-1] < duration:
        t = np.concatenate([t, t[-1] + np.cumsum(rng.exponential(1.0 / rate, n))])
    return t[t < duration]


def dead_time_mask(times: np.ndarray, dead_time: float) -> np.ndarray:
    """Mask of the events in a sorted stream that a detector registers."""
    keep = np.zeros(times.size, dtype=bool)
    if dead_time <= 0:
        keep[:] = True
        return keep
    ready = -math.inf
    for k, t in enumerate(times.tolist()):
        if t >= ready:
            keep[k] = True
            ready = t + dead_time
    return keep


def apply_dead_time(times: np.ndarray, dead_time: float) -> np.ndarray:
    return times[dead_time_mask(times, dead_time)]


def _route_photons(pair_times, path, det1, det2, rng):
    """Times of photons reaching detector 1 and detector 2 (and surviving)."""
    n = pair_times.size
    ports = rng.integers(1, 3, size=(n, 2))
    p_survive = {1: path.arm(1) * det1.efficiency, 2: path.arm(2) * det2.efficiency}
    out = {}
    for k in (1, 2):
        prob = np.where(ports == k, p_survive[k], 0.0)
        hit = rng.random((n, 2)) < prob
        out[k] = np.sort(np.concatenate([pair_times[hit[:, 0]], pair_times[hit[:, 1]]]))
    return out


def simulate_histogram(
    pair_rate: float,
    path: OpticalPath,
    det1: DetectorModel,
    det2: DetectorModel,
    cfg: HistogramConfig,
    duration: float,
    seed=None,
) -> Histogram:
    """Start-stop histogram of detector-2 minus detector-1 click times."""
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    pairs = poisson_times(pair_rate, duration, rng)
    photons = _route_photons(pairs, path, det1, det2, rng)

    dark1 = poisson_times(det1.dark_rate, duration, rng)
    cand1 = np.sort(np.concatenate([photons[1], dark1]))
    clicks1 = apply_dead_time(cand1, det1.dead_time)

    delay = cfg.electronic_delay
    ph2 = photons[2] + delay
    edges = cfg.edges
    half = cfg.span / 2

    if det2.mode == "gated":
        gw = det2.gate_width
        start = clicks1 + delay - gw / 2
        # first surviving photon inside each gate
        idx = np.searchsorted(ph2, start)
        first_ph = np.full(start.size, np.inf)
        inside = idx < ph2.size
        first_ph[inside] = ph2[idx[inside]]
        first_ph[first_ph >= start + gw] = np.inf
        # dark counts only exist while a gate is open
        dark_off = rng.exponential(1.0 / det2.dark_rate, start.size) if det2.dark_rate > 0 else np.full(start.size, np.inf)
        first_dark = np.where(dark_off < gw, start + dark_off, np.inf)
        n_dark2 = int(np.isfinite(first_dark).sum())
        first = np.minimum(first_ph, first_dark)
        has = np.isfinite(first)
        cand2 = first[has]
        owner = clicks1[has]
        keep_mask = dead_time_mask(cand2, det2.dead_time)
        clicks2 = cand2[keep_mask]
        dt = clicks2 - delay - owner[keep_mask]
    else:
        dark2 = poisson_times(det2.dark_rate, duration, rng) + delay
        n_dark2 = dark2.size
        cand2 = np.sort(np.concatenate([ph2, dark2]))
        clicks2 = apply_dead_time(cand2, det2.dead_time)
        t2 = clicks2 - delay
        lo = np.searchsorted(t2, clicks1 - half)
        hi = np.searchsorted(t2, clicks1 + half, side="right")
        dt = np.concatenate([t2[a:b] - t1 for a, b, t1 in zip(lo, hi, clicks1) if b > a]) if clicks1.size else np.empty(0)

    counts, _ = np.histogram(dt, bins=edges)
    stats = {
        "pairs": int(pairs.size),
        "photons1": int(photons[1].size),
        "photons2": int(photons[2].size),
        "darks1": int(dark1.size),
        "darks2": int(n_dark2),
        "candidates1": int(cand1.size),
        "clicks1": int(clicks1.size),
        "candidates2": int(cand2.size),
        "clicks2": int(clicks2.size),
        "in_span": int(np.sum(np.abs(dt) <= half)),
    }
    return Histogram(edges, counts, duration, stats)


def _window_and_floor(hist: Histogram, cfg: HistogramConfig):
    win = hist.window_mask(cfg)
    floor = hist.counts[~win]
    if floor.size < 10:
        raise ValueError("histogram needs at least 10 floor bins outside the window")
    return float(hist.counts[win].sum()), float(floor.mean()) * int(win.sum())


def car(hist: Histogram, cfg: HistogramConfig) -> float:
    """Coincidence-to-accidental ratio; :data:`CAR_CAP` when the floor is empty."""
    peak, acc = _window_and_floor(hist, cfg)
    if acc == 0:
        return CAR_CAP if peak > 0 else 1.0
    return peak / acc


def net_rate(hist: Histogram, cfg: HistogramConfig, duration: float | None = None) -> float:
    """Accidental-subtracted coincidence rate in the window (Hz), clamped at 0."""
    peak, acc = _window_and_floor(hist, cfg)
    return max(peak - acc, 0.0) / (duration or hist.duration)


def singles_rate(hist: Histogram, detector: int = 1) -> float:
    return hist.stats[f"clicks{detector}"] / hist.duration


@dataclass(frozen=True)
class PairRateEstimate:
    pairs_per_s: float
    pairs_per_s_per_mw: float | None = None
    pairs_per_pump_photon: float | None = None


def infer_pair_rate(
    net_coincidence_rate: float,
    singles_rate_det1: float,
    path: OpticalPath | float,
    det1: DetectorModel,
    det2: DetectorModel,
    pump_power_uw: float | None = None,
    pump_wavelength_nm: float | None = None,
) -> PairRateEstimate:
    """Invert the detection chain for the pair rate at the output facet.

    ``singles_rate_det1`` is the measured (dead-time affected) click rate, so
    detector 1 is live a fraction ``1 - singles * dead_time`` of the time.
    ``path`` may be an :class:`OpticalPath` or a bare pair-collection factor.
    """
    if net_coincidence_rate < 0 or singles_rate_det1 < 0:
        raise ValueError("rates must be >= 0")
    collection = path.pair_collection if isinstance(path, OpticalPath) else float(path)
    live = 1.0 - singles_rate_det1 * det1.dead_time
    denom = collection * det1.efficiency * det2.efficiency * live
    if denom <= 0:
        raise PolsourceError(
            f"cannot invert chain: collection={collection:g}, efficiencies="
            f"({det1.efficiency:g}, {det2.efficiency:g}), live fraction={live:g}"
        )
    pairs = net_coincidence_rate / denom
    per_mw = per_photon = None
    if pump_power_uw is not None:
        per_mw = pairs / (pump_power_uw * 1e-3)
        if pump_wavelength_nm is not None:
            photon_rate = pump_power_uw * 1e-6 / (H_PLANCK * C_LIGHT / (pump_wavelength_nm * 1e-9))
            per_photon = pairs / photon_rate
    return PairRateEstimate(pairs, per_mw, per_photon)


def expected_accidentals(
    pair_rate: float, path: OpticalPath, det1: DetectorModel, det2: DetectorModel, cfg: HistogramConfig
) -> dict:
    """Closed-form accidental budget per second in the coincidence window.

    Neglects dead time of detector 2 and assumes detector-1 gates do not
    overlap.  ``dark_fraction`` is the share due to detector-2 dark counts.
    """
    r1_true = det1.dark_rate + pair_rate * path.arm(1) * det1.efficiency
    r1 = r1_true / (1 + r1_true * det1.dead_time)
    photons2 = pair_rate * path.arm(2) * det2.efficiency
    total = r1 * (det2.dark_rate + photons2) * cfg.window
    return {
        "singles1": r1,
        "photons2": photons2,
        "accidentals": total,
        "dark_fraction": det2.dark_rate / (det2.dark_rate + photons2) if total > 0 else 0.0,
    }
