"""Command-line front end: ``polsource <command> --config FILE [options]``.

Exit status: 0 on success, 1 for model/runtime errors, 2 for configuration
or usage errors.  Every artifact embeds the config hash and the seed.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import config as cf
from . import counting as ct
from . import polarization_state as ps
from . import spdc_model as sm
from . import tomography as tm
from .errors import ConfigurationError, PolsourceError


class _Run:
    """Per-invocation context: config, seed, output directory."""

    def __init__(self, args, cfg: cf.ScenarioConfig):
        self.args = args
        self.cfg = cfg
        self.seed = cfg.seed if args.seed is None else args.seed
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    @property
    def meta(self) -> dict:
        return {
            "command": self.args.command,
            "config_name": self.cfg.name,
            "config_sha256": self.cfg.sha256(),
            "seed": self.seed,
            "version": __version__,
        }

    def write_json(self, name: str, payload: dict) -> Path:
        path = self.out / name
        path.write_text(json.dumps({"meta": self.meta, **payload}, indent=2) + "\n", encoding="utf-8")
        self.written.append(path)
        return path

    def write_csv(self, name: str, header, rows) -> Path:
        buf = io.StringIO()
        buf.write(f"# config_sha256={self.meta['config_sha256']} seed={self.seed}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
        path = self.out / name
        path.write_text(buf.getvalue(), encoding="utf-8")
        self.written.append(path)
        return path

    def write_text(self, name: str, text: str) -> Path:
        path = self.out / name
        path.write_text(text, encoding="utf-8")
        self.written.append(path)
        return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def _source_kind(run: _Run) -> str:
    src = getattr(run.args, "source", None)
    if src:
        return src
    return "typeII" if run.cfg.pump.polarization == "TE" else "concurrent"


def _build_source(run: _Run, kind: str) -> ps.SourceState:
    cfg = run.cfg
    spec = cf.build_waveguide(cfg)
    lam = cfg.pump.wavelength_nm
    grid = cf.build_grid(cfg)
    filt = cf.build_filter(cfg)
    if kind == "concurrent":
        return ps.concurrent_source(spec, grid, lam, filt)
    return ps.type_ii_source(spec, grid, lam, filt)


def _family(kind: str) -> str:
    return "psi" if kind == "typeII" else "phi"


# -- commands -------------------------------------------------------------------


def cmd_spectra(run: _Run) -> None:
    src = _build_source(run, _source_kind(run))
    curves = sm.spectral_intensity(list(src.amplitudes))
    for channel, (wl, inten) in curves.items():
        order = np.argsort(wl)
        run.write_csv(f"spectrum_{channel}.csv", ("wavelength_nm", "value"), zip(wl[order], inten[order]))


def cmd_tuning_curve(run: _Run) -> None:
    spec = cf.build_waveguide(run.cfg)
    procs = [sm.ProcessKind.parse(p) for p in run.args.process] if run.args.process else list(spec.processes)
    for kind in procs:
        lam_f = 2 * spec.process(kind).pm_wavelength_nm
        lo, hi = run.args.range if run.args.range else (lam_f - 10.0, lam_f + 10.0)
        curve = sm.shg_tuning_curve(kind, (lo, hi), run.args.points, spec)
        run.write_csv(f"tuning_{kind.value}.csv", ("wavelength_nm", "value"), curve)


def _state_payload(rho, kind: str, extra: dict | None = None) -> dict:
    return {"source": kind, "density_matrix": ps.rho_to_dict(rho), "metrics": ps.metrics(rho, _family(kind)), **(extra or {})}


def cmd_state(run: _Run) -> None:
    kind = _source_kind(run)
    src = _build_source(run, kind)
    run.write_json(
        "state.json",
        _state_payload(
            src.rho,
            kind,
            {
                "overlap": [src.overlap.real, src.overlap.imag],
                "effective_rates": list(src.rates),
                "passed_fraction": list(src.passed_fraction),
                "truncated": any(a.truncated for a in src.amplitudes),
            },
        ),
    )


def cmd_optimize(run: _Run) -> None:
    cfg = run.cfg
    spec = cf.build_waveguide(cfg)
    ratio = run.args.ratio if run.args.ratio is not None else cfg.scan.ratio
    if run.args.filter is not None:
        bw = run.args.filter
    else:
        bw = cfg.filter.bandwidth_nm if cfg.filter else 0.0
    offsets = ps.scan_offsets(cfg.scan.offset_min_nm, cfg.scan.offset_max_nm, cfg.scan.step_nm)
    kinds = (sm.ProcessKind.TYPE_I, sm.ProcessKind.TYPE0)
    if not all(k in spec.processes for k in kinds):
        raise ConfigurationError("waveguide.processes: optimize needs both type0 and typeI")
    eta_0 = spec.process(sm.ProcessKind.TYPE0).efficiency
    eta_i = ratio * eta_0 if ratio is not None else spec.process(sm.ProcessKind.TYPE_I).efficiency
    weak = sm.ProcessKind.TYPE0 if eta_i >= eta_0 else sm.ProcessKind.TYPE_I
    pump = spec.process(weak).pm_wavelength_nm
    filt = None
    if bw > 0:
        center = cfg.filter.center_nm if cfg.filter and cfg.filter.center_nm else 2 * pump
        filt = sm.FilterSpec(center, bw)
    scan = ps.optimize_detuning(
        spec, ratio, filt,
        half_span=cfg.grid.half_span_rad_per_ps * 1e12, n=cfg.grid.n_samples,
        offsets=offsets, threads=run.args.threads,
    )
    run.write_csv("scan.csv", ps.DetuningScan.COLUMNS, scan.curve)
    best = scan.best
    zero = scan.at(0.0)
    run.write_json(
        "optimize.json",
        {
            "ratio": ratio,
            "filter_bandwidth_nm": bw if bw > 0 else None,
            "stronger_process": scan.strong.value,
            "weaker_process": scan.weak.value,
            "pump_wavelength_nm": scan.pump_wavelength_nm,
            "best_offset_nm": scan.best_offset_nm,
            "best": dict(zip(ps.DetuningScan.COLUMNS, map(float, best))),
            "zero_offset": dict(zip(ps.DetuningScan.COLUMNS, map(float, zero))),
        },
    )
    # efficiency-weighted tuning maps at the optimum (coarse, plot-ready)
    grid = sm.SpectralGrid.for_pump(pump, cfg.grid.half_span_rad_per_ps * 1e12, 257)
    maps = ps.weighted_tuning_curves(scan.shifted_spec(), (pump - 2.0, pump + 2.0), 81, grid)
    rows = (
        (p, s, maps["HH"][i, j], maps["VV"][i, j])
        for i, p in enumerate(maps["pump_nm"])
        for j, s in enumerate(maps["signal_nm"])
    )
    run.write_csv("tuning_surface.csv", ("pump_nm", "signal_nm", "weighted_HH", "weighted_VV"), rows)


def _tomo_state(run: _Run) -> tuple[np.ndarray, str]:
    if run.args.rho:
        data = json.loads(Path(run.args.rho).read_text(encoding="utf-8"))
        rho = ps.rho_from_dict(data.get("density_matrix", data))
        return ps.validate(rho), run.args.family or data.get("source", "concurrent")
    kind = _source_kind(run)
    return _build_source(run, kind).rho, kind


def cmd_tomo_sim(run: _Run) -> None:
    rho, _ = _tomo_state(run)
    t = run.cfg.tomography
    records = tm.simulate_counts(rho, None, t.pair_flux_hz, t.background_hz, t.time_s, seed=run.seed)
    comment = f"config_sha256={run.meta['config_sha256']} seed={run.seed}"
    run.write_text("counts.csv", tm.records_to_csv(records, comment))


def cmd_tomo_fit(run: _Run) -> None:
    if not run.args.counts:
        raise ConfigurationError("tomo-fit: --counts FILE is required")
    records = tm.records_from_csv(Path(run.args.counts).read_text(encoding="utf-8"))
    if run.args.subtract_accidentals:
        records = tm.subtract_accidentals(records)
    t = run.cfg.tomography
    family = "psi" if run.args.family == "typeII" else "phi"
    res = tm.reconstruct(records, n_starts=t.n_starts, seed=run.seed)
    m = run.args.bootstrap if run.args.bootstrap is not None else t.bootstrap_resamples
    errors = None
    if m > 0:
        sc, sf = tm.bootstrap_errors(records, m, seed=run.seed, threads=run.args.threads, family=family)
        errors = {"concurrence": sc, "fidelity": sf, "resamples": m}
    run.write_json(
        "reconstruction.json",
        {
            "density_matrix": ps.rho_to_dict(res.rho),
            "metrics": ps.metrics(res.rho, family),
            "errors": errors,
            "nll": res.nll,
            "iterations": res.iterations,
            "converged": res.converged,
            "fitted_pairs": res.total_pairs,
            "subtract_accidentals": bool(run.args.subtract_accidentals),
        },
    )


def cmd_counts(run: _Run) -> None:
    cfg = run.cfg
    det1, det2 = cf.build_detectors(cfg)
    path = cf.build_path(cfg)
    hcfg = cf.build_histogram_config(cfg)
    c = cfg.counting
    duration = run.args.duration or c.duration_s
    hist = ct.simulate_histogram(c.pair_rate_hz, path, det1, det2, hcfg, duration, seed=run.seed)
    run.write_csv("histogram.csv", ("bin_start_ns", "count"), zip(hist.bin_start_ns, hist.counts))
    net = ct.net_rate(hist, hcfg)
    singles = ct.singles_rate(hist, 1)
    est = ct.infer_pair_rate(net, singles, path, det1, det2, cfg.pump.internal_power_uw, cfg.pump.wavelength_nm)
    run.write_json(
        "counts.json",
        {
            "duration_s": duration,
            "car": ct.car(hist, hcfg),
            "net_rate_hz": net,
            "singles_det1_hz": singles,
            "pair_collection": path.pair_collection,
            "inferred": {
                "pairs_per_s": est.pairs_per_s,
                "pairs_per_s_per_mw": est.pairs_per_s_per_mw,
                "pairs_per_pump_photon": est.pairs_per_pump_photon,
            },
            "expected": ct.expected_accidentals(c.pair_rate_hz, path, det1, det2, hcfg),
            "stats": hist.stats,
        },
    )


COMMANDS = {
    "spectra": cmd_spectra,
    "tuning-curve": cmd_tuning_curve,
    "state": cmd_state,
    "optimize": cmd_optimize,
    "tomo-sim": cmd_tomo_sim,
    "tomo-fit": cmd_tomo_fit,
    "counts": cmd_counts,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="scenario JSON file (or name of a shipped example)")
    common.add_argument("--seed", type=int, default=None, help="RNG seed (default: config seed)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--subtract-accidentals", action="store_true")

    parser = argparse.ArgumentParser(prog="polsource", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("spectra", parents=[common]).add_argument("--source", choices=("concurrent", "typeII"))
    p = sub.add_parser("tuning-curve", parents=[common])
    p.add_argument("--process", action="append", choices=("type0", "typeI", "typeII"))
    p.add_argument("--range", nargs=2, type=float, metavar=("LO_NM", "HI_NM"))
    p.add_argument("--points", type=int, default=401)
    sub.add_parser("state", parents=[common]).add_argument("--source", choices=("concurrent", "typeII"))
    p = sub.add_parser("optimize", parents=[common])
    p.add_argument("--ratio", type=float)
    p.add_argument("--filter", type=float, metavar="BANDWIDTH_NM", help="0 disables filtering")
    p = sub.add_parser("tomo-sim", parents=[common])
    p.add_argument("--source", choices=("concurrent", "typeII"))
    p.add_argument("--rho", help="density-matrix JSON to measure instead of the configured source")
    p.add_argument("--family", choices=("concurrent", "typeII"))
    p = sub.add_parser("tomo-fit", parents=[common])
    p.add_argument("--counts", help="count CSV written by tomo-sim")
    p.add_argument("--bootstrap", type=int, help="resamples for error bars (0 disables)")
    p.add_argument("--family", choices=("concurrent", "typeII"), default="concurrent")
    p = sub.add_parser("counts", parents=[common])
    p.add_argument("--duration", type=float, help="simulated seconds (default: config)")
    return parser


def _resolve_config(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    shipped = cf.example_config_path(arg)
    return shipped if shipped.exists() else path


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = cf.load_config(_resolve_config(args.config))
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        run = _Run(args, cfg)
        COMMANDS[args.command](run)
    except ConfigurationError as exc:
        print(f"polsource: config error: {exc}", file=sys.stderr)
        return 2
    except (PolsourceError, ValueError, OSError) as exc:
        print(f"polsource: error: {exc}", file=sys.stderr)
        return 1
    for path in run.written:
        print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
