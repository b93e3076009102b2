"""``fluxtune`` command-line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical or
solver failure.  ``FLUXTUNE_LOG`` sets the log level (default WARNING).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, load_config, parse_config
from .constants import HBAR, PHI0
from .errors import ConfigError, FluxtuneError, NumericalError, UsageError
from .ftr import fit_tuning_curve, tuning_curve
from .io import (
    load_sweep,
    read_rows,
    read_trace_csv,
    write_manifest,
    write_report,
    write_rows,
    write_trace_csv,
)
from .magnetics import (
    load_loops,
    mutual_from_period,
    neumann_mutual,
    square_coil_self_inductance,
    square_loop,
    transfer_efficiency,
)
from .s21 import (
    BackgroundModel,
    DuffingParams,
    ResonatorFit,
    TlsModel,
    analyze_trace,
    extract_period,
    fit_kerr_power_sweep,
    fit_linear_resonance,
    fit_tls,
    tls_qi,
)
from .squid import fold_threshold, screening_curve
from .synth import NoiseSpec, gen_flux_map, gen_linear_trace, gen_power_sweep, rng_for

log = logging.getLogger("fluxtune")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2
SCENARIOS = ("linear", "kerr", "tls", "fluxmap")
FIT_MODES = ("linear", "kerr", "tls", "flux")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _config(args) -> RunConfig:
    return load_config(args.config) if args.config else parse_config({})


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.get("io.out_dir") or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fmt(args, cfg):
    fmt = args.format or cfg.get("io.format") or "csv"
    if fmt not in ("csv", "json"):
        raise ConfigError(f"io.format must be csv or json, got {fmt!r}", "io.format")
    return fmt


def _emit(out: Path, stem, fmt, header, rows, summary):
    """Table as CSV plus summary JSON, or both inside one JSON document."""
    files = []
    if fmt == "csv":
        files.append(write_rows(out / f"{stem}.csv", header, rows))
        files.append(write_report(out / f"{stem}.json", summary))
    else:
        body = dict(summary)
        body["columns"] = header
        body["rows"] = [list(r) for r in rows]
        files.append(write_report(out / f"{stem}.json", body))
    for f in files:
        print(f)


# ---------------------------------------------------------------------------
# commands


def cmd_screen(args) -> int:
    cfg = _config(args)
    sq = cfg.squid_params()
    start, stop, n = cfg.flux_grid_bounds()
    grid = np.linspace(start, stop, n)
    mode = cfg.get("solver.screening_mode", "ground")
    sign = cfg.get("solver.screening_sign", 1)
    if mode not in ("ground", "continuation"):
        raise ConfigError("solver.screening_mode must be ground or continuation", "solver.screening_mode")
    curve = screening_curve(grid, sq, screening_sign=sign, mode=mode)
    header = ["Phi_e_Phi0", "Phi_s_Phi0", "I_circ_A", "branch_n", "screening_sign", "m", "multivalued"]
    rows = [[p.Phi_e / PHI0, p.Phi_s / PHI0, p.I_circ, p.branch_n, p.screening_sign, p.m, p.multivalued]
            for p in curve.points]
    summary = {
        "command": "screen",
        "beta_L": sq.beta_L,
        "alpha": sq.alpha,
        "mode": mode,
        "points": len(rows),
        "fold_threshold_beta_L": fold_threshold(abs(sq.alpha)),
        "has_fold": curve.has_fold,
        "multivalued_intervals_Phi0": [[a / PHI0, b / PHI0] for a, b in curve.multivalued_intervals],
        "jumps_Phi0": [float(grid[i] / PHI0) for i in curve.jumps],
    }
    _emit(_out_dir(args, cfg), "screen", _fmt(args, cfg), header, rows, summary)
    return EXIT_OK


def cmd_tune(args) -> int:
    cfg = _config(args)
    ftr = cfg.ftr_params()
    exact = bool(args.exact or cfg.get("solver.exact", False))
    sweep = bool(cfg.get("solver.sweep", False))
    currents = None
    if cfg.get("solver.current_points") is not None:
        cal = cfg.calibration()
        currents = np.linspace(cfg.require("solver.current_start_uA"), cfg.require("solver.current_stop_uA"),
                               cfg.get("solver.current_points"))
        grid = PHI0 * (currents - cal.I_off) / cal.I_Phi0
        if cal.I_Phi0 < 0:
            grid = grid[::-1]
            currents = currents[::-1]
    else:
        start, stop, n = cfg.flux_grid_bounds()
        grid = np.linspace(start, stop, n)
    curve = tuning_curve(ftr, grid, exact=exact, sweep=sweep)
    f = curve.omega_r / (2 * np.pi)
    resp = curve.responsivity / (2 * np.pi) * PHI0
    header = ["Phi_e_Phi0", "f_r_hz", "responsivity_hz_per_Phi0", "gamma", "Phi_s_Phi0", "divergent"]
    cols = [grid / PHI0, f, resp, curve.gamma, curve.Phi_s / PHI0, curve.divergent]
    if currents is not None:
        header = ["current_a"] + header
        cols = [currents] + cols
    rows = list(zip(*cols))
    finite = np.isfinite(resp)
    summary = {
        "command": "tune",
        "exact": exact,
        "sweep": sweep,
        "beta_L": ftr.squid.beta_L,
        "f0_hz": ftr.cpw.omega0 / (2 * np.pi),
        "f_max_hz": float(np.max(f)),
        "f_min_hz": float(np.min(f)),
        "max_abs_responsivity_hz_per_Phi0": float(np.max(np.abs(resp[finite]))) if finite.any() else None,
        "divergent_points": int(np.sum(curve.divergent)),
        "frequency_jumps_Phi0": [float(grid[i] / PHI0) for i in curve.frequency_jumps],
        "screened_flux_jumps_Phi0": [float(grid[i] / PHI0) for i in curve.phi_s_jumps],
    }
    _emit(_out_dir(args, cfg), "tune", _fmt(args, cfg), header, rows, summary)
    return EXIT_OK


def _is_square(lp):
    v = lp.vertices
    if len(v) != 4 or not lp.closed:
        return None
    sides = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
    return float(sides[0]) if np.allclose(sides, sides[0], rtol=1e-9) else None


def cmd_mutual(args) -> int:
    cfg = _config(args)
    geo_file = args.geometry or cfg.get("geometry.file")
    rtol = cfg.get("geometry.rtol", 1e-6)
    if geo_file:
        loops = load_loops(geo_file)
        if len(loops) < 2:
            raise ConfigError(f"{geo_file}: need two loops", "geometry.file")
        coil = loops.get("coil") or list(loops.values())[0]
        squid = loops.get("squid") or [v for v in loops.values() if v is not coil][0]
    else:
        coil = square_loop(cfg.require("geometry.coil_side_um"), cfg.get("geometry.height_um", 0.0),
                           wire_width=cfg.get("geometry.coil_width_um"), name="coil")
        squid = square_loop(cfg.require("geometry.squid_side_um"), 0.0,
                            wire_width=cfg.get("geometry.squid_width_um"), name="squid")
    M = neumann_mutual(coil, squid, rtol=rtol)
    L_i = cfg.get("geometry.L_i_pH")
    side = _is_square(coil)
    if L_i is None and side is not None and coil.wire_width:
        L_i = square_coil_self_inductance(side, coil.wire_width)
    report = {"command": "mutual", "M_H": M, "M_pH": M * 1e12, "rtol": rtol}
    if L_i is not None:
        report.update({"L_i_H": L_i, "L_i_pH": L_i * 1e12, "eta2": transfer_efficiency(M, L_i)})
    out = _out_dir(args, cfg)
    print(write_report(out / "mutual.json", report))
    return EXIT_OK


def _fit_linear(paths, background):
    results = []
    for p in paths:
        tr = read_trace_csv(p)
        if background:
            fit, bg = analyze_trace(tr)
            entry = fit.as_dict()
            entry["background"] = {"a0": bg.a0, "a1_per_hz": bg.a1, "phi0_rad": bg.phi0, "tau_s": bg.tau,
                                   "f0_hz": bg.f0, "narrow_span": bg.narrow_span}
        else:
            entry = fit_linear_resonance(tr).as_dict()
        entry["file"] = str(p)
        results.append(entry)
    return {"mode": "linear", "fits": results}


def _fit_kerr(paths, background):
    if len(paths) != 1:
        raise UsageError("kerr mode takes a single manifest file")
    traces = load_sweep(paths[0])
    kf = fit_kerr_power_sweep(traces, correct=background)
    return {
        "mode": "kerr",
        "K_rad_per_s": kf.K,
        "K_over_2pi_hz": kf.K_over_2pi,
        "K_stderr_over_2pi_hz": kf.K_stderr / (2 * np.pi),
        "f_r0_hz": kf.f_r0,
        "excluded": list(kf.excluded),
        "per_power": [{"photon_number": n, "f_r_hz": f, "Q_L": ft.Q_L, "Q_c_eff": ft.Q_c_eff}
                      for n, f, ft in zip(kf.photon_numbers, kf.f_r, kf.fits)],
    }


def _fit_tls(paths):
    header, data = read_rows(paths[0])
    cols = {h: i for i, h in enumerate(header)}
    if not {"photon_number", "Q_i"} <= cols.keys():
        raise UsageError(f"{paths[0]}: need photon_number and Q_i columns")
    m = fit_tls(data[:, cols["photon_number"]], data[:, cols["Q_i"]])
    return {"mode": "tls", "delta0": m.delta0, "deltaTLS": m.deltaTLS, "beta_exp": m.beta_exp,
            "n_star": m.n_star, "Q_i0": m.Q_i0, "Q_i_inf": m.Q_i_inf, "rms_relative": m.rms}


def _fit_flux(paths, cfg: RunConfig):
    header, data = read_rows(paths[0])
    cols = {h: i for i, h in enumerate(header)}
    if not {"current_a", "f_r_hz"} <= cols.keys():
        raise UsageError(f"{paths[0]}: need current_a and f_r_hz columns")
    I, f = data[:, cols["current_a"]], data[:, cols["f_r_hz"]]
    ok = f > 0
    cal = extract_period(I[ok], f[ok])
    guess = cfg.ftr_params()
    fit = fit_tuning_curve(I[ok], f[ok], guess.cpw, guess, cal.I_off, cal.I_Phi0)
    return {
        "mode": "flux",
        "period_estimate": {"I_off_uA": cal.I_off * 1e6, "I_Phi0_uA": cal.I_Phi0 * 1e6},
        "parameters": {
            "A": fit.A, "alpha": fit.alpha, "I0_nA": fit.I0 * 1e9, "Lg_pH": fit.Lg * 1e12,
            "beta_L": fit.beta_L, "I_off_uA": fit.I_off * 1e6, "I_Phi0_uA": fit.I_Phi0 * 1e6,
            "M_pH": mutual_from_period(fit.I_Phi0) * 1e12,
        },
        "rms_residual_hz": fit.rms_residual,
        "at_bound": list(fit.at_bound),
        "success": fit.success,
    }


def cmd_fit(args) -> int:
    cfg = _config(args)
    mode = args.mode
    background = args.background if args.background is not None else mode == "linear"
    if mode == "linear":
        report = _fit_linear(args.inputs, background)
    elif mode == "kerr":
        report = _fit_kerr(args.inputs, background)
    elif mode == "tls":
        report = _fit_tls(args.inputs)
    else:
        report = _fit_flux(args.inputs, cfg)
    report = {"command": "fit", **report}
    print(write_report(_out_dir(args, cfg) / f"fit_{mode}.json", report))
    return EXIT_OK


def _synth_linear(cfg, out, seed, fmt):
    f_r = cfg.get("synth.f_r_GHz", 6e9)
    fit = ResonatorFit.from_internal(f_r, cfg.get("synth.Q_i", 3e4), cfg.get("synth.Q_c", 490.0),
                                     cfg.get("synth.phi_rad", 0.0))
    span = cfg.get("synth.span_MHz", 20 * f_r / fit.Q_L)
    grid = np.linspace(f_r - span / 2, f_r + span / 2, cfg.get("synth.points", 801))
    bg = BackgroundModel(1.0, cfg.get("synth.amp_slope_per_GHz", 0.0), cfg.get("synth.phase_offset_rad", 0.0),
                         cfg.get("synth.tau_ns", 0.0), f_r)
    tr = gen_linear_trace(fit, bg, grid, NoiseSpec(cfg.get("synth.sigma", 0.0), seed))
    files = [write_trace_csv(out / "trace.csv", tr, fmt)]
    truth = fit.as_dict()
    truth.update({"tau_s": bg.tau, "a1_per_hz": bg.a1, "phi0_rad": bg.phi0, "seed": seed})
    files.append(write_report(out / "truth.json", {"scenario": "linear", "truth": truth}))
    return files


def _synth_kerr(cfg, out, seed, fmt):
    tp = 2 * np.pi
    f_r = cfg.get("synth.f_r_GHz", 6e9)
    d = DuffingParams(f_r, tp * cfg.get("synth.kappa_MHz", 12e6), tp * cfg.get("synth.kappa_c_MHz", 11e6),
                      tp * cfg.get("synth.K_kHz", 216e3))
    att = cfg.get("calibration.attenuation_db", 66.0)
    powers = cfg.get("synth.powers_dbm")
    if powers is None:
        n = np.geomspace(0.05, 5.0, 6)
        pw = n * d.kappa**2 / (4 * d.kappa_c) * HBAR * tp * f_r
        powers = list(10 * np.log10(pw / 1e-3) + att)
    span = cfg.get("synth.span_MHz", 20 * d.kappa / tp)
    grid = np.linspace(f_r - span / 2, f_r + span / 2, cfg.get("synth.points", 801))
    sweep = gen_power_sweep(d, sorted(powers), att, grid, NoiseSpec(cfg.get("synth.sigma", 0.0), seed))
    files, entries = [], []
    for i, tr in enumerate(sweep.traces):
        name = f"sweep_{i:03d}.csv"
        files.append(write_trace_csv(out / name, tr, fmt))
        entries.append({"file": name, "power_dbm": tr.metadata["power_dbm"], "attenuation_db": att,
                        "bias_current_a": None})
    files.append(write_manifest(out / "manifest.json", entries))
    truth = {"f_r0_hz": d.f_r0, "kappa": d.kappa, "kappa_c": d.kappa_c, "K_over_2pi_hz": d.K / tp,
             "bistable": sweep.bistable, "seed": seed}
    files.append(write_report(out / "truth.json", {"scenario": "kerr", "truth": truth}))
    return files


def _synth_tls(cfg, out, seed, fmt):
    m = TlsModel(cfg.get("synth.delta0", 3.4e-7), cfg.get("synth.deltaTLS", 2.6e-6),
                 cfg.get("synth.beta_exp", 0.295), cfg.get("synth.n_star", 3.30))
    n = np.geomspace(cfg.get("synth.n_min", 1e-3), cfg.get("synth.n_max", 1e8), cfg.get("synth.points", 61))
    q = tls_qi(m, n)
    sigma = cfg.get("synth.sigma", 0.0)
    if sigma > 0:
        q = q * (1 + sigma * rng_for(seed, 0).standard_normal(n.size))
    files = [write_rows(out / "tls.csv", ["photon_number", "Q_i"], zip(n, q))]
    truth = {"delta0": m.delta0, "deltaTLS": m.deltaTLS, "beta_exp": m.beta_exp, "n_star": m.n_star,
             "relative_sigma": sigma, "seed": seed}
    files.append(write_report(out / "truth.json", {"scenario": "tls", "truth": truth}))
    return files


def _synth_fluxmap(cfg, out, seed, fmt):
    ftr = cfg.ftr_params()
    cal = cfg.calibration()
    start = cfg.get("solver.current_start_uA", cal.I_off - 1.5 * abs(cal.I_Phi0))
    stop = cfg.get("solver.current_stop_uA", cal.I_off + 1.5 * abs(cal.I_Phi0))
    currents = np.linspace(start, stop, cfg.get("solver.current_points", 241))
    fm = gen_flux_map(ftr, cal, currents, noise=NoiseSpec(0.0, seed), sweep=bool(cfg.get("solver.sweep", False)),
                      exact=bool(cfg.get("solver.exact", False)), freq_noise_hz=cfg.get("synth.freq_noise_MHz", 0.0))
    files = [write_rows(out / "map.csv", ["current_a", "f_r_hz"], zip(fm.currents, fm.f_r))]
    sq = ftr.squid
    truth = {"A": ftr.scaling_A, "alpha": sq.alpha, "I0_nA": sq.I0 * 1e9, "Lg_pH": sq.Lg * 1e12,
             "beta_L": sq.beta_L, "I_off_uA": cal.I_off * 1e6, "I_Phi0_uA": cal.I_Phi0 * 1e6,
             "frequency_jumps_a": [float(fm.currents[i]) for i in fm.frequency_jumps],
             "screened_flux_jumps_a": [float(fm.currents[i]) for i in fm.phi_s_jumps], "seed": seed}
    files.append(write_report(out / "truth.json", {"scenario": "fluxmap", "truth": truth}))
    return files


def cmd_synth(args) -> int:
    cfg = _config(args)
    out = _out_dir(args, cfg)
    seed = args.seed if args.seed is not None else 0
    fmt = cfg.get("io.trace_format", "reim")
    gen = {"linear": _synth_linear, "kerr": _synth_kerr, "tls": _synth_tls, "fluxmap": _synth_fluxmap}
    for f in gen[args.scenario](cfg, out, seed, fmt):
        print(f)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML or JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--format", choices=("csv", "json"), help="table output format")

    p = _Parser(prog="fluxtune", description="Flux-tunable resonator modelling and fitting.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("screen", parents=[common], help="screened flux vs. applied flux")
    s.set_defaults(func=cmd_screen)

    t = sub.add_parser("tune", parents=[common], help="resonance frequency vs. flux or current")
    t.add_argument("--exact", action="store_true", help="solve the transcendental resonance condition")
    t.set_defaults(func=cmd_tune)

    m = sub.add_parser("mutual", parents=[common], help="mutual inductance and transfer efficiency")
    m.add_argument("--geometry", metavar="PATH", help="loop geometry file (JSON or CSV)")
    m.set_defaults(func=cmd_mutual)

    f = sub.add_parser("fit", parents=[common], help="fit traces, sweeps, TLS data or flux maps")
    f.add_argument("--mode", choices=FIT_MODES, required=True)
    f.add_argument("--background", dest="background", action="store_true", default=None,
                   help="remove the cable background before fitting")
    f.add_argument("--no-background", dest="background", action="store_false")
    f.add_argument("inputs", nargs="+", metavar="PATH")
    f.set_defaults(func=cmd_fit)

    y = sub.add_parser("synth", parents=[common], help="generate synthetic data")
    y.add_argument("--scenario", choices=SCENARIOS, required=True)
    y.add_argument("--seed", type=int, default=None)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("FLUXTUNE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        key = f" [{exc.key}]" if exc.key else ""
        print(f"config error{key}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except FluxtuneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
