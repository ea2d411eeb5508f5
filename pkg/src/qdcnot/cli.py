"""Command-line entry point: ``qdcnot <command> [options]``.

Every command writes CSV files and one ``report.json`` into the output
directory. Exit codes: 0 success, 2 configuration error, 3 runtime or fit error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    DegenerateRowError,
    ExtractionError,
    WindowSpec,
    chi2_test,
    extract_v1,
    extract_v2,
    pane_histograms,
    predicted_correlation_curves,
    retained_fraction,
    truth_table_from_histograms,
    write_report,
    write_table_csv,
)
from .circuit import CnotCircuitParams, LogicalInput, all_inputs, ideal_cnot_table, success_vs_v2, truth_table
from .config import ConfigError, RunConfig, default_config_yaml, load_config, parse_config
from .histogram import correlate
from .photonstats import FitError, estimate_g2, estimate_multiphoton_g, hom_visibility, hom_visibility_model
from .source import (
    OverlapModel,
    RoutingConfig,
    cnot_network,
    derive_seed,
    simulate_cnot,
    simulate_hbt,
    simulate_hom,
)
from .wavepacket import hom_dip_counts, integrated_visibility

log = logging.getLogger("qdcnot")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
HOM_REFLECTIVITY = 0.5


def ideal_config(cfg: RunConfig) -> RunConfig:
    """Ideal couplers, perfect visibilities, a fully coherent single-photon source."""
    em = replace(cfg.emitter, tau_c=2.0 * cfg.emitter.tau_r, g_multi=0.0)
    return cfg.replace(circuit=CnotCircuitParams.ideal(), emitter=em)


def validate(cfg: RunConfig) -> None:
    """Cross-section checks that the individual dataclasses cannot make."""
    try:
        OverlapModel.from_wavepacket(cfg.emitter.wavepacket(), cfg.circuit.V2)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _routing(cfg: RunConfig, input_state: str) -> RoutingConfig:
    return replace(cfg.routing, input_state=input_state)


def _simulate_panes(cfg: RunConfig, inputs, network) -> dict:
    hists = {}
    a = cfg.analysis
    for inp in inputs:
        log.info("simulating input |%s> for %d cycles", inp.label, cfg.emitter.sim_pulses)
        streams = simulate_cnot(
            cfg.emitter, cfg.circuit, _routing(cfg, inp.label), derive_seed(cfg.seed, inp.index),
            detector=cfg.detector, network=network,
        )
        hists.update(pane_histograms(streams, a.bin_width_ps, a.span_ns, inp.label))
    return hists


def _write_hists(out: Path, hists: dict, prefix: str = "hist") -> None:
    for (inp, outp), h in hists.items():
        h.to_csv(out / f"{prefix}_{inp}_{outp}.csv")


def cmd_truth_table(cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    analytic = truth_table(cfg.circuit)
    write_table_csv(out / "truth_table_analytic.csv", analytic.entries)
    network = cnot_network(cfg.circuit)
    hists = _simulate_panes(cfg, all_inputs(), network)
    _write_hists(out, hists)

    windows = cfg.analysis.windows
    widest = max(windows, key=lambda w: w.width)
    report = {
        "command": "truth-table",
        "config": cfg.to_dict(),
        "analytic": {
            "entries": analytic.entries,
            "row_success": analytic.row_success,
            "average_success": analytic.average_success,
            "postselection_prob": analytic.postselection_prob,
        },
        "monte_carlo": {},
    }
    for w in windows:
        tag = f"{w.width:g}ps"
        table = truth_table_from_histograms(hists, w)
        write_table_csv(out / f"truth_table_mc_{tag}.csv", table.entries)
        write_table_csv(out / f"truth_table_err_{tag}.csv", table.errors)
        write_table_csv(out / f"truth_table_diff_{tag}.csv", table.entries - analytic.entries)
        err_avg = 0.25 * float(np.sqrt(np.sum([table.errors[i.index, i.cnot().index] ** 2 for i in all_inputs()])))
        report["monte_carlo"][tag] = {
            "entries": table.entries,
            "errors": table.errors,
            "row_success": table.row_success,
            "average_success": table.average_success,
            "average_success_error": err_avg,
            "row_counts": table.postselection_prob,
            "retained_fraction": retained_fraction(hists, w, widest),
        }
    w0 = windows[0]
    v1, v1_err = extract_v1(hists[("00", "00")], hists[("00", "01")], w0)
    report["V1"] = {"value": v1, "error": v1_err, "window_ps": w0.width}
    # "V2" models the source and detectors; "V2_circuit_only" inverts the bare truth table
    for key, kwargs in (("V2", {"emitter": cfg.emitter, "detector": cfg.detector}), ("V2_circuit_only", {})):
        try:
            v2 = extract_v2(hists, cfg.circuit, w0, **kwargs)
            report[key] = {"value": v2.value, "error": v2.error, "chi2_min": v2.chi2_min, "window_ps": w0.width}
        except ExtractionError as exc:
            report[key] = {"error_message": str(exc)}
    report["ideal_table_deviation"] = float(np.abs(analytic.entries - ideal_cnot_table()).max())
    write_report(out / "report.json", report)
    return report


def parse_grid(text: str) -> np.ndarray:
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"grid must be start:stop:step, got {text!r}") from exc
    if step <= 0 or stop < start:
        raise ConfigError("empty V2 grid")
    grid = np.round(np.arange(start, stop + step / 2, step), 12)
    if grid.size == 0 or grid.min() < 0 or grid.max() > 1:
        raise ConfigError("V2 grid must be non-empty and inside [0, 1]")
    return grid


def cmd_sweep_v2(cfg: RunConfig, grid: np.ndarray) -> dict:
    out = _out_dir(cfg)
    curves = {"ideal": success_vs_v2(CnotCircuitParams.ideal(), grid), "experimental": success_vs_v2(cfg.circuit, grid)}
    with open(out / "sweep_v2.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["circuit", "v2", "success_c0", "success_c1", "success_avg"])
        for name, c in curves.items():
            for row in zip(c["v2"], c["success_c0"], c["success_c1"], c["success_avg"]):
                w.writerow([name, *(f"{x:.10g}" for x in row)])
    report = {"command": "sweep-v2", "config": cfg.to_dict(), "curves": curves}
    write_report(out / "report.json", report)
    return report


def cmd_hom(cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    a = cfg.analysis
    streams = simulate_hom(cfg.emitter, derive_seed(cfg.seed, 10), reflectivity=HOM_REFLECTIVITY, detector=cfg.detector)
    hist = correlate(streams[0], streams[1], a.bin_width_ps, a.span_ns)
    hist.to_csv(out / "hist_hom.csv")
    predicted_v = integrated_visibility(cfg.emitter.wavepacket())
    pattern = hom_dip_counts(cfg.emitter.wavepacket(), HOM_REFLECTIVITY, pulse_sep_ns=cfg.emitter.pulse_sep,
                             rep_period_ns=cfg.emitter.rep_period)
    with open(out / "hom_expected_peaks.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["offset_ns", "area_per_cycle"])
        for off, area in sorted(pattern.items()):
            w.writerow([f"{off:g}", f"{area:.10g}"])
    window = WindowSpec(a.windows_ps[0])
    raw, raw_err = hom_visibility(hist, cfg.emitter.pulse_sep, HOM_REFLECTIVITY, window)
    v, v_err = hom_visibility_model(hist, cfg.emitter, cfg.detector, HOM_REFLECTIVITY, window)
    report = {
        "command": "hom",
        "config": cfg.to_dict(),
        "V2_measured": {"value": v, "error": v_err},
        "V2_raw_ratio": {"value": raw, "error": raw_err},
        "V2_wavepacket": predicted_v,
        "reflectivity": HOM_REFLECTIVITY,
    }
    write_report(out / "report.json", report)
    return report


def cmd_g2(cfg: RunConfig) -> dict:
    out = _out_dir(cfg)
    a = cfg.analysis
    single = replace(cfg.emitter, double_pulse=False)
    s1 = simulate_hbt(single, derive_seed(cfg.seed, 20), detector=cfg.detector)
    h1 = correlate(s1[0], s1[1], a.bin_width_ps, a.g2_span_ns)
    h1.to_csv(out / "hist_g2_single_pulse.csv")
    g2, g2_err = estimate_g2(h1, single.rep_period, WindowSpec(a.windows_ps[0]))

    double = replace(cfg.emitter, double_pulse=True)
    s2 = simulate_hbt(double, derive_seed(cfg.seed, 21), detector=cfg.detector)
    h2 = correlate(s2[0], s2[1], a.bin_width_ps, a.span_ns)
    h2.to_csv(out / "hist_g2_double_pulse.csv")
    fit = estimate_multiphoton_g(h2, double.pulse_sep, model=a.peak_model)
    fits = {a.peak_model: fit}
    for model in ("laplace_gauss", "lorentzian"):
        if model not in fits:
            try:
                fits[model] = estimate_multiphoton_g(h2, double.pulse_sep, model=model)
            except FitError as exc:
                log.warning("%s fit failed: %s", model, exc)
    report = {
        "command": "g2",
        "config": cfg.to_dict(),
        "g2_zero": {"value": g2, "error": g2_err},
        "g": {"value": fit.g, "error": fit.error, "model": fit.model},
        "g_by_peak_model": {
            m: {"value": f.g, "error": f.error, "chi2": f.chi2, "dof": f.dof, "central_residual": f.residual}
            for m, f in fits.items()
        },
    }
    write_report(out / "report.json", report)
    return report


def cmd_correlations(cfg: RunConfig, input_state: str) -> dict:
    out = _out_dir(cfg)
    a = cfg.analysis
    inp = LogicalInput.parse(input_state)
    network = cnot_network(cfg.circuit)
    hists = _simulate_panes(cfg, [inp], network)
    _write_hists(out, hists)
    panes = {}
    for (i, o), h in hists.items():
        model = predicted_correlation_curves(
            cfg.emitter, cfg.circuit, i, o, detector=cfg.detector, routing=_routing(cfg, i),
            bin_width=a.bin_width_ps, span_ns=a.span_ns, network=network,
        )
        model.to_csv(out / f"model_{i}_{o}.csv")
        chi2, dof, p = chi2_test(h, model)
        panes[f"{i}|{o}"] = {
            "areas": {f"{w:g}ps": float(h.counts[h.window_mask(*WindowSpec(w).bounds)].sum()) for w in a.windows_ps},
            "chi2": chi2,
            "dof": dof,
            "p_value": p,
        }
    report = {"command": "correlations", "config": cfg.to_dict(), "input_state": inp.label, "panes": panes}
    write_report(out / "report.json", report)
    return report


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML run configuration")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("--window-ps", type=float, metavar="N", help="single coincidence window width in ps")
    common.add_argument("--cycles", type=int, metavar="N", help="laser cycles to simulate")
    common.add_argument("--ideal", action="store_true", help="ideal circuit and fully coherent single-photon source")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="qdcnot", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("--print-default-config", action="store_true", help="print a documented default config and exit")
    sub = p.add_subparsers(dest="command")
    sub.add_parser("truth-table", parents=[common], help="analytic and Monte Carlo truth tables")
    sw = sub.add_parser("sweep-v2", parents=[common], help="success probability against V2")
    sw.add_argument("--grid", default="0:1:0.01", help="start:stop:step (default 0:1:0.01)")
    sub.add_parser("hom", parents=[common], help="pulsed two-photon interference")
    sub.add_parser("g2", parents=[common], help="autocorrelation, g2(0) and multi-photon probability")
    co = sub.add_parser("correlations", parents=[common], help="four correlation panes of one input")
    co.add_argument("--input", dest="input_state", help="logical input, e.g. 10 (default: routing.input_state)")
    return p


def resolve_config(args) -> RunConfig:
    if args.config:
        cfg = load_config(args.config, seed=args.seed)
    else:
        cfg = parse_config("", seed=args.seed)
    try:
        if args.out:
            cfg = cfg.replace(out=args.out)
        if args.cycles is not None:
            cfg = cfg.replace(emitter=replace(cfg.emitter, sim_pulses=args.cycles))
        if args.window_ps is not None:
            cfg = cfg.replace(analysis=replace(cfg.analysis, windows_ps=(float(args.window_ps),)))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.ideal:
        cfg = ideal_config(cfg)
    validate(cfg)
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.print_default_config:
        sys.stdout.write(default_config_yaml())
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "sweep-v2":
            grid = parse_grid(args.grid)
        if args.command == "correlations":
            input_state = args.input_state or cfg.routing.input_state
            LogicalInput.parse(input_state)
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "truth-table":
            rep = cmd_truth_table(cfg)
            summary = {k: round(v["average_success"], 4) for k, v in rep["monte_carlo"].items()}
            print(f"analytic average success {rep['analytic']['average_success']:.4f}; Monte Carlo {summary}")
        elif args.command == "sweep-v2":
            cmd_sweep_v2(cfg, grid)
        elif args.command == "hom":
            rep = cmd_hom(cfg)
            print(f"V2 = {rep['V2_measured']['value']:.3f} +- {rep['V2_measured']['error']:.3f}")
        elif args.command == "g2":
            rep = cmd_g2(cfg)
            print(f"g2(0) = {rep['g2_zero']['value']:.4f} +- {rep['g2_zero']['error']:.4f}; "
                  f"g = {rep['g']['value']:.4f} +- {rep['g']['error']:.4f}")
        elif args.command == "correlations":
            cmd_correlations(cfg, input_state)
    except (ExtractionError, FitError, DegenerateRowError, ZeroDivisionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"results written to {cfg.out}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
