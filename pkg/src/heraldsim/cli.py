"""Command-line drivers: simulate, analyze, tomo, report, selftest."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, fock, io, model, synth, tomography, wigner
from .analysis import AnalysisError
from .config import ConfigError, RunConfig

log = logging.getLogger("heraldsim")

EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2


def _suffix(cfg: RunConfig) -> str:
    return "_hd" if cfg["tomo.eta_correction"] == "hd" else ""


def cmd_simulate(cfg: RunConfig, out: Path) -> dict:
    """Synthesize a heralded run and write ``traces.hqtr`` and ``calibration.hqtr``."""
    params = cfg.experiment_params()
    traces = synth.synthesize_run(params, seed=cfg["run.seed"], options=cfg.synth_options())
    main, cal = io.save_traces(out, traces)
    summary = {
        "traces_file": main.name,
        "calibration_file": cal.name if cal else None,
        "n_traces": len(traces),
        "n_samples": traces.n_samples,
        "herald_index": traces.herald_index,
        "model_wigner_origin": wigner.wigner_origin(model.heralded_state(params)),
        **cfg.provenance(),
    }
    io.write_json(Path(out) / "simulate.json", summary)
    return summary


def cmd_analyze(trace_path: Path, cfg: RunConfig, out: Path, calibration_path: Path | None = None) -> dict:
    """Extract the temporal mode, quadrature records and squeezing report from a trace file."""
    traces = io.load_traces(trace_path, calibration_path)
    if traces.calibration is None:
        raise ValueError(f"no vacuum calibration traces found for {trace_path}")
    result = analysis.analyze(
        traces,
        window=(cfg["analysis.window_start_s"], cfg["analysis.window_end_s"]),
        decimation=cfg["analysis.decimation"],
        guard_s=cfg["analysis.guard_s"],
        theta0=cfg["analysis.theta0_rad"],
        n_bins=cfg["analysis.phase_bins"],
        n_bootstrap=cfg["analysis.bootstrap"],
        smoothing=cfg["analysis.smoothing"],
        seed=cfg["run.seed"],
    )
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_mode_csv(out / "mode.csv", result.mode)
    io.write_spectrum_csv(out / "spectrum.csv", result.spectrum)
    io.write_records_csv(out / "records.csv", result.heralded)
    summary = {
        "gamma_over_pi_hz": result.fit.gamma_per_s / np.pi,
        "mode_fwhm_hz": result.fit.fwhm_hz,
        "mode_fit_residual": result.fit.residual,
        "eigenvalue_fraction": float(result.spectrum[0] / np.sum(result.spectrum)),
        "shot_scale_volts": result.shot_scale,
        "phase_method": result.phases.method,
        "squeezing": result.squeezing.to_dict(),
        "heralded_variance": float(np.var(result.heralded.x)),
        "n_records": len(result.heralded),
        "n_background_records": len(result.background),
        **cfg.provenance(),
    }
    if traces.true_phase is not None:
        err = np.angle(np.exp(2j * (result.phases.theta - np.mod(traces.true_phase, np.pi)))) / 2
        summary["phase_rms_error_rad"] = float(np.sqrt(np.mean(err**2)))
    io.write_json(out / "analysis.json", summary)
    return summary


def cmd_tomo(records_path: Path, cfg: RunConfig, out: Path) -> dict:
    """Maximum-likelihood reconstruction; writes ``rho[_hd].json`` and ``loglik[_hd].csv``."""
    records = io.read_records_csv(records_path)
    params = cfg.experiment_params()
    eta = cfg.tomo_eta(params)
    kwargs = dict(
        dim=cfg["tomo.dim"],
        iterations=cfg["tomo.iterations"],
        eta=eta,
        n_phase_bins=cfg["tomo.phase_bins"],
        bin_width=cfg["tomo.bin_width"],
    )
    result = tomography.maxlik_reconstruct(records, **kwargs)
    summary = {
        "wigner_origin": wigner.wigner_origin(result.rho),
        "eta": eta,
        "eta_correction": cfg["tomo.eta_correction"],
        "iterations": result.iterations,
        "final_loglik": float(result.loglik_history[-1]),
        "floored_bins": result.floored_bins,
        "diluted_steps": result.diluted_steps,
        "n_records": len(records),
        "populations": np.real(np.diag(result.rho)).tolist(),
    }
    n_boot = cfg["tomo.bootstrap"]
    if n_boot:
        samples = tomography.bootstrap(records, wigner.wigner_origin, n_boot, seed=cfg["run.seed"], **kwargs)
        summary["wigner_origin_bootstrap_std"] = float(np.std(samples, ddof=1)) if n_boot > 1 else float("nan")
        summary["bootstrap_resamples"] = n_boot
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    tag = _suffix(cfg)
    doc = {"povm_efficiency": eta, "eta_correction": cfg["tomo.eta_correction"], **cfg.provenance()}
    (out / f"rho{tag}.json").write_text(io.rho_to_json(result.rho, doc))
    io.write_loglik_csv(out / f"loglik{tag}.csv", result.loglik_history)
    io.write_json(out / f"tomo{tag}.json", {**summary, **cfg.provenance()})
    return summary


def _state_summary(rho: np.ndarray) -> dict:
    vmin, vmax, theta = model.covariance_extrema(rho)
    return {
        "wigner_origin": wigner.wigner_origin(rho),
        "populations": np.real(np.diag(rho)).tolist(),
        "mean_photon_number": fock.mean_photon_number(rho),
        "sq_db": fock.variance_to_db(vmin),
        "antisq_db": fock.variance_to_db(vmax),
        "squeeze_angle_rad": theta,
    }


def cmd_report(rho_path: Path, cfg: RunConfig, out: Path) -> dict:
    """Wigner grids of the reconstruction and the model prediction plus a comparison summary."""
    try:
        text = Path(rho_path).read_text()
    except OSError as exc:
        raise io.FormatError(f"cannot read {rho_path}: {exc}") from exc
    rho, doc = io.rho_from_json(text)
    fock.validate_state(rho, atol=1e-6)
    params = cfg.experiment_params()
    corrected = doc.get("eta_correction", cfg["tomo.eta_correction"]) == "hd"
    predicted = model.heralded_state(params.replace(fock_dim=rho.shape[0]), include_detection=not corrected)
    axis = wigner.default_axis(cfg["report.grid_half_width"], cfg["report.grid_points"])
    grid = wigner.wigner_grid(rho, axis, axis)
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    tag = "_hd" if corrected else ""
    io.write_wigner_csv(out / f"wigner{tag}.csv", grid)
    io.write_wigner_csv(out / f"wigner_model{tag}.csv", wigner.wigner_grid(predicted, axis, axis))
    summary = {
        "reconstructed": _state_summary(rho),
        "predicted": _state_summary(predicted),
        "fidelity_to_predicted": fock.fidelity(rho, predicted),
        "corrected_for_detection": corrected,
        "grid_integral": grid.integral(),
    }
    if cfg["report.projection"]:
        projected = model.projected_params(params, cfg["report.projection_eta_wg"])
        summary["projection"] = {
            "eta_wg": projected.eta_wg,
            "wigner_origin_corrected": wigner.wigner_origin(model.heralded_state(projected, include_detection=False)),
        }
    summary.update(cfg.provenance())
    io.write_json(out / f"summary{tag}.json", summary)
    return summary


def cmd_selftest(out: Path | None = None) -> bool:
    from . import acceptance

    results = acceptance.run_all(workdir=out)
    for r in results:
        print(r.line(), flush=True)
    return all(r.passed for r in results)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat 'section.key = value' config file")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--out", type=Path, help="output directory (overrides run.out)")
    common.add_argument("--eta-correction", choices=("none", "hd"), help="override tomo.eta_correction")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="heraldsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="synthesize heralded and calibration traces")
    p = sub.add_parser("analyze", parents=[common], help="temporal mode, records and squeezing from traces")
    p.add_argument("traces", type=Path)
    p.add_argument("--calibration", type=Path, help="vacuum calibration file (default: sibling calibration.hqtr)")
    p = sub.add_parser("tomo", parents=[common], help="maximum-likelihood tomography of a records file")
    p.add_argument("records", type=Path)
    p = sub.add_parser("report", parents=[common], help="Wigner grids and summary for a density matrix")
    p.add_argument("rho", type=Path)
    sub.add_parser("selftest", parents=[common], help="run the acceptance suite")
    return parser


def _resolve_config(args) -> RunConfig:
    cfg = RunConfig.load(args.config)
    changes = {}
    if args.seed is not None:
        changes["run.seed"] = args.seed
    if args.out is not None:
        changes["run.out"] = str(args.out)
    if args.eta_correction is not None:
        changes["tomo.eta_correction"] = args.eta_correction
    return cfg.override(**changes) if changes else cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_VALIDATION
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _resolve_config(args)
        out = Path(cfg["run.out"])
        if args.command == "simulate":
            summary = cmd_simulate(cfg, out)
            print(f"wrote {summary['n_traces']} traces to {out}")
        elif args.command == "analyze":
            summary = cmd_analyze(args.traces, cfg, out, args.calibration)
            sq = summary["squeezing"]
            print(f"gamma/pi = {summary['gamma_over_pi_hz'] / 1e6:.3f} MHz, "
                  f"sq = {sq['sq_db']:.2f} +- {sq['sq_db_err']:.2f} dB, "
                  f"antisq = {sq['antisq_db']:.2f} +- {sq['antisq_db_err']:.2f} dB")
        elif args.command == "tomo":
            summary = cmd_tomo(args.records, cfg, out)
            print(f"W(0,0) = {summary['wigner_origin']:.4f} (eta = {summary['eta']:.4f}, "
                  f"{summary['iterations']} iterations)")
        elif args.command == "report":
            summary = cmd_report(args.rho, cfg, out)
            print(f"W(0,0) = {summary['reconstructed']['wigner_origin']:.4f}, "
                  f"model {summary['predicted']['wigner_origin']:.4f}, "
                  f"fidelity {summary['fidelity_to_predicted']:.4f}")
        elif args.command == "selftest":
            return EXIT_OK if cmd_selftest(args.out) else EXIT_RUNTIME
    except AnalysisError as exc:
        log.error("%s", exc)
        return EXIT_RUNTIME
    except (ConfigError, io.FormatError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
