"""Desk-scale acceptance checks, shared by ``heraldsim selftest`` and the test suite."""

from __future__ import annotations

import tempfile
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis, fock, io, model, tomography, wigner
from .config import RunConfig
from .traces import HomodyneTrace, QuadratureRecords

PIPELINE_SEED = 20220901


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number} {status}: {self.name} | {self.detail} | {self.seconds:.1f} s"


def _timed(number: int, name: str, fn) -> CriterionResult:
    start = time.perf_counter()
    passed, detail = fn()
    return CriterionResult(number, name, bool(passed), detail, time.perf_counter() - start)


def criterion_1() -> CriterionResult:
    def check():
        start = time.perf_counter()
        w0 = wigner.wigner_origin(model.heralded_state(model.ExperimentParams()))
        dt = time.perf_counter() - start
        return 0.011 <= w0 <= 0.020 and dt < 1.0, f"W(0,0) = {w0:.4f} in [0.011, 0.020], {dt:.3f} s"

    return _timed(1, "model W(0,0) with detection", check)


def criterion_2() -> CriterionResult:
    def check():
        start = time.perf_counter()
        w0 = wigner.wigner_origin(model.heralded_state(model.ExperimentParams(), include_detection=False))
        dt = time.perf_counter() - start
        return -0.075 <= w0 <= -0.055 and dt < 1.0, f"W(0,0) = {w0:.4f} in [-0.075, -0.055], {dt:.3f} s"

    return _timed(2, "corrected model W(0,0)", check)


def criterion_3() -> CriterionResult:
    def check():
        start = time.perf_counter()
        params = model.projected_params(model.ExperimentParams(), 0.97)
        w0 = wigner.wigner_origin(model.heralded_state(params, include_detection=False))
        dt = time.perf_counter() - start
        return abs(w0 + 0.22) <= 0.02 and dt < 1.0, f"W(0,0) = {w0:.4f}, target -0.22 +- 0.02, {dt:.3f} s"

    return _timed(3, "projection eta_wg = 0.97", check)


def criterion_4() -> CriterionResult:
    def check():
        sq = model.loss_corrected_variance_db(-1.80, 0.48)
        anti = model.loss_corrected_variance_db(3.36, 0.48)
        mirror = abs(anti + sq)
        ok = -5.45 <= sq <= -5.25 and mirror <= 0.1
        return ok, f"sq {sq:.3f} dB in [-5.45, -5.25], antisq {anti:.3f} dB, |antisq + sq| = {mirror:.3f}"

    return _timed(4, "loss-correction arithmetic", check)


@dataclass
class PipelineRun:
    workdir: Path
    analysis: dict
    tomo: dict
    generator_w0: float
    seconds: float


def run_pipeline(workdir: Path, seed: int = PIPELINE_SEED) -> PipelineRun:
    """simulate -> analyze -> tomo(eta = 1) at the default parameters."""
    from . import cli

    start = time.perf_counter()
    cfg = RunConfig().override(**{"run.seed": seed, "run.out": str(workdir)})
    cli.cmd_simulate(cfg, workdir)
    summary = cli.cmd_analyze(workdir / "traces.hqtr", cfg, workdir)
    tomo = cli.cmd_tomo(workdir / "records.csv", cfg, workdir)
    w0 = wigner.wigner_origin(model.heralded_state(cfg.experiment_params()))
    return PipelineRun(workdir, summary, tomo, w0, time.perf_counter() - start)


def criterion_5(run: PipelineRun) -> CriterionResult:
    def check():
        gamma = run.analysis["gamma_over_pi_hz"]
        sq = run.analysis["squeezing"]
        w0 = run.tomo["wigner_origin"]
        ok_a = abs(gamma / 9.75e6 - 1.0) <= 0.05
        ok_b = abs(sq["sq_db"] + 1.80) <= 0.15 and abs(sq["antisq_db"] - 3.36) <= 0.15
        ok_c = abs(w0 - run.generator_w0) <= 0.01
        detail = (
            f"(a) gamma/pi = {gamma / 1e6:.3f} MHz {'ok' if ok_a else 'out'}; "
            f"(b) sq {sq['sq_db']:.3f} / antisq {sq['antisq_db']:.3f} dB {'ok' if ok_b else 'out'}; "
            f"(c) W(0,0) {w0:.4f} vs generator {run.generator_w0:.4f} {'ok' if ok_c else 'out'}; "
            f"pipeline {run.seconds:.0f} s"
        )
        return ok_a and ok_b and ok_c and run.seconds < 300, detail

    return _timed(5, "end-to-end pipeline", check)


def criterion_6(run: PipelineRun) -> CriterionResult:
    from . import cli

    def check():
        start = time.perf_counter()
        cfg = RunConfig().override(**{"run.seed": PIPELINE_SEED, "tomo.eta_correction": "hd"})
        cli.cmd_tomo(run.workdir / "records.csv", cfg, run.workdir)
        dt = time.perf_counter() - start
        rho, _ = io.rho_from_json((run.workdir / "rho_hd.json").read_text())
        target = model.heralded_state(cfg.experiment_params(), include_detection=False)
        fid = fock.fidelity(rho, target)
        w0 = wigner.wigner_origin(rho)
        ok = fid >= 0.97 and abs(w0 + 0.065) <= 0.015 and dt < 120
        return ok, f"fidelity {fid:.4f} >= 0.97, W(0,0) = {w0:.4f} in -0.065 +- 0.015, {dt:.1f} s"

    return _timed(6, "efficiency-corrected tomography", check)


def criterion_7(n_records: int = 50_000, seed: int = 7) -> CriterionResult:
    def check():
        dim = fock.DEFAULT_DIM
        cases = [
            ("vacuum", fock.vacuum(dim), 0.995),
            ("-3 dB squeezed", fock.squeezed_vacuum(-3.0, dim), 0.99),
            ("lossy photon", fock.apply_loss(fock.fock_state(1, dim), 0.72), 0.99),
        ]
        ok, parts = True, []
        for i, (name, rho, threshold) in enumerate(cases):
            rng = np.random.default_rng([seed, i])
            x, theta = model.sample_quadratures(rho, n_records, rng)
            res = tomography.maxlik_reconstruct(QuadratureRecords.from_samples(x, theta), dim=dim, tol=0.0)
            fid = fock.fidelity(res.rho, rho)
            monotone = bool(np.all(np.diff(res.loglik_history) >= -1e-10))
            ok &= fid >= threshold and monotone and res.iterations == 200
            parts.append(f"{name} F={fid:.4f}>={threshold} monotone={monotone} it={res.iterations}")
        return ok, "; ".join(parts)

    return _timed(7, "MaxLik oracle reconstructions", check)


def _invariant_checks() -> dict[str, bool]:
    from . import synth

    checks = {}
    params = model.ExperimentParams()
    states = [
        fock.squeezed_vacuum(-3.0, 20),
        model.heralded_state(params),
        model.heralded_state(params, include_detection=False),
        fock.apply_loss(fock.fock_state(3, 20), 0.6),
    ]
    ok = True
    for rho in states:
        try:
            fock.validate_state(rho)
        except fock.StateError:
            ok = False
    checks["density-matrix invariants"] = ok

    rho = fock.squeezed_vacuum(-4.0, 20)
    composed = fock.apply_loss(fock.apply_loss(rho, 0.8), 0.7)
    checks["loss composition"] = bool(np.max(np.abs(composed - fock.apply_loss(rho, 0.56))) < 1e-12)

    dim = 15
    corr = model.heralded_state(params.replace(fock_dim=dim), include_detection=False)
    x_grid = np.linspace(-7.0, 7.0, 141)
    lossy = tomography.build_povm(0.4, x_grid, 0.72, dim, check_completeness=False)
    ideal = tomography.build_povm(0.4, x_grid, 1.0, dim, check_completeness=False)
    diff = np.max(np.abs(lossy.probabilities(corr) - ideal.probabilities(fock.apply_loss(corr, 0.72))))
    checks["POVM/channel duality"] = bool(diff < 1e-8)

    axis = np.linspace(-5.0, 5.0, 101)
    heralded = model.heralded_state(params)
    grid = wigner.wigner_grid(heralded, axis, axis)
    checks["parity vs grid"] = abs(grid.value_near(0.0, 0.0) - wigner.wigner_origin(heralded)) < 1e-9

    mode = synth.injection_mode(params)
    rng = np.random.default_rng(3)
    t1, t2 = rng.standard_normal((2, 1000))
    herald = 600

    def project(s):
        return analysis.extract_quadrature(HomodyneTrace(s, mode.dt, herald), mode)

    lin = project(2.0 * t1 - 0.5 * t2) - (2.0 * project(t1) - 0.5 * project(t2))
    checks["projection linearity"] = abs(lin) < 1e-9

    samples = rng.standard_normal((3, 17)).astype(np.float32)
    blob = io.encode_trace_file(samples, {"sample_rate_hz": 1e9, "herald_index": 8, "calibration": False,
                                          "params": {}, "true_phase": None, "acquisition_time_s": None})
    back, header = io.decode_trace_file(blob)
    checks["trace file round trip"] = back.tobytes() == samples.tobytes() and io.encode_trace_file(back, header) == blob
    return checks


def criterion_8() -> CriterionResult:
    def check():
        checks = _invariant_checks()
        failed = [k for k, v in checks.items() if not v]
        return not failed, ("all of " + ", ".join(checks)) if not failed else "failed: " + ", ".join(failed)

    return _timed(8, "structural invariants", check)


def run_all(workdir: Path | None = None) -> list[CriterionResult]:
    results = [criterion_1(), criterion_2(), criterion_3(), criterion_4()]
    with tempfile.TemporaryDirectory() as tmp:
        base = Path(workdir) if workdir is not None else Path(tmp)
        run = run_pipeline(base)
        results += [criterion_5(run), criterion_6(run)]
    results += [criterion_7(), criterion_8()]
    return results
