from __future__ import annotations

import hashlib

import numpy as np
import pytest

from heraldsim import fock, model, synth
from heraldsim.model import ExperimentParams

SHORT = ExperimentParams(trace_duration_s=1e-6)
OPTIONS = synth.SynthOptions(n_calibration=200)


def _project(samples: np.ndarray, end: int, mode, options=OPTIONS) -> np.ndarray:
    """Shot-noise-unit projection of each row on ``mode`` ending at sample ``end``."""
    seg = samples[:, end - mode.values.size + 1 : end + 1].astype(float)
    return seg @ mode.values * mode.dt / (options.raw_gain * np.sqrt(mode.dt))


def _sigma_var(v: float, n: int) -> float:
    return v * np.sqrt(2.0 / n)


def test_temporal_mode_shape():
    gamma = np.pi * 9.75e6
    mode = synth.injection_mode(ExperimentParams())
    assert mode.norm == pytest.approx(1.0, abs=1e-12)
    assert mode.values[-1] == pytest.approx(mode.values.max())
    assert mode.t_grid[-1] == 0.0
    assert mode.t_grid[0] <= -10.0 / gamma + mode.dt
    # |F(nu)|^2 of a one-sided exponential is Lorentzian with FWHM gamma / pi
    assert mode.fwhm_hz == pytest.approx(9.75e6, rel=0.01)


def test_temporal_mode_is_causal():
    gamma = 1e7
    t = np.linspace(-1e-6, 2e-7, 1201)
    mode = synth.temporal_mode(gamma, t)
    assert np.all(mode.values[t > 0] == 0.0)
    assert np.all(mode.values[t <= 0] > 0.0)
    assert mode.norm == pytest.approx(1.0, abs=1e-12)


def test_temporal_mode_errors():
    t = np.linspace(-1e-6, 0, 101)
    with pytest.raises(ValueError):
        synth.temporal_mode(0.0, t)
    with pytest.raises(ValueError):
        synth.temporal_mode(1e6, t)


def test_synthesis_is_deterministic():
    a = synth.synthesize_run(SHORT, n_traces=30, seed=1, options=OPTIONS)
    b = synth.synthesize_run(SHORT, n_traces=30, seed=1, options=OPTIONS)
    c = synth.synthesize_run(SHORT, n_traces=30, seed=2, options=OPTIONS)
    assert hashlib.sha256(a.samples.tobytes()).digest() == hashlib.sha256(b.samples.tobytes()).digest()
    np.testing.assert_array_equal(a.calibration, b.calibration)
    np.testing.assert_array_equal(a.true_phase, b.true_phase)
    assert not np.array_equal(a.samples, c.samples)


def test_per_trace_streams_do_not_depend_on_run_length():
    short = synth.synthesize_run(SHORT, n_traces=5, seed=9, options=OPTIONS)
    long = synth.synthesize_run(SHORT, n_traces=12, seed=9, options=OPTIONS)
    np.testing.assert_array_equal(short.samples, long.samples[:5])


def test_trace_set_layout():
    run = synth.synthesize_run(SHORT, n_traces=10, seed=1, options=OPTIONS)
    assert run.samples.shape == (10, 1000)
    assert run.samples.dtype == np.float32
    assert run.calibration.shape == (200, 1000)
    assert run.herald_index == 500
    assert run.sample_period_s == pytest.approx(1e-9)
    assert np.all(np.diff(run.acquisition_time_s) >= 0)
    assert run.params["rng_seed"] == 1


def test_vacuum_input_gives_shot_noise():
    params = SHORT.replace(initial_squeezing_db=0.0, false_herald_fraction=1.0)
    n = 40_000
    run = synth.synthesize_run(params, n_traces=n, seed=3, options=OPTIONS)
    mode = synth.injection_mode(params)
    x = _project(run.samples, run.herald_index, mode)
    assert x.var() == pytest.approx(0.5, rel=0.02)
    assert abs(x.mean()) < 4 * np.sqrt(0.5 / n)


@pytest.mark.parametrize("phase", [0.0, np.pi / 2])
def test_injected_mode_carries_heralded_marginal(phase):
    params = SHORT.replace(phase_ramp_rad_per_s=0.0)
    n = 20_000
    opts = synth.SynthOptions(n_calibration=100, initial_phase_rad=phase)
    run = synth.synthesize_run(params, n_traces=n, seed=4, options=opts)
    mode = synth.injection_mode(params)
    x = _project(run.samples, run.herald_index, mode, opts)
    expected = fock.quadrature_variance(model.heralded_state(params), phase)
    assert abs(x.var() - expected) < 3 * _sigma_var(expected, n)

    # a disjoint earlier window sees the squeezed background, uncorrelated with the herald mode
    bg = _project(run.samples, mode.values.size - 1, mode, opts)
    v_sq, v_anti = model.background_variances(params)
    expected_bg = v_sq if phase == 0.0 else v_anti
    assert abs(bg.var() - expected_bg) < 3 * _sigma_var(expected_bg, n)
    assert abs(np.corrcoef(x, bg)[0, 1]) < 3 / np.sqrt(n)


def test_background_variance_curve():
    theta = np.linspace(0, np.pi, 7)
    v = synth.background_variance(theta, 0.3, 1.1)
    assert v[0] == pytest.approx(0.3)
    assert v[3] == pytest.approx(1.1)
    assert v[6] == pytest.approx(0.3)
    assert np.all((v >= 0.3 - 1e-12) & (v <= 1.1 + 1e-12))


def test_phase_follows_ramp():
    run = synth.synthesize_run(SHORT, n_traces=200, seed=5, options=OPTIONS)
    expected = np.mod(SHORT.phase_ramp_rad_per_s * run.acquisition_time_s, 2 * np.pi)
    np.testing.assert_allclose(run.true_phase, expected, atol=1e-12)
    # mean herald spacing is 1 / 3 kHz
    gaps = np.diff(run.acquisition_time_s)
    assert gaps.mean() == pytest.approx(1 / 3000, rel=0.2)


def test_phase_drift_within_one_trace_is_negligible():
    params = ExperimentParams()
    drift = params.phase_ramp_rad_per_s * params.trace_duration_s
    assert drift < 1.42e-4


def test_synthesis_errors():
    with pytest.raises(ValueError):
        synth.synthesize_run(SHORT, n_traces=0)
    with pytest.raises(ValueError):
        synth.synthesize_run(SHORT.replace(trace_duration_s=2e-7), n_traces=2, options=OPTIONS)
