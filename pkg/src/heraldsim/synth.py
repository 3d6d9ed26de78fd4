"""Synthetic CW homodyne traces for a heralded single-mode state.

Each trace is stationary, band-limited squeezed noise at the local-oscillator
phase of that acquisition. The component along the heralded temporal mode is
then replaced by a quadrature drawn from the modelled heralded state, so the
mode carries exactly the heralded-state marginal and everything orthogonal to
it carries the squeezed background.

Internally traces are built in shot-noise units, where projecting a vacuum trace
onto any unit-norm slow mode gives variance 1/2, and are stored as volts via
``raw_gain``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from . import model
from .model import ExperimentParams
from .traces import TemporalMode, TraceSet

STREAM_TIMING, STREAM_HERALDED, STREAM_CALIBRATION = 0, 1, 2


@dataclass(frozen=True)
class SynthOptions:
    n_calibration: int = 5000
    raw_gain: float = 0.02  # sample volts = raw_gain * sqrt(dt) * shot-noise-unit signal
    initial_phase_rad: float = 0.0
    squeeze_axis_rad: float = 0.0
    mode_span_decays: float = 10.0
    burn_in: int = 64
    chunk: int = 512


def temporal_mode(gamma_per_s: float, t_grid: np.ndarray) -> TemporalMode:
    """Causal exponential mode ``sqrt(2 gamma) exp(gamma t)`` for ``t <= 0``, zero after.

    The discretized values are renormalized so that ``sum(f**2) * dt == 1``.
    """
    if gamma_per_s <= 0:
        raise ValueError("gamma must be positive")
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.min() > -8.0 / gamma_per_s * (1 - 1e-9):
        raise ValueError("grid must extend at least 8 decay constants before t = 0")
    values = np.where(t_grid <= 0.0, np.sqrt(2.0 * gamma_per_s) * np.exp(gamma_per_s * np.minimum(t_grid, 0.0)), 0.0)
    mode = TemporalMode(t_grid, values)
    mode.values = values / np.sqrt(mode.norm)
    return mode


def injection_mode(params: ExperimentParams, span_decays: float = 10.0) -> TemporalMode:
    """The heralded mode sampled on the trace clock, from ``-span_decays/gamma`` to 0."""
    dt = 1.0 / params.sample_rate_hz
    gamma = params.filter_gamma_per_s
    n = int(np.ceil(span_decays / (gamma * dt)))
    return temporal_mode(gamma, np.arange(-n, 1) * dt)


def _trace_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(stream, index)))


def _band_limited(white: np.ndarray, pole: float, burn_in: int) -> np.ndarray:
    # single-pole low-pass with unit DC gain
    return lfilter([1.0 - pole], [1.0, -pole], white, axis=-1)[..., burn_in:]


def background_variance(theta: np.ndarray, v_sq: float, v_anti: float, axis: float = 0.0) -> np.ndarray:
    c = np.cos(theta - axis)
    return v_sq * c**2 + v_anti * (1.0 - c**2)


def synthesize_run(
    params: ExperimentParams,
    n_traces: int | None = None,
    seed: int | None = None,
    options: SynthOptions = SynthOptions(),
) -> TraceSet:
    """Generate heralded and vacuum-calibration traces.

    Deterministic in ``seed``: every trace draws from its own generator keyed by
    ``(seed, stream, acquisition_index)``.
    """
    n_traces = params.n_traces if n_traces is None else n_traces
    seed = params.rng_seed if seed is None else seed
    if n_traces < 1:
        raise ValueError("n_traces must be at least 1")
    dt = 1.0 / params.sample_rate_hz
    n_samples = params.n_samples
    herald = n_samples // 2
    mode = injection_mode(params, options.mode_span_decays)
    support = np.arange(herald - mode.values.size + 1, herald + 1)
    if support[0] < 0:
        raise ValueError("trace too short to hold the heralded mode")
    pole = float(np.exp(-2.0 * np.pi * params.hd_bandwidth_hz * dt))
    to_volts = options.raw_gain * np.sqrt(dt)
    white_scale = np.sqrt(0.5 / dt)

    timing = _trace_rng(seed, STREAM_TIMING, 0)
    if params.herald_rate_hz > 0:
        gaps = timing.exponential(1.0 / params.herald_rate_hz, n_traces)
    else:
        gaps = np.zeros(n_traces)
    t_acq = np.cumsum(gaps)
    phases = np.mod(options.initial_phase_rad + params.phase_ramp_rad_per_s * t_acq, 2.0 * np.pi)

    heralded = model.heralded_state(params, include_detection=True)
    v_sq, v_anti = model.background_variances(params)
    scale = np.sqrt(2.0 * background_variance(phases, v_sq, v_anti, options.squeeze_axis_rad))

    samples = np.empty((n_traces, n_samples), dtype=np.float32)
    for start in range(0, n_traces, options.chunk):
        idx = range(start, min(start + options.chunk, n_traces))
        white = np.empty((len(idx), n_samples + options.burn_in))
        u = np.empty(len(idx))
        for row, i in enumerate(idx):
            rng = _trace_rng(seed, STREAM_HERALDED, i)
            white[row] = rng.standard_normal(n_samples + options.burn_in)
            u[row] = rng.random()
        x = _band_limited(white, pole, options.burn_in) * (white_scale * scale[start : start + len(idx), None])
        quad = model.quadrature_inverse_cdf(heralded, phases[list(idx)] - options.squeeze_axis_rad, u)
        seg = x[:, support]
        present = seg @ mode.values * dt
        x[:, support] = seg + np.outer(quad - present, mode.values)
        samples[start : start + len(idx)] = x * to_volts

    calibration = np.empty((options.n_calibration, n_samples), dtype=np.float32)
    for start in range(0, options.n_calibration, options.chunk):
        idx = range(start, min(start + options.chunk, options.n_calibration))
        white = np.stack([
            _trace_rng(seed, STREAM_CALIBRATION, i).standard_normal(n_samples + options.burn_in) for i in idx
        ])
        calibration[start : start + len(idx)] = _band_limited(white, pole, options.burn_in) * (white_scale * to_volts)

    snapshot = params.to_dict()
    snapshot.update(
        n_traces=n_traces,
        rng_seed=seed,
        synth={k: getattr(options, k) for k in ("n_calibration", "raw_gain", "initial_phase_rad", "squeeze_axis_rad")},
    )
    return TraceSet(
        samples=samples,
        sample_period_s=dt,
        herald_index=herald,
        calibration=calibration,
        true_phase=phases,
        acquisition_time_s=t_acq,
        params=snapshot,
    )
