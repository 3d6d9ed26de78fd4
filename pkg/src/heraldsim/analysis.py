"""Temporal-mode extraction, quadrature projection, phase inference and squeezing metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .fock import VACUUM_VARIANCE, variance_to_db
from .traces import HomodyneTrace, QuadratureRecords, TemporalMode, TraceSet

log = logging.getLogger(__name__)


class AnalysisError(ValueError):
    pass


@dataclass
class Binned:
    """Traces block-averaged so that a bin edge falls right after the herald sample."""

    values: np.ndarray  # (n_traces, n_bins)
    t_centers: np.ndarray  # bin-centre times relative to the herald, s
    dt: float
    factor: int
    sample_period_s: float

    def bin_extent(self) -> tuple[np.ndarray, np.ndarray]:
        """Times of the first and last raw sample in each bin."""
        half = 0.5 * (self.factor - 1) * self.sample_period_s
        return self.t_centers - half, self.t_centers + half

    def select(self, window: tuple[float, float]) -> np.ndarray:
        """Indices of bins lying entirely inside ``window``."""
        lo, hi = self.bin_extent()
        tol = 1e-3 * self.sample_period_s
        idx = np.nonzero((lo >= window[0] - tol) & (hi <= window[1] + tol))[0]
        if idx.size == 0:
            raise AnalysisError(f"window {window} contains no complete bins")
        return idx

    def index_of(self, t: np.ndarray) -> np.ndarray:
        k = np.rint((np.asarray(t) - self.t_centers[0]) / self.dt).astype(int)
        if k.min() < 0 or k.max() >= self.t_centers.size:
            raise AnalysisError("mode window exceeds the trace bounds")
        if not np.allclose(self.t_centers[k], t, atol=1e-3 * self.sample_period_s, rtol=0):
            raise AnalysisError("mode grid is not aligned with the decimated trace grid")
        return k


def decimate(samples: np.ndarray, sample_period_s: float, herald_index: int, factor: int) -> Binned:
    samples = np.atleast_2d(samples)
    if factor < 1:
        raise ValueError("decimation factor must be >= 1")
    start = (herald_index + 1) % factor
    n_bins = (samples.shape[1] - start) // factor
    block = samples[:, start : start + n_bins * factor]
    values = block.reshape(samples.shape[0], n_bins, factor).mean(axis=2, dtype=np.float64)
    first = np.arange(n_bins) * factor + start
    t_centers = (first + 0.5 * (factor - 1) - herald_index) * sample_period_s
    return Binned(values, t_centers, factor * sample_period_s, factor, sample_period_s)


def _decimate_for(mode: TemporalMode, samples: np.ndarray, sample_period_s: float, herald_index: int) -> Binned:
    factor = int(round(mode.dt / sample_period_s))
    if factor < 1 or abs(factor * sample_period_s - mode.dt) > 1e-6 * mode.dt:
        raise AnalysisError("mode sampling is not an integer multiple of the trace sampling")
    return decimate(samples, sample_period_s, herald_index, factor)


@dataclass
class Autocorrelation:
    matrix: np.ndarray
    t_grid: np.ndarray
    dt: float


def autocorrelation_matrix(
    traces: TraceSet,
    window: tuple[float, float] = (-250e-9, 0.0),
    decimation: int = 8,
    min_traces: int = 100,
) -> Autocorrelation:
    """``K(t, t') = mean_i x_i(t) x_i(t')`` over the (decimated) analysis window."""
    if len(traces) < min_traces:
        raise AnalysisError(f"need at least {min_traces} traces, got {len(traces)}")
    binned = decimate(traces.samples, traces.sample_period_s, traces.herald_index, decimation)
    idx = binned.select(window)
    y = binned.values[:, idx]
    k = y.T @ y / y.shape[0]
    k = 0.5 * (k + k.T)
    return Autocorrelation(k, binned.t_centers[idx], binned.dt)


def principal_mode(
    k: np.ndarray, dt: float, t_grid: np.ndarray | None = None
) -> tuple[TemporalMode, np.ndarray]:
    """Top eigenvector of ``k`` as a unit-norm mode, plus the descending eigenvalues.

    The sign is chosen so the largest-magnitude sample is positive. Degenerate
    input still yields a unit vector; the spectrum shows the (zero) gap.
    """
    k = np.asarray(k, dtype=float)
    scale = max(np.max(np.abs(k)), np.finfo(float).tiny)
    if np.max(np.abs(k - k.T)) > 1e-9 * scale:
        raise AnalysisError("autocorrelation matrix is not symmetric")
    vals, vecs = np.linalg.eigh(0.5 * (k + k.T))
    order = np.argsort(vals)[::-1]
    vals, vecs = vals[order], vecs[:, order]
    top = vecs[:, 0]
    if top[np.argmax(np.abs(top))] < 0:
        top = -top
    if t_grid is None:
        t_grid = (np.arange(top.size) - (top.size - 1)) * dt
    return TemporalMode(t_grid, top / np.sqrt(dt)), vals


@dataclass
class ExponentialFit:
    gamma_per_s: float
    fwhm_hz: float
    t0: float
    residual: float


def fit_exponential_mode(mode: TemporalMode) -> ExponentialFit:
    """Least-squares fit of ``sqrt(2 gamma) exp(gamma (t - t0)) u(t0 - t)``.

    Shapes are compared after normalization, so the fit maximizes the overlap.
    ``t0`` only enters through which samples are inside the support, so it is
    scanned over the gaps between samples at and after the peak.
    """
    t = mode.t_grid
    data = mode.values / np.sqrt(np.sum(mode.values**2))
    peak = int(np.argmax(data))
    span = t[-1] - t[0] + mode.dt
    best = None
    for cut in range(peak, t.size):
        support = slice(0, cut + 1)
        tt = t[support] - t[cut]

        def neg_overlap(log_gamma, tt=tt, support=support):
            g = np.exp(np.exp(log_gamma) * tt)
            return -float(data[support] @ g) / np.sqrt(g @ g)

        res = minimize_scalar(
            neg_overlap,
            bounds=(np.log(0.1 / span), np.log(10.0 / mode.dt)),
            method="bounded",
            options={"xatol": 1e-10},
        )
        if best is None or res.fun < best[0]:
            best = (res.fun, float(np.exp(res.x)), cut)
    overlap, gamma, cut = -best[0], best[1], best[2]
    residual = max(0.0, 1.0 - overlap**2)
    if residual > 0.1:
        log.warning("temporal mode is not exponential (fit residual %.3f)", residual)
    t0 = float(t[cut] + 0.5 * mode.dt)
    return ExponentialFit(gamma, gamma / np.pi, t0, residual)


def mode_projections(
    samples: np.ndarray,
    sample_period_s: float,
    herald_index: int,
    mode: TemporalMode,
    offsets_s=(0.0,),
) -> np.ndarray:
    """Raw ``sum_k f(t_k) x(t_k) dt`` for each trace and each mode offset, shape ``(n, n_offsets)``."""
    binned = _decimate_for(mode, samples, sample_period_s, herald_index)
    out = np.empty((binned.values.shape[0], len(offsets_s)))
    for j, off in enumerate(offsets_s):
        idx = binned.index_of(mode.t_grid + off)
        out[:, j] = binned.values[:, idx] @ mode.values * mode.dt
    return out


def extract_quadrature(trace: HomodyneTrace, mode: TemporalMode, shot_scale: float = 1.0) -> float:
    """Project one trace on the heralded mode, in shot-noise units."""
    raw = mode_projections(trace.samples[None, :], trace.sample_period_s, trace.herald_index, mode)
    return float(raw[0, 0] / shot_scale)


def slot_offsets(
    n_samples: int,
    sample_period_s: float,
    herald_index: int,
    mode: TemporalMode,
    exclude: tuple[float, float] | None = None,
) -> np.ndarray:
    """Non-overlapping shifts of ``mode`` that fit inside the trace and avoid ``exclude``."""
    length = mode.t_grid.size * mode.dt
    t_first = -herald_index * sample_period_s
    t_last = (n_samples - 1 - herald_index) * sample_period_s
    lo_k = int(np.ceil((t_first - mode.t_grid[0]) / length - 1e-9))
    hi_k = int(np.floor((t_last - mode.t_grid[-1]) / length + 1e-9))
    offsets = []
    half_bin = 0.5 * mode.dt
    for k in range(lo_k, hi_k + 1):
        off = k * length
        start, end = mode.t_grid[0] + off - half_bin, mode.t_grid[-1] + off + half_bin
        if start < t_first - 1e-12 or end > t_last + sample_period_s + 1e-12:
            continue
        if exclude is not None and end > exclude[0] and start < exclude[1]:
            continue
        offsets.append(off)
    return np.array(offsets)


def calibrate_shot_noise(calibration: np.ndarray | TraceSet, mode: TemporalMode, sample_period_s=None, herald_index=None) -> float:
    """Scale mapping raw mode projections of vacuum traces to variance 1/2.

    Vacuum noise is stationary, so every non-overlapping copy of the mode along
    each calibration trace contributes a sample.
    """
    if isinstance(calibration, TraceSet):
        sample_period_s, herald_index = calibration.sample_period_s, calibration.herald_index
        calibration = calibration.require_calibration(100)
    if calibration.shape[0] < 100:
        raise AnalysisError("need at least 100 vacuum calibration traces")
    offsets = slot_offsets(calibration.shape[1], sample_period_s, herald_index, mode)
    raw = mode_projections(calibration, sample_period_s, herald_index, mode, offsets)
    var = float(np.var(raw))
    if var < 1e-300:
        raise AnalysisError("vacuum variance is below the numerical floor")
    return float(np.sqrt(var / VACUUM_VARIANCE))


def herald_exclusion(mode: TemporalMode, guard_s: float) -> tuple[float, float]:
    return (float(mode.t_grid[0] - 0.5 * mode.dt - guard_s), float(mode.t_grid[-1] + 0.5 * mode.dt + guard_s))


def background_slot_variances(
    traces: TraceSet,
    decimation: int,
    exclude: tuple[float, float],
    min_slots: int = 100,
) -> tuple[np.ndarray, int]:
    """Per-trace variance of decimated background bins, in shot-noise units.

    Each bin is a boxcar temporal mode; its vacuum variance comes from the
    calibration traces. Returns ``(variances, slots_per_trace)``.
    """
    cal = traces.require_calibration(100)
    cal_binned = decimate(cal, traces.sample_period_s, traces.herald_index, decimation)
    vac = float(np.var(cal_binned.values))
    binned = decimate(traces.samples, traces.sample_period_s, traces.herald_index, decimation)
    lo, hi = binned.bin_extent()
    keep = (hi < exclude[0]) | (lo > exclude[1])
    n_slots = int(keep.sum())
    if n_slots < min_slots:
        raise AnalysisError(f"only {n_slots} background slots per trace; need {min_slots}")
    v = np.var(binned.values[:, keep], axis=1) / vac * VACUUM_VARIANCE
    return v, n_slots


def _loo_smooth(v: np.ndarray, half: int) -> np.ndarray:
    """Mean of the ``2*half`` nearest neighbours, excluding the point itself."""
    n = v.size
    c = np.concatenate([[0.0], np.cumsum(v)])
    i = np.arange(n)
    lo = np.clip(i - half, 0, n)
    hi = np.clip(i + half + 1, 0, n)
    count = hi - lo - 1
    return (c[hi] - c[lo] - v) / np.maximum(count, 1)


def _step_kernel(step: float, jitter: float, grid_step: float) -> tuple[np.ndarray, int]:
    """Discretized distribution of the phase advance between acquisitions.

    Herald arrivals are Poissonian, so under a linear ramp the advance is
    exponential with mean ``|step|``; ``jitter`` adds Gaussian phase diffusion.
    Returns ``(weights, offset)`` where ``weights[j]`` is the probability of
    moving ``j - offset`` grid cells.
    """
    mean = abs(step)
    sigma = max(jitter, 0.5 * grid_step)
    reach = int(np.ceil((mean * 12.0 + 6.0 * sigma) / grid_step)) + 1
    shifts = np.arange(-reach, reach + 1) * grid_step
    fine = np.linspace(-0.5, 0.5, 9) * grid_step
    pts = (shifts[:, None] + fine[None, :]).ravel()
    if mean > 0:
        # exponential convolved with a Gaussian (exponentially modified Gaussian)
        from scipy.stats import exponnorm

        dens = exponnorm.pdf(pts, mean / sigma, loc=0.0, scale=sigma)
    else:
        dens = np.exp(-0.5 * (pts / sigma) ** 2)
    w = dens.reshape(shifts.size, fine.size).sum(axis=1)
    w /= w.sum()
    if step < 0:
        w = w[::-1]
    return w, reach


def _circular_predict(prob: np.ndarray, kernel: np.ndarray, reach: int) -> np.ndarray:
    # new[g] = sum_j kernel[j] * prob[g - (j - reach)], on a periodic grid
    padded = np.concatenate([prob[-reach:], prob, prob[:reach]])
    return np.convolve(padded, kernel, mode="valid")


def _track(v: np.ndarray, n_slots: int, mean: float, amp: float, kernel, reach, grid) -> np.ndarray:
    """Leave-one-out phase posteriors ``p(theta_i | v_j, j != i)``, shape ``(n, G)``."""
    n, g = v.size, grid.size
    var_model = mean - amp * np.cos(2.0 * grid)
    dof = n_slots - 1
    # (dof) v / V ~ chi^2_dof
    loglik = -0.5 * dof * (v[:, None] / var_model[None, :] + np.log(var_model)[None, :])
    lik = np.exp(loglik - loglik.max(axis=1, keepdims=True))
    predicted = np.empty((n, g))
    prob = np.full(g, 1.0 / g)
    for i in range(n):
        predicted[i] = prob
        post = prob * lik[i]
        post /= post.sum()
        prob = _circular_predict(post, kernel, reach)
        prob /= prob.sum()
    back_kernel = kernel[::-1]
    backward = np.empty((n, g))
    beta = np.ones(g) / g
    for i in range(n - 1, -1, -1):
        backward[i] = beta
        # beta_{i-1}(theta) = sum_theta' T(theta -> theta') lik_i(theta') beta_i(theta')
        beta = _circular_predict(lik[i] * beta, back_kernel, reach)
        beta /= beta.sum()
    post = predicted * backward
    post /= post.sum(axis=1, keepdims=True)
    return post


@dataclass
class PhaseEstimate:
    theta: np.ndarray
    v_sq: float
    v_anti: float
    slots_per_trace: int
    method: str = "tracked"


def phases_from_variances(
    v: np.ndarray,
    n_slots: int,
    step: float,
    v_sq: float | None = None,
    v_anti: float | None = None,
    theta0: float = 0.0,
    jitter: float | None = None,
    grid_size: int = 512,
    smoothing: int = 10,
    iterations: int = 3,
) -> PhaseEstimate:
    """Infer LO phases from per-acquisition background variances.

    ``v`` holds one variance per acquisition, in acquisition order, and ``step``
    is the expected phase advance per acquisition. Inverting
    ``V(theta) = V_sq cos^2 theta + V_anti sin^2 theta`` only fixes the phase up
    to ``theta -> pi - theta``; with a ramp the ambiguity is lifted by tracking
    the phase forward and backward on a grid, assuming monotone advances. Each
    estimate is the posterior mean given all *other* acquisitions, so it is
    independent of the trace's own noise. Without a ramp (``step == 0``) the
    smoothed variance is inverted on the branch ``[0, pi/2]``.

    If the extrema ``v_sq``/``v_anti`` are not given they are estimated from
    the data and refined by regressing ``v`` on the posterior ``E[cos 2 theta]``.
    """
    v = np.asarray(v, dtype=float)
    dof = n_slots - 1
    noise_var = float(np.mean(2.0 * v**2 / dof))
    if v_sq is None or v_anti is None:
        mean = float(np.mean(v))
        amp = float(np.sqrt(max(2.0 * (np.var(v) - noise_var), 0.0)))
        estimate = True
    else:
        mean, amp = 0.5 * (v_sq + v_anti), 0.5 * (v_anti - v_sq)
        estimate = False
    floor = 5.0 * np.sqrt(noise_var / (2 * smoothing))
    if amp < floor:
        raise AnalysisError("squeezing is indistinguishable from vacuum noise; phases unidentifiable")

    if step == 0:
        s = _loo_smooth(v, smoothing)
        theta = 0.5 * np.arccos(np.clip((mean - s) / amp, -1.0, 1.0))
        return PhaseEstimate(np.mod(theta + theta0, np.pi), mean - amp, mean + amp, n_slots)

    grid = (np.arange(grid_size) + 0.5) * np.pi / grid_size
    jitter = 0.25 * abs(step) if jitter is None else jitter
    kernel, reach = _step_kernel(step, jitter, np.pi / grid_size)
    for it in range(iterations if estimate else 1):
        post = _track(v, n_slots, mean, amp, kernel, reach, grid)
        if estimate:
            c2 = post @ np.cos(2.0 * grid)
            design = np.column_stack([np.ones_like(c2), -c2])
            (mean, amp), *_ = np.linalg.lstsq(design, v, rcond=None)
            if amp < floor:
                raise AnalysisError("squeezing is indistinguishable from vacuum noise; phases unidentifiable")
    if estimate:
        post = _track(v, n_slots, mean, amp, kernel, reach, grid)
    z = post @ np.exp(2j * grid)
    theta = np.mod(0.5 * np.angle(z), np.pi)
    return PhaseEstimate(np.mod(theta + theta0, np.pi), float(mean - amp), float(mean + amp), n_slots)


def estimate_phases(
    traces: TraceSet,
    mode: TemporalMode,
    guard_s: float = 150e-9,
    decimation: int | None = None,
    step: float | None = None,
    **kwargs,
) -> PhaseEstimate:
    """Per-trace LO phase from the squeezed background outside the heralded window.

    ``step`` defaults to the configured ramp speed divided by the herald rate.
    """
    if decimation is None:
        decimation = int(round(mode.dt / traces.sample_period_s))
    if step is None:
        rate = traces.params.get("herald_rate_hz", 0.0)
        step = traces.params.get("phase_ramp_rad_per_s", 0.0) / rate if rate else 0.0
    exclude = herald_exclusion(mode, guard_s)
    v, n_slots = background_slot_variances(traces, decimation, exclude)
    return phases_from_variances(v, n_slots, step, **kwargs)


def nominal_phases(traces: TraceSet, theta0: float = 0.0) -> PhaseEstimate:
    """Phases implied by the configured ramp alone, for phase-insensitive input.

    Uses recorded acquisition times when present, else the mean spacing
    ``1 / herald_rate``.
    """
    ramp = traces.params.get("phase_ramp_rad_per_s", 0.0)
    if traces.acquisition_time_s is not None:
        t = np.asarray(traces.acquisition_time_s, dtype=float)
    else:
        rate = traces.params.get("herald_rate_hz", 0.0)
        t = np.arange(len(traces)) / rate if rate else np.zeros(len(traces))
    return PhaseEstimate(np.mod(theta0 + ramp * t, np.pi), float("nan"), float("nan"), 0, "nominal")


@dataclass
class SqueezingReport:
    sq_db: float
    antisq_db: float
    theta0: float
    sq_db_err: float
    antisq_db_err: float
    theta0_err: float
    n_records: int

    def to_dict(self) -> dict:
        return {k: float(v) if k != "n_records" else int(v) for k, v in self.__dict__.items()}


def _fit_variance_curve(x: np.ndarray, theta: np.ndarray, n_bins: int) -> tuple[float, float, float]:
    b = np.minimum((theta / np.pi * n_bins).astype(int), n_bins - 1)
    counts = np.bincount(b, minlength=n_bins)
    ok = counts >= 2
    s1 = np.bincount(b, x, n_bins)
    s2 = np.bincount(b, x * x, n_bins)
    st = np.bincount(b, theta, n_bins)
    var = (s2[ok] - s1[ok] ** 2 / counts[ok]) / (counts[ok] - 1)
    centers = st[ok] / counts[ok]
    w = np.sqrt(counts[ok])
    design = np.column_stack([np.ones(centers.size), np.cos(2 * centers), np.sin(2 * centers)])
    (a, c, s), *_ = np.linalg.lstsq(design * w[:, None], var * w, rcond=None)
    amp = np.hypot(c, s)
    # max of a + amp cos(2(theta - phi)) at phi; the squeezed axis is a quarter turn away
    theta0 = np.mod(0.5 * np.arctan2(s, c) + np.pi / 2, np.pi)
    return a - amp, a + amp, theta0


def squeezing_report(
    records: QuadratureRecords,
    n_bins: int = 36,
    n_bootstrap: int = 200,
    seed: int = 0,
) -> SqueezingReport:
    """Sinusoidal fit of the phase-binned variance, in dB relative to vacuum."""
    b = np.minimum((records.theta / np.pi * n_bins).astype(int), n_bins - 1)
    occupied = np.bincount(b, minlength=n_bins) > 0
    empty_run, longest = 0, 0
    for flag in np.concatenate([occupied, occupied]):
        empty_run = 0 if flag else empty_run + 1
        longest = max(longest, empty_run)
    if longest >= n_bins // 4:
        raise AnalysisError("phase coverage is insufficient for a variance fit")
    v_sq, v_anti, theta0 = _fit_variance_curve(records.x, records.theta, n_bins)
    if v_sq <= 0:
        raise AnalysisError("fitted minimum variance is not positive")
    rng = np.random.default_rng(seed)
    boot = []
    for _ in range(n_bootstrap):
        pick = rng.integers(0, len(records), len(records))
        bs = _fit_variance_curve(records.x[pick], records.theta[pick], n_bins)
        if bs[0] > 0:
            boot.append((variance_to_db(bs[0]), variance_to_db(bs[1]), bs[2]))
    boot = np.array(boot) if boot else np.full((1, 3), np.nan)
    dtheta = np.angle(np.exp(2j * (boot[:, 2] - theta0))) / 2
    return SqueezingReport(
        sq_db=variance_to_db(v_sq),
        antisq_db=variance_to_db(v_anti),
        theta0=float(theta0),
        sq_db_err=float(np.std(boot[:, 0])),
        antisq_db_err=float(np.std(boot[:, 1])),
        theta0_err=float(np.std(dtheta)),
        n_records=len(records),
    )


@dataclass
class AnalysisResult:
    mode: TemporalMode
    spectrum: np.ndarray
    fit: ExponentialFit
    shot_scale: float
    phases: PhaseEstimate
    heralded: QuadratureRecords
    background: QuadratureRecords
    squeezing: SqueezingReport


def analyze(
    traces: TraceSet,
    window: tuple[float, float] = (-250e-9, 0.0),
    decimation: int = 8,
    guard_s: float = 150e-9,
    theta0: float = 0.0,
    n_bins: int = 36,
    n_bootstrap: int = 200,
    smoothing: int = 10,
    seed: int = 0,
) -> AnalysisResult:
    """Run the full trace-to-records chain on a heralded run with calibration traces."""
    traces.require_calibration(100)
    ac = autocorrelation_matrix(traces, window, decimation)
    mode, spectrum = principal_mode(ac.matrix, ac.dt, ac.t_grid)
    fit = fit_exponential_mode(mode)
    shot = calibrate_shot_noise(traces, mode)
    try:
        phases = estimate_phases(traces, mode, guard_s, decimation, smoothing=smoothing, theta0=theta0)
    except AnalysisError as exc:
        log.warning("%s; falling back to nominal ramp phases", exc)
        phases = nominal_phases(traces, theta0)
    n = len(traces)
    x_h = mode_projections(traces.samples, traces.sample_period_s, traces.herald_index, mode)[:, 0] / shot
    heralded = QuadratureRecords(x_h, phases.theta, np.arange(n))
    offsets = slot_offsets(traces.n_samples, traces.sample_period_s, traces.herald_index, mode,
                           herald_exclusion(mode, guard_s))
    x_b = mode_projections(traces.samples, traces.sample_period_s, traces.herald_index, mode, offsets) / shot
    background = QuadratureRecords(
        x_b.ravel(), np.repeat(phases.theta, offsets.size), np.repeat(np.arange(n), offsets.size)
    )
    report = squeezing_report(background, n_bins, n_bootstrap, seed)
    return AnalysisResult(mode, spectrum, fit, shot, phases, heralded, background, report)
