"""Containers for sampled homodyne records and temporal modes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class TemporalMode:
    """A real, discretized mode function with ``sum(values**2) * dt == 1``.

    ``t_grid`` is relative to the herald click (t = 0) and must be uniform.
    """

    t_grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.t_grid = np.asarray(self.t_grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t_grid.shape != self.values.shape or self.t_grid.ndim != 1:
            raise ValueError("t_grid and values must be 1-D arrays of equal length")
        if self.t_grid.size > 2 and not np.allclose(np.diff(self.t_grid), self.dt, rtol=1e-6, atol=0):
            raise ValueError("t_grid must be uniformly spaced")

    @property
    def dt(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0]) if self.t_grid.size > 1 else 1.0

    @property
    def norm(self) -> float:
        return float(np.sum(self.values**2) * self.dt)

    @property
    def fwhm_hz(self) -> float:
        """Full width at half maximum of ``|F(nu)|^2``, from a zero-padded FFT."""
        n_fft = 1 << max(16, int(np.ceil(np.log2(self.values.size * 64))))
        power = np.abs(np.fft.rfft(self.values, n_fft)) ** 2
        freqs = np.fft.rfftfreq(n_fft, self.dt)
        half = 0.5 * power.max()
        peak = int(np.argmax(power))
        above = np.nonzero(power[peak:] < half)[0]
        if peak != 0 or above.size == 0:
            return float("nan")
        k = peak + above[0]
        # linear interpolation between the straddling samples; spectrum is symmetric about 0
        f_half = freqs[k - 1] + (half - power[k - 1]) * (freqs[k] - freqs[k - 1]) / (power[k] - power[k - 1])
        return float(2.0 * f_half)

    def overlap(self, other: "TemporalMode") -> float:
        """Inner product with another mode sampled on the same grid."""
        if other.values.shape != self.values.shape:
            raise ValueError("modes are sampled on different grids")
        return float(np.sum(self.values * other.values) * self.dt)


@dataclass
class HomodyneTrace:
    samples: np.ndarray
    sample_period_s: float
    herald_index: int
    acquisition_index: int = 0
    true_phase_rad: float | None = None

    def __post_init__(self):
        if not 0 <= self.herald_index < self.samples.size:
            raise ValueError("herald_index outside the trace")

    def times(self) -> np.ndarray:
        return (np.arange(self.samples.size) - self.herald_index) * self.sample_period_s


@dataclass
class TraceSet:
    """A batch of equally shaped traces sharing sampling and herald position.

    ``samples`` is ``(n_traces, n_samples)``; row ``i`` is acquisition ``i``.
    ``calibration`` holds vacuum-input traces recorded with the same settings.
    """

    samples: np.ndarray
    sample_period_s: float
    herald_index: int
    calibration: np.ndarray | None = None
    true_phase: np.ndarray | None = None
    acquisition_time_s: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples.ndim != 2:
            raise ValueError("samples must be a 2-D array (traces x samples)")
        if not 0 <= self.herald_index < self.samples.shape[1]:
            raise ValueError("herald_index outside the trace")
        if self.calibration is not None and self.calibration.shape[1] != self.samples.shape[1]:
            raise ValueError("calibration traces have a different length")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("traces contain non-finite samples")

    def __len__(self) -> int:
        return self.samples.shape[0]

    def __getitem__(self, i: int) -> HomodyneTrace:
        phase = None if self.true_phase is None else float(self.true_phase[i])
        return HomodyneTrace(self.samples[i], self.sample_period_s, self.herald_index, i, phase)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    def require_calibration(self, minimum: int = 1) -> np.ndarray:
        if self.calibration is None or self.calibration.shape[0] < minimum:
            have = 0 if self.calibration is None else self.calibration.shape[0]
            raise ValueError(f"need at least {minimum} vacuum calibration traces, found {have}")
        return self.calibration


@dataclass
class QuadratureRecords:
    """Struct-of-arrays form of (x, theta, trace_index) tomography records."""

    x: np.ndarray
    theta: np.ndarray
    trace_index: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        # x_(theta+pi) = -x_theta
        flip = np.mod(theta, 2 * np.pi) >= np.pi
        self.x = np.where(flip, -x, x)
        self.theta = np.mod(theta, np.pi)
        self.trace_index = np.asarray(self.trace_index, dtype=np.int64)
        if not (self.x.shape == self.theta.shape == self.trace_index.shape):
            raise ValueError("record arrays must have equal length")
        if not (np.all(np.isfinite(self.x)) and np.all(np.isfinite(self.theta))):
            raise ValueError("records must be finite")

    def __len__(self) -> int:
        return self.x.size

    @classmethod
    def from_samples(cls, x, theta) -> "QuadratureRecords":
        x = np.asarray(x, dtype=float)
        return cls(x, theta, np.arange(x.size))

    def select(self, mask) -> "QuadratureRecords":
        return QuadratureRecords(self.x[mask], self.theta[mask], self.trace_index[mask])
