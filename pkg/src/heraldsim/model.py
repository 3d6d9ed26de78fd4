"""The experimental imperfection chain and its theoretical predictions."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import fock
from .fock import VACUUM_VARIANCE

HERALD_RATE_HZ = 3000.0
DARK_RATE_HZ = 80.0
# extra Fock levels carried through the loss chain before truncating to the output cutoff
WORK_PADDING = 10


@dataclass(frozen=True)
class ExperimentParams:
    """Physical and acquisition parameters; defaults reproduce the reported setup.

    Efficiencies are transmissions in [0, 1]. ``eta_s`` is the overall transmission
    of the subtraction tap; the tap's own ``1 - tap_reflectivity`` counts toward it.
    """

    initial_squeezing_db: float = -5.39
    eta_wg: float = 0.69
    eta_s: float = 0.96
    tap_reflectivity: float = 0.05
    eta_t: float = 0.94
    eta_pd: float = 0.80
    eta_el: float = 0.96
    false_herald_fraction: float = DARK_RATE_HZ / HERALD_RATE_HZ
    herald_rate_hz: float = HERALD_RATE_HZ
    dark_rate_hz: float = DARK_RATE_HZ
    filter_gamma_over_pi_hz: float = 9.75e6
    hd_bandwidth_hz: float = 300e6
    sample_rate_hz: float = 1e9
    trace_duration_s: float = 5e-6
    phase_ramp_rad_per_s: float = 9.0 * np.pi
    n_traces: int = 10_000
    fock_dim: int = fock.DEFAULT_DIM
    rng_seed: int = 20220901

    def __post_init__(self):
        if self.initial_squeezing_db > 0:
            raise ValueError("initial_squeezing_db must be <= 0")
        for name in ("eta_wg", "eta_s", "eta_t", "eta_pd", "eta_el", "false_herald_fraction"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        if not 0.0 < self.tap_reflectivity < 1.0:
            raise ValueError("tap_reflectivity must be in (0, 1)")
        if self.herald_rate_hz < 0 or self.dark_rate_hz < 0:
            raise ValueError("count rates must be non-negative")
        if self.filter_gamma_over_pi_hz <= 0 or self.hd_bandwidth_hz <= 0:
            raise ValueError("bandwidths must be positive")
        if self.sample_rate_hz <= 2.0 * self.hd_bandwidth_hz:
            raise ValueError(
                f"sample rate {self.sample_rate_hz:g} Hz is below Nyquist for "
                f"a {self.hd_bandwidth_hz:g} Hz detector"
            )
        if self.trace_duration_s <= 0:
            raise ValueError("trace_duration_s must be positive")
        if self.n_traces < 1:
            raise ValueError("n_traces must be at least 1")
        if self.fock_dim < 4:
            raise ValueError("fock_dim must be at least 4")

    @property
    def eta_hd(self) -> float:
        return self.eta_t * self.eta_pd * self.eta_el

    @property
    def eta_tot(self) -> float:
        return self.eta_wg * self.eta_s * self.eta_hd

    @property
    def tap_excess_transmission(self) -> float:
        """Loss on the transmitted tap port beyond the beam-splitter ratio itself."""
        return min(1.0, self.eta_s / (1.0 - self.tap_reflectivity))

    @property
    def filter_gamma_per_s(self) -> float:
        return np.pi * self.filter_gamma_over_pi_hz

    @property
    def n_samples(self) -> int:
        return int(round(self.trace_duration_s * self.sample_rate_hz))

    def replace(self, **changes) -> "ExperimentParams":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _finish(rho: np.ndarray, dim: int) -> np.ndarray:
    return fock.normalize(rho[:dim, :dim])


def heralded_state(params: ExperimentParams, include_detection: bool = True) -> np.ndarray:
    """Model of the heralded state with every modelled imperfection.

    Squeezed vacuum -> waveguide loss -> click on the tap (mixed with the
    unconditioned state at the false-herald fraction) -> excess tap loss ->
    optionally the homodyne efficiency.

    Raises:
        fock.HeraldError: for zero initial squeezing (nothing to subtract).
    """
    dim = params.fock_dim
    work = dim + WORK_PADDING
    squeezed = fock.squeezed_vacuum(params.initial_squeezing_db, work)
    after_wg = fock.apply_loss(squeezed, params.eta_wg)
    untouched = fock.apply_loss(after_wg, 1.0 - params.tap_reflectivity)
    if params.false_herald_fraction == 1.0:
        rho = untouched
    else:
        subtracted, _ = fock.photon_subtract(after_wg, params.tap_reflectivity)
        rho = fock.mix(subtracted, untouched, params.false_herald_fraction)
    rho = fock.apply_loss(rho, params.tap_excess_transmission)
    if include_detection:
        rho = fock.apply_loss(rho, params.eta_hd)
    return _finish(rho, dim)


def squeezed_background(params: ExperimentParams, include_detection: bool = True) -> np.ndarray:
    """The unheralded squeezed light after the same losses as :func:`heralded_state`."""
    work = params.fock_dim + WORK_PADDING
    rho = fock.squeezed_vacuum(params.initial_squeezing_db, work)
    eta = params.eta_wg * (1.0 - params.tap_reflectivity) * params.tap_excess_transmission
    if include_detection:
        eta *= params.eta_hd
    return _finish(fock.apply_loss(rho, eta), params.fock_dim)


def background_variances(params: ExperimentParams) -> tuple[float, float]:
    """Measured (squeezed, antisqueezed) variances of the background light."""
    rho = squeezed_background(params, include_detection=True)
    return fock.quadrature_variance(rho, 0.0), fock.quadrature_variance(rho, np.pi / 2)


def projected_params(params: ExperimentParams, eta_wg: float = 0.97) -> ExperimentParams:
    """Same setup with a better waveguide (integrated-chip projection)."""
    return params.replace(eta_wg=eta_wg)


def covariance_extrema(rho: np.ndarray) -> tuple[float, float, float]:
    """Smallest and largest quadrature variance of ``rho`` and the angle of the smallest."""
    vxx = fock.quadrature_variance(rho, 0.0)
    vpp = fock.quadrature_variance(rho, np.pi / 2)
    vdiag = fock.quadrature_variance(rho, np.pi / 4)
    # Var(x cos + p sin) = vxx cos^2 + vpp sin^2 + 2 cxp sin cos
    cxp = vdiag - 0.5 * (vxx + vpp)
    vals, vecs = np.linalg.eigh(np.array([[vxx, cxp], [cxp, vpp]]))
    theta = float(np.arctan2(vecs[1, 0], vecs[0, 0]) % np.pi)
    return float(vals[0]), float(vals[1]), theta


def predicted_quadrature_pdf(rho: np.ndarray, theta: float, x_grid: np.ndarray) -> np.ndarray:
    """Homodyne marginal ``p(x|theta) = <x_theta|rho|x_theta>`` on ``x_grid``."""
    x_grid = np.asarray(x_grid, dtype=float)
    dim = rho.shape[0]
    amp = fock.hermite_functions(x_grid, dim) * np.exp(1j * theta * np.arange(dim))[:, None]
    pdf = np.einsum("mx,mn,nx->x", amp.conj(), rho, amp).real
    if pdf.min(initial=0.0) < -1e-9:
        raise fock.StateError("negative quadrature density; input is not a valid state")
    return np.clip(pdf, 0.0, None)


def _harmonics(rho: np.ndarray, x_grid: np.ndarray) -> np.ndarray:
    # p(x|theta) = Re sum_d w_d C_d(x) e^{i d theta}, C_d = sum_m rho[m, m+d] psi_m psi_{m+d}
    dim = rho.shape[0]
    psi = fock.hermite_functions(x_grid, dim)
    out = np.empty((dim, x_grid.size), dtype=complex)
    for d in range(dim):
        coeffs = np.diagonal(rho, offset=d)
        out[d] = np.einsum("m,mx,mx->x", coeffs, psi[: dim - d], psi[d:])
    out[1:] *= 2.0
    return out


def quadrature_inverse_cdf(
    rho: np.ndarray,
    thetas: np.ndarray,
    u: np.ndarray,
    n_grid: int = 4001,
    chunk: int = 2048,
) -> np.ndarray:
    """Map uniforms ``u`` to quadrature samples of ``rho`` at phases ``thetas``.

    The density is tabulated on a grid wide enough for every Fock level in the
    cutoff and inverted with a piecewise-linear CDF.
    """
    thetas = np.asarray(thetas, dtype=float)
    u = np.asarray(u, dtype=float)
    dim = rho.shape[0]
    half_width = np.sqrt(2.0 * dim + 1.0) + 5.0
    x_grid = np.linspace(-half_width, half_width, n_grid)
    harmonics = _harmonics(rho, x_grid)
    d = np.arange(dim)
    # one CDF per distinct phase
    unique, inverse = np.unique(thetas, return_inverse=True)
    out = np.empty(thetas.size)
    order = np.argsort(inverse, kind="stable")
    bounds = np.searchsorted(inverse[order], np.arange(unique.size + 1))
    for start in range(0, unique.size, chunk):
        th = unique[start : start + chunk]
        pdf = np.clip((np.exp(1j * np.outer(th, d)) @ harmonics).real, 0.0, None)
        cdf = np.concatenate(
            [np.zeros((th.size, 1)), np.cumsum(0.5 * (pdf[:, 1:] + pdf[:, :-1]), axis=1)], axis=1
        )
        cdf /= cdf[:, -1:]
        for i in range(th.size):
            idx = order[bounds[start + i] : bounds[start + i + 1]]
            out[idx] = np.interp(u[idx], cdf[i], x_grid)
    return out


def sample_quadratures(
    rho: np.ndarray,
    n: int,
    rng: np.random.Generator,
    thetas: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``n`` homodyne outcomes; phases are uniform on [0, pi) unless given."""
    if thetas is None:
        thetas = rng.uniform(0.0, np.pi, n)
    x = quadrature_inverse_cdf(rho, thetas, rng.random(n))
    return x, np.asarray(thetas, dtype=float)


def loss_corrected_variance_db(measured_db: float, eta: float) -> float:
    """Undo a pure loss ``eta`` on a variance given in dB relative to vacuum."""
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must be in (0, 1]")
    measured = fock.db_to_variance(measured_db)
    floor = (1.0 - eta) * VACUUM_VARIANCE
    if measured <= floor:
        raise ValueError(
            f"measured variance {measured:.4g} is below the loss floor {floor:.4g}; "
            "not reachable through a loss of this size"
        )
    return fock.variance_to_db((measured - floor) / eta)


def snr_db(herald_rate_hz: float, dark_rate_hz: float) -> float:
    """Heralding signal-to-noise ratio, true heralds over dark counts."""
    if dark_rate_hz <= 0:
        raise ValueError("dark rate must be positive")
    if herald_rate_hz <= dark_rate_hz:
        raise ValueError("herald rate must exceed the dark rate")
    return 10.0 * np.log10((herald_rate_hz - dark_rate_hz) / dark_rate_hz)


def false_herald_fraction(herald_rate_hz: float, dark_rate_hz: float) -> float:
    if herald_rate_hz <= 0:
        raise ValueError("herald rate must be positive")
    return dark_rate_hz / herald_rate_hz
