"""Single-mode Fock-basis states, loss channels and measurements.

States are plain complex ``(N, N)`` numpy arrays holding ``rho[m, n] = <m|rho|n>``
for photon numbers ``0..N-1``. Quadratures follow ``x = (a + a^dag)/sqrt(2)``,
so the vacuum variance is 1/2, and dB figures are ``10*log10(V / 0.5)``.
"""

from __future__ import annotations

import warnings
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

VACUUM_VARIANCE = 0.5
DEFAULT_DIM = 20
LEAKAGE_TOL = 1e-6


class StateError(ValueError):
    """Raised when an array is not a valid density matrix."""


class HeraldError(RuntimeError):
    """Raised when a heralding event has (numerically) zero probability."""


def db_to_variance(db: float) -> float:
    return VACUUM_VARIANCE * 10.0 ** (db / 10.0)


def variance_to_db(variance: float) -> float:
    return 10.0 * np.log10(variance / VACUUM_VARIANCE)


def fock_state(n: int, dim: int = DEFAULT_DIM) -> np.ndarray:
    if not 0 <= n < dim:
        raise ValueError(f"photon number {n} outside cutoff {dim}")
    rho = np.zeros((dim, dim), dtype=complex)
    rho[n, n] = 1.0
    return rho


def vacuum(dim: int = DEFAULT_DIM) -> np.ndarray:
    return fock_state(0, dim)


def annihilation(dim: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def quadrature_operator(theta: float, dim: int) -> np.ndarray:
    """Matrix of ``x_theta = x cos(theta) + p sin(theta)`` on the truncated space."""
    a = annihilation(dim)
    op = (a * np.exp(-1j * theta) + a.conj().T * np.exp(1j * theta)) / np.sqrt(2.0)
    return op


def rotate(rho: np.ndarray, phi: float) -> np.ndarray:
    """Apply the phase rotation ``exp(-i phi n) rho exp(i phi n)``."""
    n = np.arange(rho.shape[0])
    u = np.exp(-1j * phi * n)
    return u[:, None] * rho * u.conj()[None, :]


def validate_state(rho: np.ndarray, atol: float = 1e-9, herm_tol: float = 1e-12) -> np.ndarray:
    """Check hermiticity, unit trace and positivity; return ``rho`` as complex array."""
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise StateError(f"density matrix must be square, got shape {rho.shape}")
    if np.max(np.abs(rho - rho.conj().T)) > herm_tol:
        raise StateError("density matrix is not Hermitian")
    if abs(np.trace(rho).real - 1.0) > atol:
        raise StateError(f"trace {np.trace(rho).real!r} differs from 1")
    if np.linalg.eigvalsh(rho)[0] < -atol:
        raise StateError("density matrix has negative eigenvalues")
    return rho


def truncation_leakage(rho: np.ndarray, levels: int = 2) -> float:
    """Population in the top ``levels`` Fock levels, a proxy for cutoff error."""
    return float(np.real(np.trace(rho[-levels:, -levels:])))


def _hermitize(rho: np.ndarray) -> np.ndarray:
    return 0.5 * (rho + rho.conj().T)


def normalize(rho: np.ndarray) -> np.ndarray:
    rho = _hermitize(rho)
    return rho / np.trace(rho).real


def squeezed_vacuum(squeezing_db: float, dim: int = DEFAULT_DIM) -> np.ndarray:
    """Pure squeezed vacuum, squeezed along ``x`` (theta = 0).

    Args:
        squeezing_db: Variance of the squeezed quadrature relative to vacuum, in dB.
            Must be <= 0.
        dim: Fock cutoff.

    Returns:
        The density matrix, renormalized after truncation. A ``RuntimeWarning`` is
        emitted if the discarded population exceeds 1e-6.
    """
    if squeezing_db > 0:
        raise ValueError("squeezing_db must be <= 0 (negative means squeezed)")
    if dim < 4:
        raise ValueError("dim must be at least 4")
    r = -squeezing_db * np.log(10.0) / 20.0
    m = np.arange((dim + 1) // 2)
    n = 2 * m
    # <2m|S(r)|0> = (-tanh r)^m sqrt((2m)!) / (2^m m! sqrt(cosh r))
    log_mag = 0.5 * gammaln(n + 1) - gammaln(m + 1) - m * np.log(2.0) - 0.5 * np.log(np.cosh(r))
    if r > 0:
        mags = np.exp(log_mag + m * np.log(np.tanh(r)))
    else:
        mags = (m == 0).astype(float)
    psi = np.zeros(dim)
    psi[n] = mags * (-1.0) ** m
    kept = float(psi @ psi)
    if 1.0 - kept > LEAKAGE_TOL:
        warnings.warn(
            f"cutoff {dim} discards population {1.0 - kept:.2e} of a {squeezing_db} dB state",
            RuntimeWarning,
            stacklevel=2,
        )
    psi /= np.sqrt(kept)
    return np.outer(psi, psi).astype(complex)


@lru_cache(maxsize=64)
def loss_kraus(eta: float, dim: int) -> np.ndarray:
    """Kraus operators ``A_k`` (stacked, shape ``(dim, dim, dim)``) of the pure-loss channel.

    ``A_k = sum_n sqrt(C(n,k) eta^(n-k) (1-eta)^k) |n-k><n|``; the set is exactly
    trace preserving on the truncated space since loss never raises photon number.
    """
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"efficiency {eta} outside [0, 1]")
    ops = np.zeros((dim, dim, dim))
    for k in range(dim):
        n = np.arange(k, dim)
        with np.errstate(divide="ignore", invalid="ignore"):
            log_c = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)
            log_amp = 0.5 * (log_c + _xlogy(n - k, eta) + _xlogy(k, 1.0 - eta))
        ops[k, n - k, n] = np.exp(log_amp)
    ops.setflags(write=False)
    return ops


def _xlogy(x, y):
    x = np.asarray(x, dtype=float)
    if y == 0.0:
        return np.where(x == 0, 0.0, -np.inf)
    return x * np.log(y)


def apply_loss(rho: np.ndarray, eta: float) -> np.ndarray:
    """Send ``rho`` through a pure-loss channel of transmission ``eta``."""
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"efficiency {eta} outside [0, 1]")
    rho = np.asarray(rho, dtype=complex)
    if eta == 1.0:
        return rho.copy()
    kraus = loss_kraus(float(eta), rho.shape[0])
    out = np.einsum("kab,bc,kdc->ad", kraus, rho, kraus, optimize=True)
    return _hermitize(out)


def photon_subtract(rho: np.ndarray, reflectivity: float) -> tuple[np.ndarray, float]:
    """Herald a click on the reflected port of a beam splitter.

    The herald is a threshold detector (POVM ``1 - |0><0|``) on the tapped mode.
    Reflecting ``k`` photons leaves the transmitted mode acted on by the loss
    Kraus operator ``A_k`` with transmission ``1 - reflectivity``, so the click
    branch is everything except ``k = 0``.

    Returns:
        ``(conditional_state, click_probability)``.

    Raises:
        HeraldError: if the click probability is below 1e-15.
    """
    if not 0.0 < reflectivity < 1.0:
        raise ValueError("reflectivity must be in (0, 1)")
    rho = np.asarray(rho, dtype=complex)
    kraus = loss_kraus(float(1.0 - reflectivity), rho.shape[0])
    no_click = kraus[0] @ rho @ kraus[0].T
    total = apply_loss(rho, 1.0 - reflectivity)
    clicked = total - no_click
    p_click = float(np.trace(clicked).real)
    if p_click < 1e-15:
        raise HeraldError(f"click probability {p_click:.3g} is too small to herald")
    return normalize(clicked), p_click


def mix(rho_a: np.ndarray, rho_b: np.ndarray, weight_b: float) -> np.ndarray:
    if rho_a.shape != rho_b.shape:
        raise ValueError(f"dimension mismatch: {rho_a.shape} vs {rho_b.shape}")
    if not 0.0 <= weight_b <= 1.0:
        raise ValueError("weight_b must be in [0, 1]")
    return (1.0 - weight_b) * np.asarray(rho_a, dtype=complex) + weight_b * np.asarray(rho_b, dtype=complex)


def mean_photon_number(rho: np.ndarray) -> float:
    return float(np.real(np.diag(rho)) @ np.arange(rho.shape[0]))


def quadrature_variance(rho: np.ndarray, theta: float) -> float:
    """Variance of ``x_theta``, computed with a one-level padded cutoff.

    The truncated ``a`` misses the ``|N-1> -> |N>`` matrix element of ``a^dag a``;
    padding the state by a zero row/column makes the second moment exact.
    """
    dim = rho.shape[0]
    padded = np.zeros((dim + 1, dim + 1), dtype=complex)
    padded[:dim, :dim] = rho
    xop = quadrature_operator(theta, dim + 1)
    mean = np.trace(padded @ xop).real
    second = np.trace(padded @ xop @ xop).real
    return float(second - mean**2)


def fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    sq = _psd_sqrt(rho)
    inner = _psd_sqrt(sq @ sigma @ sq)
    return float(min(1.0, max(0.0, np.trace(inner).real ** 2)))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(_hermitize(m))
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.conj().T


def hermite_functions(x: np.ndarray, dim: int) -> np.ndarray:
    """Harmonic-oscillator eigenfunctions ``psi_n(x)`` for ``n < dim``, shape ``(dim, *x.shape)``.

    Normalized upward recurrence; the Gaussian envelope is carried in the seed so
    nothing overflows at large ``n``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((dim,) + x.shape)
    out[0] = np.pi**-0.25 * np.exp(-0.5 * x * x)
    if dim > 1:
        out[1] = np.sqrt(2.0) * x * out[0]
    for n in range(1, dim - 1):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out
