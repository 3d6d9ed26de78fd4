"""Maximum-likelihood (R rho R) homodyne tomography with optional loss compensation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import fock
from .fock import VACUUM_VARIANCE
from .traces import QuadratureRecords

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-300


@dataclass
class QuadraturePOVM:
    """Binned quadrature projectors at one phase, optionally smeared by a loss ``efficiency``."""

    theta: float
    x_bin_centers: np.ndarray
    bin_width: float
    efficiency: float
    operators: np.ndarray  # (n_bins, dim, dim)

    def probabilities(self, rho: np.ndarray) -> np.ndarray:
        return np.einsum("jmn,nm->j", self.operators, rho).real

    def completeness_error(self, skip_top: int = 2) -> float:
        total = self.operators.sum(axis=0)
        keep = total.shape[0] - skip_top
        return float(np.max(np.abs(total[:keep, :keep] - np.eye(keep))))


def _amplitudes(theta: float, x: np.ndarray, dim: int) -> np.ndarray:
    # rows are <n|x_theta> = e^{i n theta} psi_n(x), shape (n_x, dim)
    return (fock.hermite_functions(x, dim) * np.exp(1j * theta * np.arange(dim))[:, None]).T


def build_povm(
    theta: float,
    x_grid: np.ndarray,
    eta: float = 1.0,
    dim: int = fock.DEFAULT_DIM,
    check_completeness: bool = True,
    bin_width: float | None = None,
) -> QuadraturePOVM:
    """Midpoint-rule bin projectors ``|x_theta><x_theta| dx`` at bin centres ``x_grid``.

    ``bin_width`` defaults to the spacing of ``x_grid``. For ``eta < 1`` each
    projector is pulled back through the loss channel,
    ``Pi_eta = sum_k A_k^dag Pi A_k``, so ``Tr[rho Pi_eta] = Tr[loss(rho) Pi]``.

    Raises:
        ValueError: for ``eta`` outside (0, 1] or a grid too narrow to resolve
            the identity on all but the top two Fock levels.
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must be in (0, 1]")
    x_grid = np.asarray(x_grid, dtype=float)
    if bin_width is None:
        if x_grid.size < 2:
            raise ValueError("bin_width is required for a single-point grid")
        bin_width = float(x_grid[1] - x_grid[0])
    width = float(bin_width)
    amp = _amplitudes(theta, x_grid, dim) * np.sqrt(width)
    if eta < 1.0:
        kraus = fock.loss_kraus(float(eta), dim)
        # A_k^dag |x_theta>: (k, n_x, dim)
        pulled = np.einsum("kmn,jm->kjn", kraus, amp)
        ops = np.einsum("kjm,kjn->jmn", pulled, pulled.conj())
    else:
        ops = np.einsum("jm,jn->jmn", amp, amp.conj())
    povm = QuadraturePOVM(float(theta), x_grid, width, float(eta), ops)
    if check_completeness:
        err = povm.completeness_error()
        if err > 1e-6:
            raise ValueError(f"quadrature grid too narrow for cutoff {dim} (completeness error {err:.2e})")
    return povm


def default_half_width(dim: int, sigma_span: float = 6.0) -> float:
    """Half-width covering ``sigma_span`` vacuum deviations and every Fock level below ``dim``."""
    return max(sigma_span * np.sqrt(VACUUM_VARIANCE), np.sqrt(2.0 * dim + 1.0) + 4.5)


@dataclass
class BinnedRecords:
    thetas: np.ndarray  # phase-bin centres
    x_centers: np.ndarray
    bin_width: float
    counts: np.ndarray  # (n_phase, n_x)


def bin_records(
    records: QuadratureRecords,
    dim: int = fock.DEFAULT_DIM,
    bin_width: float | None = None,
    n_phase_bins: int = 64,
) -> BinnedRecords:
    """Histogram records in phase and quadrature.

    Default quadrature bins are 0.1 vacuum standard deviations wide; the range
    extends past the default width when records fall outside it.
    """
    if bin_width is None:
        bin_width = 0.1 * np.sqrt(VACUUM_VARIANCE)
    half = max(default_half_width(dim), float(np.max(np.abs(records.x))) + bin_width)
    n_half = int(np.ceil(half / bin_width))
    edges = (np.arange(-n_half, n_half + 1)) * bin_width
    centers = 0.5 * (edges[1:] + edges[:-1])
    xb = np.clip(np.floor(records.x / bin_width).astype(int) + n_half, 0, centers.size - 1)
    tb = np.minimum((records.theta / np.pi * n_phase_bins).astype(int), n_phase_bins - 1)
    counts = np.zeros((n_phase_bins, centers.size))
    np.add.at(counts, (tb, xb), 1.0)
    thetas = (np.arange(n_phase_bins) + 0.5) * np.pi / n_phase_bins
    return BinnedRecords(thetas, centers, bin_width, counts)


@dataclass
class TomographyResult:
    rho: np.ndarray
    loglik_history: np.ndarray
    iterations: int
    povm_efficiency: float
    floored_bins: int = 0
    diluted_steps: int = 0
    info: dict = field(default_factory=dict)


def measurement_stack(
    binned: BinnedRecords, eta: float = 1.0, dim: int = fock.DEFAULT_DIM
) -> tuple[np.ndarray, np.ndarray]:
    """Operators and relative frequencies for the occupied (phase, x) bins only."""
    ops_list, freq_list = [], []
    for i, theta in enumerate(binned.thetas):
        occupied = binned.counts[i] > 0
        if not occupied.any():
            continue
        povm = build_povm(
            theta, binned.x_centers[occupied], eta, dim, check_completeness=False, bin_width=binned.bin_width
        )
        ops_list.append(povm.operators)
        freq_list.append(binned.counts[i, occupied])
    if not ops_list:
        raise ValueError("no records to reconstruct from")
    freqs = np.concatenate(freq_list)
    return np.concatenate(ops_list), freqs / freqs.sum()


def bin_probabilities(ops: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return np.einsum("jmn,nm->j", ops, rho).real


def likelihood_operator(ops: np.ndarray, freqs: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``R(rho) = sum_j (f_j / p_j) Pi_j``, with probabilities floored at ``PROB_FLOOR``."""
    p = np.maximum(bin_probabilities(ops, rho), PROB_FLOOR)
    return np.einsum("j,jmn->mn", freqs / p, ops)


def _loglik(ops: np.ndarray, freqs: np.ndarray, rho: np.ndarray) -> tuple[float, int]:
    p = bin_probabilities(ops, rho)
    low = p < PROB_FLOOR
    return float(freqs @ np.log(np.where(low, PROB_FLOOR, p))), int(low.sum())


def maxlik_from_stack(
    ops: np.ndarray,
    freqs: np.ndarray,
    iterations: int = 200,
    tol: float = 1e-10,
    rho0: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray, int, int, int]:
    """RrhoR iteration on a prepared operator stack.

    Returns ``(rho, loglik_history, iterations_done, floored_bins, diluted_steps)``.
    """
    dim = ops.shape[1]
    rho = np.eye(dim, dtype=complex) / dim if rho0 is None else rho0.astype(complex)
    ll, floored = _loglik(ops, freqs, rho)
    history = [ll]
    diluted = 0
    done = 0
    for done in range(1, iterations + 1):
        r_op = likelihood_operator(ops, freqs, rho)
        candidate = fock.normalize(r_op @ rho @ r_op)
        new_ll, new_floored = _loglik(ops, freqs, candidate)
        eps = 1.0
        while new_ll < ll and eps > 1e-8:
            diluted += 1
            r_eps = (np.eye(dim) + eps * r_op) / (1.0 + eps)
            candidate = fock.normalize(r_eps @ rho @ r_eps)
            new_ll, new_floored = _loglik(ops, freqs, candidate)
            eps *= 0.5
        if new_ll < ll:
            break
        gain = new_ll - ll
        rho, ll, floored = candidate, new_ll, new_floored
        history.append(ll)
        if gain < tol:
            break
    return rho, np.array(history), done, floored, diluted


def maxlik_reconstruct(
    records: QuadratureRecords,
    dim: int = fock.DEFAULT_DIM,
    iterations: int = 200,
    eta: float = 1.0,
    n_phase_bins: int = 64,
    bin_width: float | None = None,
    tol: float = 1e-10,
) -> TomographyResult:
    """Iterate ``rho <- N[R rho R]``, ``R = sum_j (f_j / p_j) Pi_j``, from the maximally mixed state.

    ``f_j`` are observed bin frequencies over occupied (phase, x) bins. If a full
    step would lower the log-likelihood, the step is diluted,
    ``R -> (1 + eps R) / (1 + eps)`` with ``eps`` halved until it does not, which
    keeps the likelihood history monotone. Stops after ``iterations`` steps or
    when the gain drops below ``tol``.

    Args:
        records: Homodyne outcomes; phases should span [0, pi).
        dim: Fock cutoff of the reconstruction.
        iterations: Maximum number of RrhoR steps.
        eta: Detection efficiency built into the measurement operators; with
            ``eta < 1`` the estimate is the state before that loss.
        n_phase_bins: Phase bins over [0, pi).
        bin_width: Quadrature bin width, default 0.1 vacuum standard deviations.
        tol: Early-exit threshold on the per-step log-likelihood gain.

    Returns:
        TomographyResult with the estimate and its log-likelihood history.
    """
    if len(records) == 0:
        raise ValueError("no records to reconstruct from")
    if len(records) < dim * dim:
        log.warning("only %d records for a %d-level reconstruction", len(records), dim)
    binned = bin_records(records, dim, bin_width, n_phase_bins)
    ops, freqs = measurement_stack(binned, eta, dim)
    rho, history, done, floored, diluted = maxlik_from_stack(ops, freqs, iterations, tol)
    if floored:
        log.warning("%d occupied bins had probability below %.0e and were floored", floored, PROB_FLOOR)
    return TomographyResult(
        rho=rho,
        loglik_history=history,
        iterations=done,
        povm_efficiency=eta,
        floored_bins=floored,
        diluted_steps=diluted,
        info={"n_records": len(records), "n_bins": int(freqs.size), "dim": dim, "n_phase_bins": n_phase_bins},
    )


def bootstrap(
    records: QuadratureRecords,
    statistic: Callable[[np.ndarray], float],
    n_resamples: int,
    seed: int = 0,
    **kwargs,
) -> np.ndarray:
    """Reconstruct from ``n_resamples`` with-replacement resamples and evaluate ``statistic(rho)`` on each.

    Keyword arguments go to :func:`maxlik_reconstruct`.
    """
    rng = np.random.default_rng(seed)
    n = len(records)
    out = np.empty(n_resamples)
    for i in range(n_resamples):
        pick = rng.integers(0, n, n)
        out[i] = statistic(maxlik_reconstruct(records.select(pick), **kwargs).rho)
    return out
