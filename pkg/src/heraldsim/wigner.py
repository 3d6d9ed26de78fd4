"""Wigner function of Fock-basis states, normalized to integrate to 1 over (x, p)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import eval_genlaguerre, gammaln


@dataclass
class WignerGrid:
    x_values: np.ndarray
    p_values: np.ndarray
    w: np.ndarray  # indexed [p, x]

    def integral(self) -> float:
        return float(np.trapezoid(np.trapezoid(self.w, self.x_values, axis=1), self.p_values))

    def value_near(self, x: float, p: float) -> float:
        i = int(np.argmin(np.abs(self.p_values - p)))
        j = int(np.argmin(np.abs(self.x_values - x)))
        return float(self.w[i, j])


def wigner_origin(rho: np.ndarray) -> float:
    """``W(0, 0) = (1/pi) * sum_n (-1)^n rho_nn``, the scaled photon-number parity."""
    diag = np.real(np.diag(rho))
    return float(np.sum(diag * (-1.0) ** np.arange(diag.size)) / np.pi)


def wigner_grid(rho: np.ndarray, x_values, p_values) -> WignerGrid:
    """Evaluate ``W(x, p) = sum_mn rho_mn W_mn(x, p)`` on a rectangular grid.

    For ``m >= n`` the kernel of ``|m><n|`` is
    ``(-1)^n / pi * sqrt(n!/m!) * (sqrt(2) conj(alpha))^(m-n) * L_n^(m-n)(2|alpha|^2) * exp(-|alpha|^2)``
    with ``alpha = x + i p`` here; ``W_nm`` is its complex conjugate.
    """
    x_values = np.asarray(x_values, dtype=float)
    p_values = np.asarray(p_values, dtype=float)
    xx, pp = np.meshgrid(x_values, p_values)
    alpha = xx + 1j * pp
    r2 = np.abs(alpha) ** 2
    envelope = np.exp(-r2) / np.pi
    dim = rho.shape[0]
    w = np.zeros(alpha.shape)
    for m in range(dim):
        w += np.real(rho[m, m]) * (-1.0) ** m * eval_genlaguerre(m, 0, 2 * r2)
        for n in range(m):
            coeff = rho[n, m]
            if coeff == 0:
                continue
            d = m - n
            pref = (-1.0) ** n * np.exp(0.5 * (gammaln(n + 1) - gammaln(m + 1)))
            kernel = pref * (np.sqrt(2.0) * np.conj(alpha)) ** d * eval_genlaguerre(n, d, 2 * r2)
            # rho_mn W_mn + rho_nm W_nm = 2 Re(rho_nm W_nm), W_nm = conj(kernel of |m><n|)
            w += 2.0 * np.real(coeff * np.conj(kernel))
    w *= envelope
    grid = WignerGrid(x_values, p_values, w)
    if x_values.size > 2 and p_values.size > 2:
        total = grid.integral()
        if abs(total - 1.0) > 1e-3:
            warnings.warn(f"Wigner grid integrates to {total:.4f}; widen or refine it", RuntimeWarning, stacklevel=2)
    return grid


def default_axis(half_width: float = 5.0, n: int = 201) -> np.ndarray:
    return np.linspace(-half_width, half_width, n)
