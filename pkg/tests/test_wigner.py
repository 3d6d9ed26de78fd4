from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import eval_hermite

from heraldsim import fock, model, wigner

from conftest import random_state

AXIS = wigner.default_axis(6.0, 241)


def _psi(n: int, x: np.ndarray) -> np.ndarray:
    return eval_hermite(n, x) * np.exp(-x * x / 2) / math.sqrt(2.0**n * math.factorial(n) * math.sqrt(math.pi))


def _brute_wigner(rho: np.ndarray, x: float, p: float) -> float:
    """``(1/pi) int <x+y|rho|x-y> exp(-2ipy) dy`` by direct quadrature."""
    y = np.linspace(-12, 12, 24001)
    dim = rho.shape[0]
    plus = np.array([_psi(n, x + y) for n in range(dim)])
    minus = np.array([_psi(n, x - y) for n in range(dim)])
    kernel = np.einsum("my,mn,ny->y", plus, rho, minus)
    return float(np.real(np.trapezoid(kernel * np.exp(-2j * p * y), y)) / np.pi)


def _point(rho, x, p):
    return wigner.wigner_grid(rho, [x], [p]).w[0, 0]


def _moments(grid):
    w = grid.w
    px = np.trapezoid(w, grid.p_values, axis=0)
    pp = np.trapezoid(w, grid.x_values, axis=1)
    vx = np.trapezoid(grid.x_values**2 * px, grid.x_values)
    vp = np.trapezoid(grid.p_values**2 * pp, grid.p_values)
    return vx, vp


def test_vacuum():
    grid = wigner.wigner_grid(fock.vacuum(10), AXIS, AXIS)
    assert grid.value_near(0, 0) == pytest.approx(1 / np.pi, abs=1e-12)
    vx, vp = _moments(grid)
    assert vx == pytest.approx(0.5, abs=1e-6)
    assert vp == pytest.approx(0.5, abs=1e-6)


def test_single_photon_closed_form():
    grid = wigner.wigner_grid(fock.fock_state(1, 10), AXIS, AXIS)
    xx, pp = np.meshgrid(AXIS, AXIS)
    r2 = xx**2 + pp**2
    np.testing.assert_allclose(grid.w, (2 * r2 - 1) * np.exp(-r2) / np.pi, atol=1e-12)
    assert wigner.wigner_origin(fock.fock_state(1, 10)) == pytest.approx(-1 / np.pi)


def test_squeezed_variance_ratio():
    grid = wigner.wigner_grid(fock.squeezed_vacuum(-3.0, 40), AXIS, AXIS)
    vx, vp = _moments(grid)
    assert vx / vp == pytest.approx(10**-0.6, rel=1e-4)
    assert vx == pytest.approx(0.5 * 10**-0.3, rel=1e-4)


@pytest.mark.parametrize("seed", [0, 1])
def test_matches_brute_force_transform(seed):
    rho = random_state(np.random.default_rng(seed), 6)
    for x, p in [(0.0, 0.0), (0.7, -0.3), (-1.2, 1.5), (2.0, 0.4)]:
        assert _point(rho, x, p) == pytest.approx(_brute_wigner(rho, x, p), abs=1e-9)


def test_marginals_are_homodyne_densities(default_params):
    rho = model.heralded_state(default_params)
    axis = wigner.default_axis(7.0, 401)
    grid = wigner.wigner_grid(rho, axis, axis)
    x_marg = np.trapezoid(grid.w, axis, axis=0)
    p_marg = np.trapezoid(grid.w, axis, axis=1)
    np.testing.assert_allclose(x_marg, model.predicted_quadrature_pdf(rho, 0.0, axis), atol=1e-3)
    np.testing.assert_allclose(p_marg, model.predicted_quadrature_pdf(rho, np.pi / 2, axis), atol=1e-3)


def test_quarter_turn_rotates_phase_space():
    rng = np.random.default_rng(5)
    rho = random_state(rng, 5, rank=2)
    turned = fock.rotate(rho, np.pi / 2)
    # Var(rotate(rho, phi), theta) = Var(rho, theta + phi), so W'(x, p) = W(-p, x)
    for x, p in rng.uniform(-2, 2, (6, 2)):
        assert _point(turned, x, p) == pytest.approx(_point(rho, -p, x), abs=1e-12)
    # on a square symmetric grid the same map is an exact index permutation
    grid = wigner.wigner_grid(rho, AXIS, AXIS).w
    np.testing.assert_allclose(wigner.wigner_grid(turned, AXIS, AXIS).w, grid.T[::-1], atol=1e-12)


@given(st.integers(0, 2**32 - 1), st.integers(2, 12))
def test_parity_matches_grid_origin(seed, dim):
    rho = random_state(np.random.default_rng(seed), dim)
    assert _point(rho, 0.0, 0.0) == pytest.approx(wigner.wigner_origin(rho), abs=1e-9)


def test_heralded_grid_integrates_to_one(default_params):
    grid = wigner.wigner_grid(model.heralded_state(default_params), wigner.default_axis(), wigner.default_axis())
    assert grid.integral() == pytest.approx(1.0, abs=1e-3)
    assert grid.value_near(0, 0) == pytest.approx(0.013881066096577, abs=1e-12)


def test_narrow_grid_warns():
    axis = np.linspace(-1, 1, 21)
    with pytest.warns(RuntimeWarning):
        wigner.wigner_grid(fock.vacuum(5), axis, axis)
