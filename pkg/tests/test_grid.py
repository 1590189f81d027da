import numpy as np
import pytest
from hypothesis import given, strategies as st

from akstab import grid as G
from akstab.errors import InvalidDensity, InvalidField

seeds = st.integers(0, 2**31 - 1)


def test_grid_validation():
    for bad in (6, 9, 15, 0, 8.0):
        with pytest.raises(ValueError):
            G.GridSpec(bad)
    g = G.GridSpec(8)
    x = g.coords()
    assert x[0][1, 0, 0, 0] == pytest.approx(2 * np.pi / 8)
    assert x[3][0, 0, 0, 5] == pytest.approx(5 * 2 * np.pi / 8)


def test_derivative_examples(grid8):
    x = grid8.coords()
    assert np.max(np.abs(G.spectral_derivative(np.sin(x[0]), 1) - np.cos(x[0]))) <= 1e-12
    assert np.max(np.abs(G.spectral_derivative(np.ones(grid8.shape), 2))) == 0.0
    f = np.sin(2 * x[0]) * np.cos(x[2])
    assert np.max(np.abs(G.spectral_derivative(f, 1) - 2 * np.cos(2 * x[0]) * np.cos(x[2]))) <= 1e-12


def test_derivative_rejects_bad_input(grid8):
    f = np.zeros(grid8.shape)
    f[0, 0, 0, 0] = np.nan
    with pytest.raises(InvalidField):
        G.spectral_derivative(f, 1)
    with pytest.raises(ValueError):
        G.spectral_derivative(np.zeros(grid8.shape), 0)


def test_integrate_examples(grid8):
    x = grid8.coords()
    one = np.ones(grid8.shape)
    assert G.integrate(one, one) == pytest.approx((2 * np.pi) ** 4, rel=1e-14)
    assert G.integrate(one) == pytest.approx(1558.5454565440389)
    assert abs(G.integrate(np.sin(x[0]), one)) <= 1e-12
    assert G.integrate(np.sin(x[0]) ** 2, one) == pytest.approx((2 * np.pi) ** 4 / 2, rel=1e-13)
    with pytest.raises(InvalidDensity):
        G.integrate(one, -one)
    with pytest.raises(InvalidDensity):
        G.integrate(one, 0 * one)


def test_zero_mean_examples(grid8, rng):
    x = grid8.coords()
    dens = np.exp(0.2 * G.random_bandlimited(grid8, rng, kmax=1))
    assert np.max(np.abs(G.zero_mean_project(3.5 * np.ones(grid8.shape), dens))) <= 1e-14
    s = np.sin(x[0])
    assert np.max(np.abs(G.zero_mean_project(s) - s)) <= 1e-15
    assert np.max(np.abs(G.zero_mean_project(1 + s) - s)) <= 1e-14
    assert G.is_zero_mean(s) and not G.is_zero_mean(1 + s)


@given(seeds)
def test_derivative_is_antisymmetric(seed):
    grid = G.GridSpec(8)
    rng = np.random.default_rng(seed)
    f, g = (G.random_bandlimited(grid, rng, kmax=2) for _ in range(2))
    for a in range(1, 5):
        lhs = G.integrate(f * G.spectral_derivative(g, a))
        rhs = -G.integrate(G.spectral_derivative(f, a) * g)
        assert abs(lhs - rhs) <= 1e-10


@given(seeds)
def test_zero_mean_projection_is_idempotent(seed):
    grid = G.GridSpec(8)
    rng = np.random.default_rng(seed)
    f = G.random_bandlimited(grid, rng, kmax=2) + 0.7
    dens = np.exp(0.3 * G.random_bandlimited(grid, rng, kmax=1))
    p = G.zero_mean_project(f, dens)
    assert G.is_zero_mean(p, dens)
    assert np.max(np.abs(G.zero_mean_project(p, dens) - p)) <= 1e-13


@given(seeds)
def test_dealias_removes_only_nyquist(seed):
    grid = G.GridSpec(8)
    rng = np.random.default_rng(seed)
    f = G.random_bandlimited(grid, rng, kmax=3)
    assert np.max(np.abs(G.dealias(f) - f)) <= 1e-13
    x = grid.coords()
    assert np.max(np.abs(G.dealias(np.cos(4 * x[1])))) <= 1e-14
