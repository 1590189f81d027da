import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from akstab import grid as G
from akstab.checks import random_structure
from akstab.curvature import (chern_pairing, christoffels, conformal_ricci_check, curvature_data,
                              hermitian_connection, hermitian_ricci, hermitian_scalar,
                              hermitian_scalar_from_rho, levi_civita_J, riemannian_scalar, top_coefficient)
from akstab.deformation import build_state
from akstab.errors import SymplecticError
from akstab.forms import MetricField, exterior_derivative, wedge

GRID = G.GridSpec(8)
FINE = G.GridSpec(16)
seeds = st.integers(0, 2**31 - 1)


def smooth_structure(seed):
    # differentiated identities are checked at n = 16 on mild structures,
    # where aliasing of the products stays below the tolerances
    return random_structure(FINE, np.random.default_rng(seed), amplitude=0.1)


def test_flat_structure_has_no_curvature(flat8):
    full = type(flat8)(np.broadcast_to(flat8.J, (4, 4) + GRID.shape).copy(), GRID)
    data = curvature_data(full)
    assert data.rho.sup_norm() <= 1e-12 and np.max(np.abs(data.s)) <= 1e-12
    assert np.max(np.abs(christoffels(MetricField.flat(GRID)))) == 0.0
    conn = hermitian_connection(full)
    assert np.max(np.abs(conn.theta)) <= 1e-14


def test_conformal_christoffels(rng):
    u = 0.1 * G.random_bandlimited(FINE, rng, kmax=1)
    du = G.gradient(u)
    gamma = christoffels(MetricField.conformal(u))
    eye = np.eye(4)
    expected = (np.einsum("ca,b...->cab...", eye, du) + np.einsum("cb,a...->cab...", eye, du)
                - np.einsum("ab,c...->cab...", eye, du))
    assert np.max(np.abs(gamma - expected)) <= 1e-10


@settings(max_examples=3)
@given(seeds)
def test_connection_invariants(seed):
    Jc = smooth_structure(seed)
    gamma = christoffels(Jc.metric)
    assert np.max(np.abs(gamma - np.swapaxes(gamma, 1, 2))) <= 1e-14
    conn = hermitian_connection(Jc)
    assert np.max(np.abs(conn.covariant_J(Jc.J))) <= 1e-8
    assert np.max(np.abs(conn.covariant_metric(Jc.metric.g))) <= 1e-8


@settings(max_examples=3)
@given(seeds)
def test_ricci_form_closed_and_chern_pairing_zero(seed):
    Jc = smooth_structure(seed)
    rho = hermitian_ricci(Jc)
    assert exterior_derivative(rho).sup_norm() <= 1e-6
    assert abs(chern_pairing(rho, Jc.omega)) <= 1e-6
    s = hermitian_scalar_from_rho(rho, Jc.omega)
    vol = 0.5 * top_coefficient(wedge(Jc.omega, Jc.omega))
    assert abs(G.integrate(s * vol)) <= 1e-6


def test_kaehler_deformation(flat16, flat_ctx16, rng):
    f = G.zero_mean_project(G.random_bandlimited(FINE, rng, kmax=1, amplitude=0.05))
    st_ = build_state(0.0, f, flat_ctx16)
    Jf = st_.deformed_structure()
    # Kaehler: D J = 0, so the hermitian connection is Levi-Civita
    assert np.max(np.abs(levi_civita_J(Jf))) <= 1e-8
    s = hermitian_scalar(Jf)
    scale = np.max(np.abs(s))
    assert np.max(np.abs(s - riemannian_scalar(st_.g_f))) <= 1e-6 * scale
    rho = conformal_ricci_check(flat16, st_.F, hermitian_ricci(flat16))
    assert (rho - hermitian_ricci(Jf)).sup_norm() <= 1e-6 * max(rho.sup_norm(), 1e-300)


def test_conformal_ricci_trivial_cases(bump8):
    rho = hermitian_ricci(bump8)
    assert (conformal_ricci_check(bump8, GRID.zeros(), rho) - rho).sup_norm() == 0.0
    assert (conformal_ricci_check(bump8, GRID.ones() * 0.7, rho) - rho).sup_norm() <= 1e-14


def test_degenerate_symplectic_form(bump8):
    rho = hermitian_ricci(bump8)
    with pytest.raises(SymplecticError):
        hermitian_scalar_from_rho(rho, bump8.omega * 0.0)
