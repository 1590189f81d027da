"""Canonical hermitian connection, hermitian Ricci form and scalar curvature.

Connection matrices are stored per coordinate direction: ``Theta[a, c, b]``
is the ``(c, b)`` entry of the endomorphism ``Theta_a`` with
``nabla_a Y = d_a Y + Theta_a Y``.
"""
from dataclasses import dataclass

import numpy as np

from . import grid as _grid
from .errors import SymplecticError
from .forms import (BASIS, Form, exterior_derivative, j_act_one_form, scalar, wedge)
from .structures import is_constant

PAIRS = BASIS[2]


def _grad(arr):
    if is_constant(arr):
        return np.zeros((4,) + arr.shape)
    return _grid.gradient(arr)


def christoffels(g):
    """``Gamma[c, a, b] = 1/2 g^{cd} (d_a g_bd + d_b g_ad - d_d g_ab)``."""
    dg = _grad(g.g)  # dg[e, a, b] = d_e g_ab
    T = np.einsum("abd...->dab...", dg) + np.einsum("bad...->dab...", dg) - dg
    return 0.5 * np.einsum("cd...,dab...->cab...", g.inverse, T)


def connection_matrices(gamma):
    """``(Gamma_a)^c_b = Gamma^c_{ab}`` rearranged as ``[a, c, b]``."""
    return np.einsum("cab...->acb...", gamma)


def _mm(A, B):
    return np.einsum("ij...,jk...->ik...", A, B)


@dataclass
class ConnectionField:
    gamma: np.ndarray
    theta: np.ndarray

    def covariant_J(self, J):
        """``(nabla_a J)`` for each direction ``a``."""
        dJ = _grad(J)
        return np.stack([dJ[a] + _mm(self.theta[a], J) - _mm(J, self.theta[a]) for a in range(4)])

    def covariant_metric(self, g):
        """``(nabla_a g)_{bc}``."""
        dg = _grad(g)
        corr = np.einsum("adb...,dc...->abc...", self.theta, g)
        return dg - corr - np.swapaxes(corr, 1, 2)


def levi_civita_J(Jc, gamma=None):
    """``D_a J = d_a J + [Gamma_a, J]``."""
    if gamma is None:
        gamma = christoffels(Jc.metric)
    G = connection_matrices(gamma)
    dJ = _grad(Jc.J)
    return np.stack([dJ[a] + _mm(G[a], Jc.J) - _mm(Jc.J, G[a]) for a in range(4)])


def hermitian_connection(Jc):
    """``nabla = D - 1/2 J (D J)``."""
    gamma = christoffels(Jc.metric)
    G = connection_matrices(gamma)
    DJ = levi_civita_J(Jc, gamma)
    theta = np.stack([G[a] - 0.5 * _mm(Jc.J, DJ[a]) for a in range(4)])
    return ConnectionField(gamma=gamma, theta=theta)


def curvature_pairs(theta):
    """``R_ab = d_a Theta_b - d_b Theta_a + [Theta_a, Theta_b]`` for ``a < b``."""
    dtheta = _grad(theta)  # dtheta[e, a] = d_e Theta_a
    out = []
    for a, b in PAIRS:
        comm = _mm(theta[a], theta[b]) - _mm(theta[b], theta[a])
        out.append(dtheta[a, b] - dtheta[b, a] + comm)
    return np.stack(out)


@dataclass
class CurvatureData:
    R: np.ndarray
    rho: Form
    s: np.ndarray


def _ricci_from(R, J, grid):
    # R here is [nabla_a, nabla_b]; with the opposite-sign convention
    # R_{X,Y} = nabla_[X,Y] - [nabla_X, nabla_Y] this is -tr_C(J o R_{X,Y}),
    # the complex trace being half the real one
    rho = 0.5 * np.einsum("ij...,pji...->p...", J, R)
    return Form(2, np.broadcast_to(rho, (6,) + grid.shape).copy())


def hermitian_ricci(Jc):
    """Hermitian Ricci form of ``(J, g)``, a representative of ``2 pi c_1``."""
    if Jc.constant:
        return Form(2, Jc.grid.zeros(6))
    conn = hermitian_connection(Jc)
    return _ricci_from(curvature_pairs(conn.theta), Jc.J, Jc.grid)


def top_coefficient(form4):
    return form4.comps[0]


def hermitian_scalar_from_rho(rho, symplectic):
    """``s`` with ``s * sigma^2 = 4 rho ^ sigma``."""
    top = top_coefficient(wedge(symplectic, symplectic))
    if np.min(np.abs(top)) <= 1e-12:
        raise SymplecticError("symplectic form is degenerate")
    return 4.0 * top_coefficient(wedge(rho, symplectic)) / top


def hermitian_scalar(Jc, symplectic=None):
    if symplectic is None:
        symplectic = Jc.omega
    return hermitian_scalar_from_rho(hermitian_ricci(Jc), symplectic)


def curvature_data(Jc):
    if Jc.constant:
        zero = Form(2, Jc.grid.zeros(6))
        return CurvatureData(R=np.zeros((6, 4, 4) + Jc.grid.shape), rho=zero, s=Jc.grid.zeros())
    conn = hermitian_connection(Jc)
    R = curvature_pairs(conn.theta)
    rho = _ricci_from(R, Jc.J, Jc.grid)
    return CurvatureData(R=R, rho=rho, s=hermitian_scalar_from_rho(rho, Jc.omega))


def dJd(F, J):
    """``d J dF`` for a function ``F``."""
    return exterior_derivative(j_act_one_form(exterior_derivative(scalar(F)), J))


def conformal_ricci_check(Jc, F, rho_base):
    """``-1/2 d J dF + rho_base``: the Ricci form after ``omega^2 -> e^F omega^2``."""
    return rho_base - dJd(F, Jc.J) * 0.5


def chern_pairing(rho, omega):
    """``int rho ^ omega``."""
    return _grid.integrate(top_coefficient(wedge(rho, omega)))


def curvature_report(Jc, rho=None, s=None):
    if rho is None:
        rho = hermitian_ricci(Jc)
    if s is None:
        s = hermitian_scalar_from_rho(rho, Jc.omega)
    vol = 0.5 * top_coefficient(wedge(Jc.omega, Jc.omega))
    return {
        "chern_pairing": chern_pairing(rho, Jc.omega),
        "s_integral": _grid.integrate(s * vol),
        "d_rho_norm": exterior_derivative(rho).sup_norm(),
    }


def riemannian_scalar(g):
    """Riemannian scalar curvature from the coordinate Christoffel symbols.

    Index form ``R^r_{s m v} = d_m Gamma^r_{vs} - d_v Gamma^r_{ms}
    + Gamma^r_{ml} Gamma^l_{vs} - Gamma^r_{vl} Gamma^l_{ms}``.
    """
    gamma = christoffels(g)
    dgam = _grad(gamma)  # dgam[m, r, v, s] = d_m Gamma^r_{vs}
    ric = (
        np.einsum("rrvs...->sv...", dgam)
        - np.einsum("vrrs...->sv...", dgam)
        + np.einsum("rrl...,lvs...->sv...", gamma, gamma)
        - np.einsum("rvl...,lrs...->sv...", gamma, gamma)
    )
    return np.einsum("sv...,sv...->...", g.inverse, ric)
