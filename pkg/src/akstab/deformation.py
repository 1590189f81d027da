"""Almost-Kaehler potentials, the deformed scalar curvature and the residual map.

For a zero-mean function ``f`` on ``(J_t, omega)`` the deformed symplectic
form is ``omega_f = omega + d alpha`` with ``alpha = J df - delta psi_f`` and
``psi_f`` the Green solution of ``P psi = (d J d f)^{J,-}``.  The pair
``(J_t, omega_f)`` is again almost-Kaehler whenever ``g_f = omega_f(., J.)``
stays positive definite.
"""
from dataclasses import dataclass, field

import numpy as np

from . import grid as _grid
from .curvature import christoffels, hermitian_ricci, hermitian_scalar_from_rho, top_coefficient
from .elliptic import green_solve
from .errors import DegenerateBasis, MetricError, NotAPotential
from .forms import (Form, MetricField, codifferential, exterior_derivative,
                    function_laplacian, j_act_one_form, pullback_pair, scalar, to_matrix, wedge)
from .structures import CompatibleStructure, metric_from


def anti_part(psi, J):
    return (psi - pullback_pair(psi, J)) * 0.5


def hessian_anti(f, Jc):
    """``(d J d f)^{J,-}``."""
    df = exterior_derivative(scalar(f))
    return anti_part(exterior_derivative(j_act_one_form(df, Jc.J)), Jc.J)


def covariant_omega_along_gradient(f, Jc):
    """``D^g_X omega`` with ``X = (df)^#``, assembled from Christoffel symbols."""
    g = Jc.metric
    X = g.raise_index(exterior_derivative(scalar(f)))
    W = Jc.W
    gamma = christoffels(g)
    dW = np.zeros((4,) + W.shape) if Jc.constant else _grid.gradient(np.broadcast_to(W, (4, 4) + Jc.grid.shape))
    # (D_c W)_ab = d_c W_ab - Gamma^d_ca W_db - Gamma^d_cb W_ad, W skew
    corr = np.einsum("dca...,db...->cab...", gamma, W)
    DW = dW - corr + np.swapaxes(corr, 1, 2)
    m = np.einsum("c...,cab...->ab...", X, DW)
    out = np.stack([m[a, b] for a, b in ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))])
    return Form(2, out)


def log_volume_ratio(omega_f, omega):
    """``log(omega_f^2 / omega^2)`` from the top forms."""
    return np.log(top_coefficient(wedge(omega_f, omega_f)) / top_coefficient(wedge(omega, omega)))


@dataclass
class DeformationState:
    t: float
    f: np.ndarray
    psi_f: Form
    alpha: Form
    omega_f: Form
    g_f: MetricField
    F: np.ndarray
    s_def: np.ndarray = None
    structure: CompatibleStructure = None
    info: dict = field(default_factory=dict)

    @property
    def volume(self):
        """Density of ``omega_f^2 / 2`` against ``dx``."""
        return np.exp(self.F)

    def deformed_structure(self, check=False):
        return CompatibleStructure(self.structure.J, self.structure.grid, omega=self.omega_f, check=check)


def check_admissible(g_f, margin=1e-8):
    try:
        g_f.validate(margin=margin)
    except MetricError as exc:
        raise NotAPotential(f"g_f is not positive definite: {exc}") from exc


def build_state(t, f, ctx, check=True):
    """The almost-Kaehler deformation generated by the potential ``f`` at ``J_t``."""
    Jc = ctx.structure
    f = np.asarray(f, dtype=float)
    if check and not _grid.is_zero_mean(f):
        raise ValueError("potential must have zero mean")
    g = Jc.metric
    rhs = hessian_anti(f, Jc)
    psi, solve_info = green_solve(rhs, ctx, return_info=True)
    df = exterior_derivative(scalar(f))
    alpha = j_act_one_form(df, Jc.J) - codifferential(psi, g)
    dalpha = exterior_derivative(alpha)
    omega_f = Jc.omega + dalpha
    # omega_f is J-invariant up to discretisation error (reported as anti_defect);
    # g_f is the metric of its invariant part
    gm = metric_from(Jc.J, to_matrix(omega_f))
    g_f = MetricField(0.5 * (gm + np.swapaxes(gm, 0, 1)), check=False)
    check_admissible(g_f)
    omega = Jc.omega
    a = g.inner(dalpha, omega)
    b = g.inner(dalpha, dalpha)
    arg = 0.5 * ((1.0 + a) ** 2 + 1.0 - b)
    if np.min(arg) <= 0:
        raise NotAPotential("omega_f^2 degenerates")
    F = np.log(arg)
    info = {"green_residual": solve_info["residual"], "green_iterations": solve_info["iterations"]}
    if check:
        direct = log_volume_ratio(omega_f, omega)
        info["volume_defect"] = float(np.max(np.abs(np.exp(F) - np.exp(direct))))
        info["anti_defect"] = anti_part(dalpha, Jc.J).sup_norm()
    return DeformationState(t=t, f=f, psi_f=psi, alpha=alpha, omega_f=omega_f, g_f=g_f, F=F,
                            structure=Jc, info=info)


def deformed_scalar(state, rho_base):
    """``s = Delta^{g_f} F + 2 g_f(rho_base, omega_f)``.

    The factor 2 matches the normalisation ``g(omega, omega) = 2``: for a
    conformal change of the volume form the Ricci form shifts by
    ``-1/2 d J d F`` and its trace against ``omega_f`` picks up the factor.
    """
    s = function_laplacian(state.F, state.g_f) + 2.0 * state.g_f.inner(rho_base, state.omega_f)
    state.s_def = s
    return s


def direct_scalar(state):
    """Hermitian scalar curvature of ``(J_t, omega_f)`` from its own connection."""
    Jf = state.deformed_structure()
    return hermitian_scalar_from_rho(hermitian_ricci(Jf), state.omega_f)


# -- hamiltonian bases and projections ----------------------------------------

class HamiltonianBasis:
    """Span of a finite list of functions; orthonormalisations cached per density."""

    def __init__(self, functions=()):
        self.functions = [np.asarray(xi, dtype=float) for xi in functions]
        self._cache = {}

    def __len__(self):
        return len(self.functions)

    def gram(self, volume=None):
        k = len(self.functions)
        G = np.empty((k, k))
        for i in range(k):
            for j in range(i, k):
                G[i, j] = G[j, i] = _grid.integrate(self.functions[i] * self.functions[j], volume)
        return G

    def orthonormal(self, volume=None):
        key = None if volume is None else id(volume)
        hit = self._cache.get(key)
        if hit is not None and hit[0] is volume:
            return hit[1]
        G = self.gram(volume)
        d = np.sqrt(np.diag(G))
        if np.any(d <= 0):
            raise DegenerateBasis("basis contains a null function")
        normed = G / np.outer(d, d)
        if abs(np.linalg.det(normed)) <= 1e-8:
            raise DegenerateBasis("Gram matrix is singular")
        # Gram-Schmidt through the Cholesky factor
        L = np.linalg.cholesky(G)
        Linv = np.linalg.inv(L)
        ortho = [sum(Linv[i, j] * self.functions[j] for j in range(i + 1)) for i in range(len(G))]
        self._cache[key] = (volume, ortho)
        return ortho


def project_T(h, basis, volume=None):
    """Orthogonal projection of ``h`` onto ``span(basis)`` under ``volume``."""
    h = np.asarray(h, dtype=float)
    if basis is None or len(basis) == 0:
        return np.zeros_like(h)
    out = np.zeros_like(h)
    for xi in basis.orthonormal(volume):
        out = out + _grid.integrate(h * xi, volume) * xi
    return out


def _rho_base(ctx):
    rho = ctx.extras.get("rho_base")
    if rho is None:
        rho = hermitian_ricci(ctx.structure)
        ctx.extras["rho_base"] = rho
    return rho


def residual_from_state(state, ctx, basis=None):
    s = deformed_scalar(state, _rho_base(ctx))
    s0 = _grid.zero_mean_project(s)
    if basis is None or len(basis) == 0:
        return s0
    inner = s0 - project_T(s0, basis, state.volume)
    return inner - project_T(inner, basis, None)


def residual_Psi(t, f, ctx, basis=None, return_state=False):
    """Scalar part of ``Psi(t, f)``; zero exactly at extremal potentials."""
    state = build_state(t, f, ctx)
    r = residual_from_state(state, ctx, basis)
    return (r, state) if return_state else r


# -- extremality diagnostics --------------------------------------------------

def symplectic_gradient(z, omega_f):
    """``Z`` with ``omega_f(Z, .) = dz``."""
    dz = exterior_derivative(scalar(z)).comps
    W = to_matrix(omega_f)
    Wl = np.moveaxis(np.broadcast_to(W, (4, 4) + dz.shape[1:]), (0, 1), (-2, -1))
    # omega(Z, e_b) = Z^a W_ab = dz_b  ->  W^T Z = dz
    Z = np.linalg.solve(np.swapaxes(Wl, -1, -2), np.moveaxis(dz, 0, -1)[..., None])[..., 0]
    return np.moveaxis(Z, -1, 0)


def lie_derivative_metric(Z, g):
    """``(L_Z g)_ab = Z^c d_c g_ab + g_cb d_a Z^c + g_ac d_b Z^c``."""
    G = np.broadcast_to(g.g, (4, 4) + Z.shape[1:])
    dZ = _grid.gradient(Z)  # dZ[a, c] = d_a Z^c
    dg = _grid.gradient(G)
    term = np.einsum("c...,cab...->ab...", Z, dg)
    mixed = np.einsum("cb...,ac...->ab...", G, dZ)
    return term + mixed + np.swapaxes(mixed, 0, 1)


def killing_defect_of(z, state):
    if not np.any(z):
        return 0.0
    Z = symplectic_gradient(z, state.omega_f)
    return float(np.max(np.abs(lie_derivative_metric(Z, state.g_f))))


def extremal_diagnostics(state, ctx, basis=None, test_functions=()):
    """Calabi energy, moment pairings and the Killing defects of the state.

    ``killing_defect`` measures ``grad_omega s`` (extremal iff Killing);
    ``extremal_field_defect`` measures the field of ``z = Pi^T(s0)``, which
    vanishes identically for the empty basis.
    """
    if state.s_def is None:
        deformed_scalar(state, _rho_base(ctx))
    s = state.s_def
    vol = state.volume
    s0 = _grid.zero_mean_project(s)
    z = project_T(s0, basis, vol)
    return {
        "calabi_energy": _grid.integrate(s * s, vol),
        "moment_pairing": [_grid.integrate(s * fp, vol) for fp in test_functions],
        "z": z,
        "killing_defect": killing_defect_of(s, state),
        "extremal_field_defect": killing_defect_of(z, state),
        "s_mean": _grid.mean(s, vol),
    }
