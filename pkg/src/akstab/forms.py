"""Differential forms on the periodic 4-grid.

A form of rank p stores its coefficients on the basis ``dx^I`` listed in
``BASIS[p]``; index tuples are 0-based, so ``(0, 1)`` is ``dx1 ^ dx2``.
All raising of indices happens inside ``MetricField`` products and the Hodge
star; forms themselves only ever hold lower-index coefficients.
"""
from dataclasses import dataclass
from functools import cached_property
from itertools import combinations

import numpy as np

from . import grid as _grid
from .errors import MetricError, RankError, StructureError

BASIS = {
    0: [()],
    1: [(0,), (1,), (2,), (3,)],
    2: [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
    3: [(1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2)],
    4: [(0, 1, 2, 3)],
}
INDEX = {p: {I: i for i, I in enumerate(b)} for p, b in BASIS.items()}


def perm_sign(seq):
    """Sign of the permutation sorting a sequence of distinct integers."""
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _d_terms(p):
    terms = []
    for out, K in enumerate(BASIS[p + 1]):
        for k, a in enumerate(K):
            J = K[:k] + K[k + 1:]
            terms.append((out, INDEX[p][J], a, (-1) ** k))
    return terms


_D_TERMS = {p: _d_terms(p) for p in range(4)}


def _wedge_terms(p, q):
    terms = []
    for out, K in enumerate(BASIS[p + q]):
        for I in combinations(K, p):
            J = tuple(a for a in K if a not in I)
            terms.append((out, INDEX[p][I], INDEX[q][J], perm_sign(I + J)))
    return terms


def _star_terms(p):
    terms = []
    for out, K in enumerate(BASIS[4 - p]):
        I = tuple(a for a in range(4) if a not in K)
        terms.append((out, INDEX[p][I], perm_sign(I + K)))
    return terms


_STAR_TERMS = {p: _star_terms(p) for p in range(5)}


@dataclass
class Form:
    """Differential form of rank ``rank`` with coefficient array ``comps``.

    ``comps`` has shape ``(len(BASIS[rank]), n, n, n, n)``.
    """

    rank: int
    comps: np.ndarray

    def __post_init__(self):
        if self.rank not in BASIS:
            raise RankError(f"rank must be in 0..4, got {self.rank}")
        self.comps = np.asarray(self.comps, dtype=float)
        if self.comps.shape[0] != len(BASIS[self.rank]):
            raise RankError(
                f"rank {self.rank} needs {len(BASIS[self.rank])} components, got {self.comps.shape[0]}"
            )

    @property
    def n(self):
        return self.comps.shape[-1]

    @property
    def grid(self):
        return _grid.GridSpec(self.n)

    def _coerce(self, other):
        if not isinstance(other, Form) or other.rank != self.rank:
            raise RankError("forms must have equal rank")
        return other.comps

    def __add__(self, other):
        return Form(self.rank, self.comps + self._coerce(other))

    def __sub__(self, other):
        return Form(self.rank, self.comps - self._coerce(other))

    def __neg__(self):
        return Form(self.rank, -self.comps)

    def __mul__(self, scalar):
        # scalar may be a number or a grid field
        return Form(self.rank, self.comps * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return Form(self.rank, self.comps / scalar)

    def sup_norm(self):
        return float(np.max(np.abs(self.comps))) if self.comps.size else 0.0

    def copy(self):
        return Form(self.rank, self.comps.copy())


def zero_form(rank, grid):
    return Form(rank, grid.zeros(len(BASIS[rank])))


def scalar(field):
    return Form(0, np.asarray(field, dtype=float)[None])


def constant_form(rank, coeffs, grid):
    coeffs = np.asarray(coeffs, dtype=float).reshape(-1, 1, 1, 1, 1)
    return Form(rank, np.broadcast_to(coeffs, (len(BASIS[rank]),) + grid.shape).copy())


def basis_form(I, grid):
    """``dx^I`` for a sorted 0-based index tuple, e.g. ``(0, 2)`` for dx1^dx3."""
    I = tuple(I)
    p = len(I)
    coeffs = np.zeros(len(BASIS[p]))
    coeffs[INDEX[p][I]] = 1.0
    return constant_form(p, coeffs, grid)


def standard_omega(grid):
    """``dx1^dx2 + dx3^dx4``."""
    return constant_form(2, [1, 0, 0, 0, 0, 1], grid)


# -- pointwise 2-form <-> antisymmetric matrix -------------------------------

def to_matrix(form):
    """Antisymmetric ``(4, 4, ...)`` coefficient matrix of a 2-form."""
    if form.rank != 2:
        raise RankError("to_matrix needs a 2-form")
    m = np.zeros((4, 4) + form.comps.shape[1:])
    for i, (a, b) in enumerate(BASIS[2]):
        m[a, b] = form.comps[i]
        m[b, a] = -form.comps[i]
    return m


def from_matrix(m):
    return Form(2, np.stack([m[a, b] for a, b in BASIS[2]]))


def omega_matrix(omega):
    return to_matrix(omega)


# -- exterior calculus --------------------------------------------------------

def exterior_derivative(form):
    """``d`` computed in Fourier space: one forward transform per input
    component and one inverse per output component."""
    p = form.rank
    if p >= 4:
        raise RankError("exterior derivative of a 4-form is not defined")
    n = form.n
    ks = _grid.wavenumbers(n)
    hat = _grid.fft(form.comps)
    out = np.zeros((len(BASIS[p + 1]),) + hat.shape[1:], dtype=complex)
    for o, i, a, sign in _D_TERMS[p]:
        out[o] += sign * 1j * ks[a] * hat[i]
    return Form(p + 1, _grid.ifft(out, n))


def wedge(a, b):
    p, q = a.rank, b.rank
    if p + q > 4:
        raise RankError(f"wedge of ranks {p} and {q} exceeds 4")
    shape = np.broadcast_shapes(a.comps.shape[1:], b.comps.shape[1:])
    out = np.zeros((len(BASIS[p + q]),) + shape)
    for o, i, j, sign in _wedge_terms(p, q):
        out[o] += sign * a.comps[i] * b.comps[j]
    return Form(p + q, out)


def j_act_one_form(alpha, J):
    """``(J alpha)(X) = -alpha(J X)`` for a 1-form ``alpha``."""
    if alpha.rank != 1:
        raise RankError("J acts here on 1-forms")
    return Form(1, -contract(np.swapaxes(J, 0, 1), alpha.comps))


def pullback_pair(form, J):
    """``psi(J., J.)`` for a 2-form ``psi``."""
    m = to_matrix(form)
    return from_matrix(field_matmul(np.swapaxes(J, 0, 1), field_matmul(m, J)))


def check_almost_complex(J, tol=1e-10):
    sq = np.einsum("ab...,bc...->ac...", J, J)
    eye = np.eye(4).reshape((4, 4) + (1,) * (J.ndim - 2))
    err = float(np.max(np.abs(sq + eye)))
    if err > tol:
        raise StructureError(f"J^2 + Id has sup norm {err:.3e} > {tol:g}")
    return err


def j_split(psi, J):
    """``(psi^{J,+}, psi^{J,-})`` with ``psi^{J,+-} = (psi +- psi(J., J.)) / 2``."""
    if psi.rank != 2:
        raise RankError("j_split needs a 2-form")
    check_almost_complex(J)
    pulled = pullback_pair(psi, J)
    return (psi + pulled) * 0.5, (psi - pulled) * 0.5


def anti_invariant_part(psi, J):
    return (psi - pullback_pair(psi, J)) * 0.5


# -- metrics ------------------------------------------------------------------

def _to_last(m):
    return np.moveaxis(m, (0, 1), (-2, -1))


def _from_last(m):
    return np.moveaxis(m, (-2, -1), (0, 1))


class MetricField:
    """Pointwise symmetric positive definite ``g_{ab}``.

    ``g`` has shape ``(4, 4, ...)`` where the trailing axes are either the
    full grid or singleton axes (a constant metric broadcasts).
    """

    def __init__(self, g, check=True):
        self.g = np.asarray(g, dtype=float)
        if self.g.shape[:2] != (4, 4):
            raise MetricError("metric must have leading shape (4, 4)")
        if check:
            self.validate()

    def validate(self, margin=0.0):
        asym = float(np.max(np.abs(self.g - np.swapaxes(self.g, 0, 1))))
        scale = max(1.0, float(np.max(np.abs(self.g))))
        if asym > 1e-10 * scale:
            raise MetricError(f"metric not symmetric (defect {asym:.2e})")
        gl = _to_last(self.g)
        for k in range(1, 5):
            minor = np.linalg.det(gl[..., :k, :k])
            if not np.all(minor > margin):
                raise MetricError(f"leading principal minor {k} not positive")

    @classmethod
    def flat(cls, grid=None):
        g = np.eye(4).reshape(4, 4, 1, 1, 1, 1)
        if grid is not None:
            g = np.broadcast_to(g, (4, 4) + grid.shape).copy()
        return cls(g)

    @classmethod
    def conformal(cls, u):
        """``e^{2u} Id``."""
        return cls(np.einsum("ab,...->ab...", np.eye(4), np.exp(2 * u)))

    @cached_property
    def inverse(self):
        return _from_last(np.linalg.inv(_to_last(self.g)))

    @cached_property
    def det(self):
        return np.linalg.det(_to_last(self.g))

    @cached_property
    def sqrt_det(self):
        return np.sqrt(self.det)

    @cached_property
    def _compounds(self):
        return {}

    def compound(self, p):
        """Matrix of ``g^{-1}`` minors acting on rank-``p`` coefficients."""
        if p not in self._compounds:
            ginv = self.inverse
            B = BASIS[p]
            C = len(B)
            if p == 0:
                out = np.ones((1, 1) + (1,) * (ginv.ndim - 2))
            elif p == 1:
                out = ginv
            elif p == 2:
                out = np.empty((C, C) + ginv.shape[2:])
                for i, (a, b) in enumerate(B):
                    for j, (c, d) in enumerate(B):
                        out[i, j] = ginv[a, c] * ginv[b, d] - ginv[a, d] * ginv[b, c]
            else:
                gl = _to_last(ginv)
                out = np.empty((C, C) + ginv.shape[2:])
                for i, I in enumerate(B):
                    for j, J in enumerate(B):
                        out[i, j] = np.linalg.det(gl[..., list(I), :][..., list(J)])
            self._compounds[p] = out
        return self._compounds[p]

    def inner(self, a, b):
        """Pointwise ``g(a, b)``; on 2-forms ``g(w, w) = 2`` for the standard pair."""
        if a.rank != b.rank:
            raise RankError("inner product needs equal ranks")
        G = self.compound(a.rank)
        return np.sum(a.comps * contract(G, b.comps), axis=0)

    def volume_density(self):
        return self.sqrt_det

    def l2_inner(self, a, b):
        """``int g(a, b) dvol_g``."""
        return _grid.integrate(self.inner(a, b) * np.ones(a.comps.shape[1:]), _broadcast(self.sqrt_det, a))

    def l2_norm(self, a):
        return np.sqrt(max(self.l2_inner(a, a), 0.0))

    def raise_index(self, alpha):
        """Vector field ``alpha^#`` from a 1-form."""
        return contract(self.inverse, alpha.comps)


def _broadcast(field, form):
    return np.broadcast_to(field, form.comps.shape[1:])


def contract(M, v):
    """``out[i] = sum_j M[i, j] v[j]`` with field-valued entries.

    Plain loops beat einsum's broadcasting path here; entries of constant
    matrices that vanish are skipped.
    """
    rows, cols = M.shape[:2]
    const = M.shape[2:] == (1, 1, 1, 1)
    shape = np.broadcast_shapes(M.shape[2:], v.shape[1:])
    out = np.zeros((rows,) + shape)
    tmp = np.empty(shape)
    for i in range(rows):
        for j in range(cols):
            m = M[i, j]
            if const:
                c = float(m.reshape(-1)[0])
                if c == 0.0:
                    continue
                m = c
            np.multiply(m, v[j], out=tmp)
            out[i] += tmp
    return out


def field_matmul(A, B):
    """Pointwise matrix product of ``(r, k, ...)`` and ``(k, c, ...)`` fields."""
    return np.stack([contract(A, B[:, c]) for c in range(B.shape[1])], axis=1)


def hodge_star(form, g):
    """Hodge star defined by ``a ^ *b = g(a, b) dvol_g``, orientation dx1234."""
    p = form.rank
    G = g.compound(p)
    raised = contract(G, form.comps)
    shape = np.broadcast_shapes(raised.shape[1:], np.shape(g.sqrt_det))
    out = np.zeros((len(BASIS[4 - p]),) + shape)
    for o, i, sign in _STAR_TERMS[p]:
        out[o] = sign * g.sqrt_det * raised[i]
    return Form(4 - p, out)


def codifferential(form, g):
    """``delta = -* d *`` (valid on every rank in dimension 4)."""
    if form.rank == 0:
        raise RankError("codifferential of a function is not defined")
    return -hodge_star(exterior_derivative(hodge_star(form, g)), g)


def laplacian(form, g):
    """Hodge Laplacian ``d delta + delta d`` (nonnegative spectrum)."""
    out = None
    if form.rank > 0:
        out = exterior_derivative(codifferential(form, g))
    if form.rank < 4:
        term = codifferential(exterior_derivative(form), g)
        out = term if out is None else out + term
    return out


def function_laplacian(f, g):
    """``-(1/sqrt g) d_a (sqrt g g^{ab} d_b f)``, equal to ``delta d f``."""
    flux = contract(g.inverse, _grid.gradient(f)) * g.sqrt_det
    div = sum(_grid.derivative(flux[a], a) for a in range(4))
    return -div / g.sqrt_det


def primitive_split(psi, g, omega=None):
    """``(lam, psi0)`` with ``psi = lam * omega + psi0`` and ``g(psi0, omega) = 0``."""
    if psi.rank != 2:
        raise RankError("primitive_split needs a 2-form")
    if omega is None:
        omega = standard_omega(psi.grid)
    lam = g.inner(psi, omega) / g.inner(omega, omega)
    return lam, psi - omega * lam
