"""The operator P on primitive 2-forms, its kernel, and the Green solve.

Primitive 2-forms are handled in coordinates with respect to a smooth,
pointwise g-orthonormal frame split as ``Lambda^{J,-}`` (2 fields) plus
``Lambda_0^{J,+}`` (3 fields, the anti-self-dual forms).  P preserves the
split exactly, and on each block it reduces to ``d delta`` followed by the
pointwise projection back onto the block:

* anti-invariant ``psi``:  ``P psi = (d delta psi)^{J,-}``
* anti-self-dual ``psi``:   ``P psi = 1/2 Delta psi = (d delta psi)^{asd}``

Coordinate arrays have shape ``(m, K, n, n, n, n)``: ``m`` vectors with ``K``
coordinate fields each.  With the frame orthonormal and ``det g = 1`` the
L^2_g inner product is the Euclidean one times the cell volume.
"""
from dataclasses import dataclass, field

import warnings

import numpy as np
from scipy.sparse.linalg import LinearOperator, lobpcg

from . import grid as _grid
from .errors import AmbiguousKernel, PrimitivityError, SolveError, StructureError
from .forms import Form, codifferential, contract, exterior_derivative, laplacian, pullback_pair

# flat anti-invariant and anti-self-dual seeds for the frame
ANTI_SEEDS = ([0, 1, 0, 0, -1, 0], [0, 0, 1, 1, 0, 0])
ASD_SEEDS = ([1, 0, 0, 0, 0, -1], [0, 1, 0, 0, 1, 0], [0, 0, 1, -1, 0, 0])
N_ANTI, N_ASD = 2, 3


def _seed_stack(seeds):
    return np.asarray(seeds, dtype=float).T.reshape(6, len(seeds), 1, 1, 1, 1)


def _last(m):
    return np.moveaxis(m, (0, 1), (-2, -1))


def _first(m):
    return np.moveaxis(m, (-2, -1), (0, 1))


def _lowdin(vectors, G2, what):
    """Pointwise symmetric orthonormalisation of ``vectors[:, k]`` under ``G2``."""
    gram = np.einsum("ik...,ij...,jl...->kl...", vectors, G2, vectors)
    w, v = np.linalg.eigh(_last(gram))
    if np.min(w) < 1e-6:
        raise StructureError(f"{what} frame degenerates (Gram eigenvalue {np.min(w):.2e})")
    inv_sqrt = _first(np.einsum("...ij,...j,...kj->...ik", v, 1.0 / np.sqrt(w), v))
    return np.einsum("ik...,kl...->il...", vectors, inv_sqrt)


def _pull(stack, J):
    """``psi(J., J.)`` applied to each column of a ``(6, K, ...)`` stack."""
    out = []
    for k in range(stack.shape[1]):
        out.append(pullback_pair(Form(2, stack[:, k]), J).comps)
    return np.stack(out, axis=1)


@dataclass
class PrimitiveFrame:
    """Orthonormal primitive frame ``anti`` (6, 2, ...) and ``asd`` (6, 3, ...)."""

    anti: np.ndarray
    asd: np.ndarray
    dual_anti: np.ndarray
    dual_asd: np.ndarray

    @classmethod
    def build(cls, Jc):
        g = Jc.metric
        G2 = g.compound(2)
        J = Jc.J
        anti_seed = _seed_stack(ANTI_SEEDS)
        asd_seed = _seed_stack(ASD_SEEDS)
        anti = 0.5 * (anti_seed - _pull(anti_seed, J))
        inv = 0.5 * (asd_seed + _pull(asd_seed, J))
        W = Jc.W
        om = np.stack([W[a, b] for a, b in ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))])
        om = om[:, None]
        om_norm = np.einsum("i...,ij...,j...->...", om[:, 0], G2, om[:, 0])
        lam = np.einsum("ik...,ij...,j...->k...", inv, G2, om[:, 0]) / om_norm
        asd = inv - om * lam[None]
        anti = _lowdin(anti, G2, "anti-invariant")
        asd = _lowdin(asd, G2, "anti-self-dual")
        dual_anti = np.einsum("ik...,ij...->kj...", anti, G2)
        dual_asd = np.einsum("ik...,ij...->kj...", asd, G2)
        return cls(anti, asd, dual_anti, dual_asd)

    def to_anti(self, comps):
        return contract(self.dual_anti, comps)

    def to_asd(self, comps):
        return contract(self.dual_asd, comps)

    def from_anti(self, c):
        return contract(self.anti, c)

    def from_asd(self, c):
        return contract(self.asd, c)


def _batch_form(comps_mk):
    """``(m, 6, grid)`` -> Form with comps ``(6, m, grid)``."""
    return Form(2, np.moveaxis(comps_mk, 0, 1))


def d_delta(comps, g):
    """``d delta psi`` on a batch of 2-form coefficient arrays ``(m, 6, grid)``."""
    out = exterior_derivative(codifferential(_batch_form(comps), g))
    return np.moveaxis(out.comps, 1, 0)


def _lift(frame_part, c):
    # (6, K, ...) x (m, K, grid) -> (m, 6, grid)
    return np.moveaxis(contract(frame_part, np.moveaxis(c, 1, 0)), 0, 1)


def _project(dual_part, comps):
    return np.moveaxis(contract(dual_part, np.moveaxis(comps, 1, 0)), 0, 1)


class PrimitiveOperator:
    """P on primitive coordinates for a fixed compatible structure."""

    def __init__(self, Jc, frame=None):
        self.structure = Jc
        self.frame = PrimitiveFrame.build(Jc) if frame is None else frame
        self.g = Jc.metric
        self.n = Jc.grid.n

    def anti(self, c):
        f = self.frame
        out = _project(f.dual_anti, d_delta(_lift(f.anti, c), self.g))
        return _grid.dealias(out)

    def asd(self, c):
        f = self.frame
        out = _project(f.dual_asd, d_delta(_lift(f.asd, c), self.g))
        return _grid.dealias(out)

    def primitive(self, c):
        return np.concatenate([self.anti(c[:, :N_ANTI]), self.asd(c[:, N_ANTI:])], axis=1)

    def coords_to_form(self, c):
        """Primitive coordinates ``(5, grid)`` -> 2-form."""
        f = self.frame
        return Form(2, f.from_anti(c[:N_ANTI]) + f.from_asd(c[N_ANTI:]))

    def form_to_coords(self, psi):
        f = self.frame
        return np.concatenate([f.to_anti(psi.comps), f.to_asd(psi.comps)])


def spectral_preconditioner(n, shift):
    ksq = _grid.wavenumber_squared(n)
    symbol = 0.5 * ksq + shift
    if shift == 0:
        symbol = symbol.copy()
        symbol[0, 0, 0, 0] = 1.0
    inv = _grid.nyquist_mask(n) / symbol

    def apply(c):
        return _grid.ifft(inv * _grid.fft(c), n)

    return apply


# -- batched deflated preconditioned CG ---------------------------------------

def _flat(v):
    return v.reshape(v.shape[0], -1)


def _dots(a, b):
    return np.einsum("mi,mi->m", _flat(a), _flat(b))


def _gram(a, b):
    return _flat(a) @ _flat(b).T


def _deflate(v, Q):
    if Q is None or len(Q) == 0:
        return v
    coef = _gram(v, Q)
    return v - (coef @ _flat(Q)).reshape(v.shape)


def _bcast(v):
    return v[:, None, None, None, None, None]


def deflated_pcg(apply_A, b, precond, Q=None, rtol=1e-10, maxiter=500, x0=None, coarse=None):
    """Solve ``A x = (I - QQ^T) b`` on ``range(Q)^perp`` for a batch of right-hand sides.

    ``Q`` holds Euclidean-orthonormal vectors ``(q, K, grid)``; the solution is
    returned orthogonal to them.  ``coarse`` optionally holds approximate
    low eigenvectors ``W`` (orthogonal to ``Q``); their span is solved
    exactly through the small matrix ``W^T A W`` so that slow modes do not
    hold up the iteration.  Returns ``(x, relative_residuals, iterations)``.
    """
    b = _deflate(b, Q)
    bnorm = np.sqrt(_dots(b, b))
    scale = np.where(bnorm > 0, bnorm, 1.0)
    if coarse is not None and len(coarse):
        W = _deflate(coarse, Q)
        AW = _deflate(apply_A(W), Q)
        E = _gram(W, AW)
        E = 0.5 * (E + E.T)
        Einv = np.linalg.inv(E)

        def solve_coarse(v):
            # W (W^T A W)^{-1} W^T v
            return ((_gram(v, W) @ Einv) @ _flat(W)).reshape(v.shape)

        def mu_correction(z):
            # W (W^T A W)^{-1} (AW)^T z keeps directions A-orthogonal to W
            return ((_gram(z, AW) @ Einv) @ _flat(W)).reshape(z.shape)
    else:
        W = None
    if x0 is None:
        x = np.zeros_like(b)
    else:
        x = _deflate(x0, Q)
    r = b - (_deflate(apply_A(x), Q) if x0 is not None else 0.0)
    if W is not None:
        x = x + solve_coarse(r)
        r = b - _deflate(apply_A(x), Q)
    z = _deflate(precond(r), Q)
    p = z - mu_correction(z) if W is not None else z.copy()
    rz = _dots(r, z)
    rel = np.sqrt(_dots(r, r)) / scale
    it = 0
    while np.any(rel > rtol) and it < maxiter:
        Ap = _deflate(apply_A(p), Q)
        pAp = _dots(p, Ap)
        active = (rel > rtol) & (pAp > 0)
        alpha = np.where(active, rz / np.where(active, pAp, 1.0), 0.0)
        x += _bcast(alpha) * p
        r -= _bcast(alpha) * Ap
        z = _deflate(precond(r), Q)
        rz_new = _dots(r, z)
        beta = np.where(active, rz_new / np.where(rz != 0, rz, 1.0), 0.0)
        p = z + _bcast(beta) * p
        if W is not None:
            p = p - mu_correction(z)
        rz = rz_new
        rel = np.sqrt(_dots(r, r)) / scale
        it += 1
    rel = np.where(bnorm > 0, rel, 0.0)
    return _deflate(x, Q), rel, it


def _orthonormal(V):
    """Euclidean-orthonormalise a stack ``(m, ...)`` of vectors."""
    m = V.shape[0]
    flat = V.reshape(m, -1).T
    q, _ = np.linalg.qr(flat)
    return q.T.reshape(V.shape)


# -- kernel detection ---------------------------------------------------------

@dataclass
class EllipticContext:
    """P at one structure with its numerically detected kernel."""

    structure: object
    operator: PrimitiveOperator
    eigenvalues: np.ndarray
    kernel_coords: np.ndarray       # (dim, 5, grid), L^2_g orthonormal
    kernel_tol: float
    h_minus: int
    dim_kernel: int
    gap: float
    anti_fraction: np.ndarray = None
    mixing: float = 0.0
    refine_residual: float = 0.0
    low_anti: np.ndarray = None     # slow non-kernel anti-invariant modes, anti coords
    extras: dict = field(default_factory=dict)

    @property
    def grid(self):
        return self.structure.grid

    @property
    def b_minus(self):
        return self.dim_kernel - self.h_minus

    @property
    def kernel_basis(self):
        return [self.operator.coords_to_form(c) for c in self.kernel_coords]

    @property
    def anti_kernel(self):
        """Anti-invariant kernel vectors in anti coordinates, Euclidean-orthonormal."""
        k = self.kernel_coords[: self.h_minus, :N_ANTI]
        return _orthonormal(k) if len(k) else k

    @property
    def asd_kernel(self):
        k = self.kernel_coords[self.h_minus:, N_ANTI:]
        return _orthonormal(k) if len(k) else k

    def summary(self):
        return {
            "dim_kernel": int(self.dim_kernel),
            "h_minus": int(self.h_minus),
            "gap": float(self.gap),
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "mixing": float(self.mixing),
        }


def _lobpcg(apply_block, X0, precond, tol, maxiter):
    shape = X0.shape[1:]
    size = int(np.prod(shape))

    def wrap(fn):
        def mm(X):
            X = np.asarray(X)
            if X.ndim == 1:
                X = X[:, None]
            blocks = X.T.reshape((X.shape[1],) + shape)
            return fn(blocks).reshape(X.shape[1], size).T
        return mm

    A = LinearOperator((size, size), matvec=wrap(apply_block), matmat=wrap(apply_block), dtype=float)
    M = LinearOperator((size, size), matvec=wrap(precond), matmat=wrap(precond), dtype=float)
    with warnings.catch_warnings():
        # convergence is judged below from the refined kernel residuals
        warnings.simplefilter("ignore", UserWarning)
        vals, vecs = lobpcg(A, _flat(X0).T, M=M, tol=tol, maxiter=maxiter, largest=False)
    order = np.argsort(vals)
    return vals[order], vecs[:, order].T.reshape((len(vals),) + shape)


def _chunked(fn, chunk):
    def apply(c):
        if c.shape[0] <= chunk:
            return fn(c)
        return np.concatenate([fn(c[i:i + chunk]) for i in range(0, c.shape[0], chunk)])
    return apply


def refine_kernel(op, K, precond, sweeps=3, rtol=1e-12):
    """Newton-polish approximate kernel vectors: ``k <- k - P^+ P k``."""
    K = _orthonormal(K)
    for _ in range(sweeps):
        PK = op(K)
        if float(np.max(np.sqrt(_dots(PK, PK)))) < 1e-13:
            break
        delta, _, _ = deflated_pcg(op, PK, precond, Q=K, rtol=rtol, maxiter=400)
        K = _orthonormal(K - delta)
    PK = op(K)
    return K, float(np.max(np.sqrt(_dots(PK, PK))))


def start_vectors(grid, K, extra, rng):
    """Constant coordinate fields (the flat kernel) plus seeded low modes."""
    X = np.zeros((K + extra, K) + grid.shape)
    for j in range(K):
        X[j, j] = 1.0
    for m in range(extra):
        for j in range(K):
            X[K + m, j] = _grid.random_bandlimited(grid, rng, kmax=1)
    return X


LOW_MODE_CUT = 0.25


def _block_spectrum(apply, X0, precond, tol, lobpcg_tol, maxiter):
    vals, vecs = _lobpcg(apply, X0, precond, lobpcg_tol, maxiter)
    inside = vals < tol
    if inside.all():
        raise AmbiguousKernel("every computed eigenvalue is below tol; raise n_eigs", vals, tol)
    low = (~inside) & (vals < LOW_MODE_CUT)
    return vals, vecs[inside], vecs[low]


_PAIRS = [(a, b) for a in range(4) for b in range(a, 4)]


def _constant_symbol(apply, K, grid):
    """Matrices ``S_ab`` with ``P(c cos k.x) = (sum_ab k_a k_b S_ab c) cos k.x``.

    Valid for constant-coefficient blocks; read off from plane waves along
    ``e_a`` and ``e_a + e_b``.
    """
    x = grid.coords()
    waves = []
    for a, b in _PAIRS:
        waves.append(np.cos(x[a]) if a == b else np.cos(x[a] + x[b]))
    X = np.zeros((len(waves) * K, K) + grid.shape)
    for w, wave in enumerate(waves):
        for j in range(K):
            X[w * K + j, j] = wave
    Y = apply(X)
    sig = np.empty((len(waves), K, K))
    for w, wave in enumerate(waves):
        block = Y[w * K:(w + 1) * K]                   # (K in, K out, grid)
        sig[w] = 2.0 * np.mean(block * wave, axis=(-4, -3, -2, -1)).T
    S = np.zeros((4, 4, K, K))
    for w, (a, b) in enumerate(_PAIRS):
        if a == b:
            S[a, a] = sig[w]
    for w, (a, b) in enumerate(_PAIRS):
        if a != b:
            S[a, b] = S[b, a] = 0.5 * (sig[w] - S[a, a] - S[b, b])
    return 0.5 * (S + np.swapaxes(S, -1, -2))


SYMBOL_GRID = 8


def _constant_block(apply, K, grid, count, tol):
    """Exact lowest spectrum of a constant-coefficient block over all resolved modes.

    ``apply`` acts on fields over a ``SYMBOL_GRID`` grid; plane waves with
    ``|k_a| <= 1`` are resolved there exactly, so the symbol is the same as on ``grid``.
    """
    n = grid.n
    S = _constant_symbol(apply, K, _grid.GridSpec(SYMBOL_GRID))
    k = np.fft.fftfreq(n, d=1.0 / n)
    k = k[np.abs(k) != n // 2]
    kk = np.stack(np.meshgrid(k, k, k, k, indexing="ij"), axis=-1).reshape(-1, 4)
    sym = np.einsum("ma,mb,abij->mij", kk, kk, S)
    vals, vecs = np.linalg.eigh(sym)
    flat = vals.reshape(-1)
    order = np.argsort(flat, kind="stable")[:count]
    kernel = np.zeros((K, K) + grid.shape)
    for j in range(K):
        kernel[j, j] = 1.0
    x = grid.coords()
    low = []
    for idx in order:
        m, i = divmod(int(idx), K)
        if not (tol <= flat[idx] < LOW_MODE_CUT):
            continue
        phase = sum(kk[m, a] * x[a] for a in range(4))
        low.append(vecs[m, :, i][:, None, None, None, None] * np.cos(phase))
        low.append(vecs[m, :, i][:, None, None, None, None] * np.sin(phase))
    low = _orthonormal(np.array(low)) if low else np.zeros((0, K) + grid.shape)
    return flat[order], _orthonormal(kernel), low


def kernel_detect(Jc, tol=1e-6, n_eigs=7, seed=0, lobpcg_tol=1e-6, maxiter=40, chunk=None,
                  start=None):
    """Lowest eigenpairs of P on primitive forms; kernel, ``h^-`` and the gap.

    P preserves the anti-invariant / anti-self-dual split, so each block is
    solved on its own.  The classification still applies the dominance rule:
    a kernel vector counts towards ``h^-`` when its anti-invariant share of
    the norm exceeds one half.  ``start`` may hold a previous context whose
    kernel seeds the iteration.  Constant structures give a constant-coefficient
    operator whose spectrum is read off exactly from its Fourier symbol.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    n_eigs = int(min(max(n_eigs, 7), 12))
    grid = Jc.grid
    n = grid.n
    if chunk is None:
        chunk = 12 if n <= 16 else 3
    op = PrimitiveOperator(Jc)
    rng = np.random.default_rng(seed)
    extra_a = max(2, n_eigs - N_ANTI - N_ASD)
    extra_s = max(2, n_eigs - N_ANTI - N_ASD - extra_a + 2)
    Xa = start_vectors(grid, N_ANTI, extra_a, rng)
    Xs = start_vectors(grid, N_ASD, extra_s, rng)
    if start is not None and start.dim_kernel:
        ka = start.kernel_coords[: start.h_minus, :N_ANTI]
        ks = start.kernel_coords[start.h_minus:, N_ANTI:]
        Xa[: len(ka)] = ka
        Xs[: len(ks)] = ks
    pshift = _chunked(spectral_preconditioner(n, 0.05), chunk)
    pzero = _chunked(spectral_preconditioner(n, 0.0), chunk)
    apply_a = _chunked(op.anti, chunk)
    apply_s = _chunked(op.asd, chunk)
    if Jc.constant:
        omega = None if Jc.omega_is_standard else Form(2, Jc.omega.comps[..., :1, :1, :1, :1])
        small = PrimitiveOperator(type(Jc)(Jc.J[..., :1, :1, :1, :1], _grid.GridSpec(SYMBOL_GRID),
                                           omega=omega, check=False))
        vals_a, Ka, low_a = _constant_block(small.anti, N_ANTI, grid, len(Xa), tol)
        vals_s, Ks, _ = _constant_block(small.asd, N_ASD, grid, len(Xs), tol)
    else:
        vals_a, Ka, low_a = _block_spectrum(apply_a, Xa, pshift, tol, lobpcg_tol, maxiter)
        vals_s, Ks, _ = _block_spectrum(apply_s, Xs, pshift, tol, lobpcg_tol, maxiter)
    vals = np.sort(np.concatenate([vals_a, vals_s]))
    gap = float(vals[vals >= tol].min())
    if gap < 10 * tol:
        raise AmbiguousKernel(
            f"eigenvalue {gap:.3e} lies within a factor 10 of the kernel threshold {tol:g}", vals, tol)
    res_a = res_s = 0.0
    if len(Ka):
        Ka, res_a = refine_kernel(apply_a, Ka, pzero)
    if len(Ks):
        Ks, res_s = refine_kernel(apply_s, Ks, pzero)
    dim = len(Ka) + len(Ks)
    K = np.zeros((dim, N_ANTI + N_ASD) + grid.shape)
    K[: len(Ka), :N_ANTI] = Ka
    K[len(Ka):, N_ANTI:] = Ks
    share = np.sum(_flat(K[:, :N_ANTI]) ** 2, axis=1) / np.maximum(np.sum(_flat(K) ** 2, axis=1), 1e-300)
    h_minus = int(np.sum(share > 0.5))
    mixing = float(np.max(np.minimum(share, 1 - share))) if dim else 0.0
    K = K / np.sqrt(grid.cell_volume)
    return EllipticContext(
        structure=Jc, operator=op, eigenvalues=vals, kernel_coords=K, kernel_tol=tol,
        h_minus=h_minus, dim_kernel=dim, gap=gap, anti_fraction=share, mixing=mixing,
        refine_residual=max(res_a, res_s), low_anti=low_a,
    )


# -- P on forms ---------------------------------------------------------------

def primitivity_defect(psi, g, omega):
    return float(np.max(np.abs(g.inner(psi, omega))))


def apply_P(psi, Jc, check=True):
    """``1/2 Delta psi - 1/4 g(Delta psi, omega) omega`` on a primitive 2-form."""
    g = Jc.metric
    omega = Jc.omega
    if check:
        scale = max(1.0, psi.sup_norm())
        if primitivity_defect(psi, g, omega) > 1e-8 * scale:
            raise PrimitivityError("P acts on primitive 2-forms only")
    lap = laplacian(psi, g)
    return lap * 0.5 - omega * (0.25 * g.inner(lap, omega))


def apply_P_anti(psi, Jc):
    """``(d delta psi)^{J,-}`` for an anti-invariant 2-form."""
    dd = exterior_derivative(codifferential(psi, Jc.metric))
    return (dd - pullback_pair(dd, Jc.J)) * 0.5


def anti_invariance_defect(psi, J):
    plus = (psi + pullback_pair(psi, J)) * 0.5
    return plus.sup_norm()


def project_out_kernel(psi, ctx):
    """Remove the L^2_g-projection of ``psi`` onto ``ker P``."""
    g = ctx.structure.metric
    out = psi.copy()
    for kappa in ctx.kernel_basis:
        out = out - kappa * g.l2_inner(psi, kappa)
    return out


def green_solve(rhs, ctx, rtol=1e-10, maxiter=None, return_info=False):
    """``psi`` anti-invariant, orthogonal to ``ker P``, with ``P psi = rhs_perp``."""
    Jc = ctx.structure
    n = Jc.grid.n
    scale = max(1.0, rhs.sup_norm())
    if anti_invariance_defect(rhs, Jc.J) > 1e-8 * scale:
        raise StructureError("green_solve needs a J-anti-invariant right-hand side")
    if maxiter is None:
        maxiter = 50 * n
    op = ctx.operator
    # Nyquist content is invisible to P and cannot be matched
    b = _grid.dealias(op.frame.to_anti(rhs.comps))[None]
    if not np.any(b):
        psi = Form(2, np.zeros((6,) + Jc.grid.shape))
        info = {"residual": 0.0, "iterations": 0}
        return (psi, info) if return_info else psi
    Q = ctx.anti_kernel
    x, rel, it = deflated_pcg(op.anti, b, spectral_preconditioner(n, 0.0), Q=Q,
                              rtol=rtol, maxiter=maxiter, coarse=ctx.low_anti)
    if rel[0] > rtol:
        raise SolveError(f"CG stalled at relative residual {rel[0]:.2e} after {it} iterations")
    psi = Form(2, op.frame.from_anti(x[0]))
    info = {"residual": float(rel[0]), "iterations": it}
    return (psi, info) if return_info else psi


def resolved_part(psi, ctx):
    """Anti-invariant part of ``psi`` with Nyquist content removed in frame coordinates.

    Spectral derivatives cannot produce Nyquist modes, so these lie in the
    discrete kernel of P; comparisons against ``P psi`` use this part.
    """
    frame = ctx.operator.frame
    return Form(2, frame.from_anti(_grid.dealias(frame.to_anti(psi.comps))))
