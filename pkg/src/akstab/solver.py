"""Lichnerowicz operator, Newton-Krylov corrector and continuation in ``t``."""
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, gmres

from . import grid as _grid
from .curvature import christoffels, hermitian_ricci, hermitian_scalar_from_rho
from .deformation import (build_state, extremal_diagnostics, residual_from_state,
                          _rho_base)
from .elliptic import kernel_detect
from .errors import AmbiguousKernel, Diverged, NotAPotential, PathRangeError, StructureError
from .forms import field_matmul, function_laplacian
from .structures import J0, OMEGA0, path_evaluate, standard_structure


# -- Lichnerowicz operator ----------------------------------------------------

def hessian_tensor(f, g, gamma=None):
    """``(D d f)_ab = d_a d_b f - Gamma^c_ab d_c f``."""
    if gamma is None:
        gamma = christoffels(g)
    df = _grid.gradient(f)
    ddf = _grid.gradient(df)
    return ddf - np.einsum("cab...,c...->ab...", gamma, df)


def anti_invariant_tensor(h, J):
    """``1/2 (h - h(J., J.))`` for a symmetric 2-tensor."""
    hJ = field_matmul(np.swapaxes(J, 0, 1), field_matmul(h, J))
    return 0.5 * (h - hJ)


def divergence_tensor(h, g, gamma):
    """``(delta h)_b = -g^{ac} (nabla_a h)_{cb}``."""
    dh = _grid.gradient(np.broadcast_to(h, h.shape))
    nab = (dh
           - np.einsum("dac...,db...->acb...", gamma, h)
           - np.einsum("dab...,cd...->acb...", gamma, h))
    return -np.einsum("ac...,acb...->b...", g.inverse, nab)


def divergence_one_form(beta, g, gamma):
    """``delta beta = -g^{ac} (nabla_a beta)_c``."""
    db = _grid.gradient(beta)
    nab = db - np.einsum("dac...,d...->ac...", gamma, beta)
    return -np.einsum("ac...,ac...->...", g.inverse, nab)


def lichnerowicz(f, base):
    """``L f = -2 delta delta (D d f)^{J,-}`` at a Kaehler structure.

    Equals ``-Delta^2 f`` on the flat base; with the nonnegative Laplacian
    convention the operator is nonpositive.
    """
    g = base.metric
    gamma = christoffels(g)
    if gamma.shape[-4:] != base.grid.shape:
        gamma = np.broadcast_to(gamma, gamma.shape[:3] + base.grid.shape)
    H = anti_invariant_tensor(hessian_tensor(f, g, gamma), base.J)
    return -2.0 * divergence_one_form(divergence_tensor(H, g, gamma), g, gamma)


def lichnerowicz_symbol(grid):
    """Symbol of L on the flat base, tabulated from its response to a point mass."""
    delta = grid.zeros()
    delta[0, 0, 0, 0] = 1.0
    delta = delta - delta.mean()
    response = lichnerowicz(delta, standard_structure(grid))
    num = _grid.fft(response)
    den = _grid.fft(delta)
    sym = np.zeros_like(num.real)
    mask = np.abs(den) > 1e-12
    sym[mask] = (num[mask] / den[mask]).real
    return sym


class LichnerowiczPreconditioner:
    """Mode-by-mode inverse of the flat-base symbol; zero and Nyquist modes dropped."""

    def __init__(self, grid):
        self.grid = grid
        sym = lichnerowicz_symbol(grid)
        inv = np.zeros_like(sym)
        ok = (np.abs(sym) > 1e-10) & (_grid.nyquist_mask(grid.n) > 0)
        inv[ok] = 1.0 / sym[ok]
        self.inverse_symbol = inv

    def __call__(self, r):
        return _grid.ifft(self.inverse_symbol * _grid.fft(r), self.grid.n)


# -- configuration and results ------------------------------------------------

@dataclass
class ContinuationConfig:
    t_max: float = 0.5
    steps: int = 10
    newton_tol: float = 1e-8
    max_newton_iters: int = 20
    fd_epsilon: float = 1e-5
    ker_tol: float = 1e-6
    n: int = 16
    gmres_rtol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be positive")
        if self.t_max / self.steps > 0.1 + 1e-12:
            raise ValueError("t_max / steps must not exceed 0.1")
        if self.newton_tol < 10 * np.finfo(float).eps * self.n ** 2:
            raise ValueError("newton_tol below the round-off floor 10 eps n^2")
        if self.fd_epsilon <= 0 or self.ker_tol <= 0:
            raise ValueError("fd_epsilon and ker_tol must be positive")

    def times(self):
        return [k * self.t_max / self.steps for k in range(self.steps + 1)]


@dataclass
class ContinuationResult:
    """Per-step columns plus the overall status.

    ``status`` is one of converged, kernel_jump, not_a_potential, diverged;
    ``violation_t`` is the step at which a kernel jump (or other failure)
    stopped the run.
    """

    t: list = field(default_factory=list)
    f_t: list = field(default_factory=list)
    residual_norm: list = field(default_factory=list)
    newton_iters: list = field(default_factory=list)
    h_minus: list = field(default_factory=list)
    gap: list = field(default_factory=list)
    killing_defect: list = field(default_factory=list)
    calabi_energy: list = field(default_factory=list)
    status: str = "converged"
    violation_t: float = None
    message: str = ""

    def append(self, t, f=None, residual_norm=None, newton_iters=None, h_minus=None, gap=None,
               killing_defect=None, calabi_energy=None):
        self.t.append(float(t))
        self.f_t.append(f)
        self.residual_norm.append(residual_norm)
        self.newton_iters.append(newton_iters)
        self.h_minus.append(h_minus)
        self.gap.append(gap)
        self.killing_defect.append(killing_defect)
        self.calabi_energy.append(calabi_energy)

    def to_json(self, f_names=None):
        out = asdict(self)
        out["f_t"] = list(f_names) if f_names is not None else [None] * len(self.t)
        return out


# -- Newton-Krylov ------------------------------------------------------------

def residual_norm(r):
    return float(_grid.l2_norm(r))


def resolved_residual(r):
    """Residual without its Nyquist content.

    Products of fields put energy on Nyquist modes that no dealiased
    potential can reach, so Newton drives and reports this part.
    """
    return _grid.dealias(r)


def _clean(f):
    return _grid.zero_mean_project(_grid.dealias(f))


class ResidualMap:
    """``f -> Psi(t, f)`` at a fixed context, with the last state kept."""

    def __init__(self, t, ctx, basis=None):
        self.t = t
        self.ctx = ctx
        self.basis = basis
        self.evaluations = 0

    def state(self, f):
        return build_state(self.t, f, self.ctx, check=False)

    def __call__(self, f):
        self.evaluations += 1
        return resolved_residual(residual_from_state(self.state(f), self.ctx, self.basis))


def newton_correct(t, f0, ctx, cfg, basis=None, precond=None):
    """Jacobian-free Newton-Krylov solve of ``Psi(t, f) = 0`` from ``f0``.

    Returns ``(f, residual_norm, iterations)``.
    """
    grid = ctx.grid
    if precond is None:
        precond = LichnerowiczPreconditioner(grid)
    Psi = ResidualMap(t, ctx, basis)
    f = _clean(f0)
    r = Psi(f)
    rn = residual_norm(r)
    size = grid.n ** 4
    shape = grid.shape
    for it in range(cfg.max_newton_iters + 1):
        if rn <= cfg.newton_tol:
            return f, rn, it
        if it == cfg.max_newton_iters:
            break
        fnorm = float(_grid.l2_norm(f))

        def jv(v, f=f):
            v = _clean(v.reshape(shape))
            vn = float(_grid.l2_norm(v))
            if vn == 0:
                return np.zeros(size)
            eps = cfg.fd_epsilon * max(1.0, fnorm) / vn
            diff = (Psi(f + eps * v) - Psi(f - eps * v)) / (2 * eps)
            return diff.reshape(size)

        A = LinearOperator((size, size), matvec=jv, dtype=float)
        M = LinearOperator((size, size), matvec=lambda v: _clean(precond(v.reshape(shape))).reshape(size),
                           dtype=float)
        b = -_clean(r).reshape(size)
        rtol = min(cfg.gmres_rtol, max(cfg.newton_tol / max(rn, 1e-300) * 0.1, 1e-10))
        delta, _ = gmres(A, b, M=M, rtol=rtol, atol=0.0, restart=30, maxiter=3)
        delta = _clean(delta.reshape(shape))
        step = 1.0
        for _ in range(11):
            trial = f + step * delta
            try:
                r_new = Psi(trial)
            except NotAPotential:
                step *= 0.5
                continue
            rn_new = residual_norm(r_new)
            if rn_new < rn or step < 1e-3:
                break
            step *= 0.5
        else:
            raise NotAPotential(f"line search left the admissible set at t = {t}")
        f, r, rn = trial, r_new, rn_new
    raise Diverged(f"Newton did not reach {cfg.newton_tol:g} in {cfg.max_newton_iters} iterations "
                   f"(residual {rn:.3e})")


# -- cross-checks -------------------------------------------------------------

def system_crosscheck(state, ctx):
    """Residuals of the pair ``s - g_f(rho_t, omega_f) = Delta^{g_f} u`` and ``e^u = omega_f^2/omega^2``.

    ``s`` here is the hermitian scalar of ``(J_t, omega_f)`` computed from its
    own connection, so (e1) is checked against an independent evaluation.
    The trace term carries the factor 2 of the ``g(omega, omega) = 2``
    normalisation.
    """
    from .curvature import top_coefficient
    from .forms import wedge

    Jf = state.deformed_structure()
    s_direct = hermitian_scalar_from_rho(hermitian_ricci(Jf), state.omega_f)
    rho_t = _rho_base(ctx)
    u = state.F
    e1 = s_direct - 2.0 * state.g_f.inner(rho_t, state.omega_f) - function_laplacian(u, state.g_f)
    omega = ctx.structure.omega
    ratio = top_coefficient(wedge(state.omega_f, state.omega_f)) / top_coefficient(wedge(omega, omega))
    e2 = np.exp(u) - ratio
    scale = max(1.0, float(np.max(np.abs(s_direct))))
    return {
        "e1_residual": float(np.max(np.abs(e1))) / scale,
        "e2_residual": float(np.max(np.abs(e2))),
    }


# -- continuation -------------------------------------------------------------

def _is_flat_base(Jc):
    return (Jc.constant and np.allclose(Jc.J.reshape(4, 4), J0, atol=1e-12)
            and np.allclose(Jc.W.reshape(4, 4), OMEGA0, atol=1e-12))


def continue_path(path, cfg, basis=None, on_step=None):
    """Follow extremal potentials along ``path`` from the flat base point."""
    grid = _grid.GridSpec(cfg.n)
    result = ContinuationResult()
    base = path_evaluate(path, 0.0, grid)
    if not _is_flat_base(base):
        raise StructureError("the path must start at the flat Kaehler structure")
    precond = LichnerowiczPreconditioner(grid)
    f = grid.zeros()
    h0 = None
    ctx = None
    for t in cfg.times():
        if t > path.t_max * (1 + 1e-12):
            result.status = "diverged"
            result.violation_t = t
            result.message = f"t = {t} lies beyond the path range"
            break
        try:
            Jc = path_evaluate(path, t, grid)
        except PathRangeError as exc:
            result.status = "not_a_potential"
            result.violation_t = t
            result.message = str(exc)
            break
        try:
            ctx = kernel_detect(Jc, tol=cfg.ker_tol, seed=cfg.seed, start=ctx)
        except AmbiguousKernel as exc:
            vals = np.asarray(exc.eigenvalues)
            above = vals[vals >= cfg.ker_tol]
            result.append(t, gap=float(above.min()) if len(above) else None)
            result.status = "kernel_jump"
            result.violation_t = t
            result.message = f"ambiguous kernel: {exc}"
            break
        if h0 is None:
            h0 = ctx.h_minus
        if ctx.h_minus != h0:
            result.append(t, h_minus=ctx.h_minus, gap=ctx.gap)
            result.status = "kernel_jump"
            result.violation_t = t
            result.message = f"h_minus changed from {h0} to {ctx.h_minus}"
            break
        try:
            f, rn, iters = newton_correct(t, f, ctx, cfg, basis=basis, precond=precond)
        except NotAPotential as exc:
            result.append(t, h_minus=ctx.h_minus, gap=ctx.gap)
            result.status = "not_a_potential"
            result.violation_t = t
            result.message = str(exc)
            break
        except Diverged as exc:
            result.append(t, h_minus=ctx.h_minus, gap=ctx.gap)
            result.status = "diverged"
            result.violation_t = t
            result.message = str(exc)
            break
        state = build_state(t, f, ctx, check=False)
        diag = extremal_diagnostics(state, ctx, basis)
        result.append(t, f=f, residual_norm=rn, newton_iters=iters, h_minus=ctx.h_minus,
                      gap=ctx.gap, killing_defect=diag["killing_defect"],
                      calabi_energy=diag["calabi_energy"])
        if on_step is not None:
            on_step(t, state, ctx)
    return result
