"""Compatible almost-complex structures, deformation paths and their metrics.

An endomorphism field ``J`` is stored as an array ``J[c, a, ...]`` holding the
``c``-th coordinate of ``J e_a``.  Constant structures keep singleton grid
axes and broadcast against full fields.
"""
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import akf4
from . import grid as _grid
from .errors import DegenerateStructure, MetricError, PathRangeError, StructureError
from .forms import MetricField, check_almost_complex, field_matmul, standard_omega, to_matrix

J0 = np.array(
    [[0.0, -1.0, 0.0, 0.0],
     [1.0, 0.0, 0.0, 0.0],
     [0.0, 0.0, 0.0, -1.0],
     [0.0, 0.0, 1.0, 0.0]]
)
OMEGA0 = np.array(
    [[0.0, 1.0, 0.0, 0.0],
     [-1.0, 0.0, 0.0, 0.0],
     [0.0, 0.0, 0.0, 1.0],
     [0.0, 0.0, -1.0, 0.0]]
)
_SINGLETON = (1, 1, 1, 1)


def _const(m):
    return np.asarray(m, dtype=float).reshape(np.shape(m)[:2] + _SINGLETON)


def _last(m):
    return np.moveaxis(m, (0, 1), (-2, -1))


def _first(m):
    return np.moveaxis(m, (-2, -1), (0, 1))


def is_constant(arr):
    return np.shape(arr)[-4:] == _SINGLETON


def metric_from(J, W):
    """``g_{ab} = omega(e_a, J e_b)``."""
    return field_matmul(W, J)


class CompatibleStructure:
    """Almost-complex ``J`` compatible with a symplectic form.

    ``omega`` defaults to the standard ``dx1^dx2 + dx3^dx4``; the deformed
    structures ``(J_t, omega_{t,f})`` pass their own closed form instead.
    """

    def __init__(self, J, grid, omega=None, check=True, tol=1e-10):
        self.J = np.asarray(J, dtype=float)
        self.grid = grid
        if omega is None:
            self.omega_is_standard = True
            self.W = _const(OMEGA0)
        else:
            self.omega_is_standard = False
            self.W = to_matrix(omega)
        self._omega = omega
        if check:
            self.validate(tol)

    @property
    def omega(self):
        if self._omega is None:
            self._omega = standard_omega(self.grid)
        return self._omega

    @property
    def constant(self):
        return is_constant(self.J) and is_constant(self.W)

    @cached_property
    def metric(self):
        return MetricField(metric_from(self.J, self.W), check=False)

    def full_J(self):
        return np.broadcast_to(self.J, (4, 4) + self.grid.shape)

    def validate(self, tol=1e-10):
        check_almost_complex(self.J, tol)
        inv = np.einsum("ca...,cd...,db...->ab...", self.J, self.W, self.J)
        err = float(np.max(np.abs(inv - self.W)))
        scale = max(1.0, float(np.max(np.abs(self.W))))
        if err > tol * scale:
            raise StructureError(f"omega(J., J.) != omega, defect {err:.3e}")
        try:
            self.metric.validate()
        except MetricError as exc:
            raise StructureError(f"induced metric not Riemannian: {exc}") from exc

    def compatibility_residuals(self):
        sq = np.einsum("ab...,bc...->ac...", self.J, self.J)
        eye = _const(np.eye(4))
        inv = np.einsum("ca...,cd...,db...->ab...", self.J, self.W, self.J)
        g = self.metric.g
        return {
            "j_squared": float(np.max(np.abs(sq + eye))),
            "omega_invariance": float(np.max(np.abs(inv - self.W))),
            "metric_asymmetry": float(np.max(np.abs(g - np.swapaxes(g, 0, 1)))),
        }


def standard_structure(grid):
    """Flat Kaehler structure ``J0 e1 = e2, J0 e3 = e4``; induced metric Id."""
    return CompatibleStructure(_const(J0), grid)


def _sym_sqrt_pair(H):
    w, v = np.linalg.eigh(H)
    if not np.all(w > 0):
        raise MetricError("metric not positive definite")
    sq = np.einsum("...ij,...j,...kj->...ik", v, np.sqrt(w), v)
    isq = np.einsum("...ij,...j,...kj->...ik", v, 1.0 / np.sqrt(w), v)
    return sq, isq


def polar_compatible(h, grid, omega=None):
    """Retract a Riemannian metric ``h`` onto an ``omega``-compatible ``J``.

    With ``omega(X, Y) = h(AX, Y)`` the structure is ``J = A (-A^2)^{-1/2}``;
    the square root is taken in an ``h``-orthonormal frame where ``A`` is
    skew-symmetric.
    """
    g = h.g if isinstance(h, MetricField) else np.asarray(h, dtype=float)
    W = _const(OMEGA0) if omega is None else to_matrix(omega)
    shape = np.broadcast_shapes(g.shape, W.shape)
    Hl = _last(np.broadcast_to(g, shape))
    Wl = _last(np.broadcast_to(W, shape))
    Hl = 0.5 * (Hl + np.swapaxes(Hl, -1, -2))
    sq, isq = _sym_sqrt_pair(Hl)
    B = -isq @ Wl @ isq
    w, v = np.linalg.eigh(-(B @ B))
    if np.any(w <= 0) or np.max(w.max(axis=-1) / w.min(axis=-1)) > 1e12:
        raise DegenerateStructure("-A^2 is ill-conditioned")
    Q = np.einsum("...ij,...j,...kj->...ik", v, 1.0 / np.sqrt(w), v)
    J = _first(isq @ (B @ Q) @ sq)
    return CompatibleStructure(J, grid, omega=omega)


def nijenhuis_tensor(J):
    """``N^c_{ab}`` of ``N(e_a, e_b) = [Je_a, Je_b] - J[Je_a, e_b] - J[e_a, Je_b] - [e_a, e_b]``."""
    if is_constant(J):
        return np.zeros((4, 4, 4) + _SINGLETON)
    dJ = _grid.gradient(J)  # dJ[d, c, a] = d_d J^c_a
    t1 = np.einsum("da...,dcb...->cab...", J, dJ)
    t2 = np.einsum("ce...,bea...->cab...", J, dJ)
    N = t1 - np.swapaxes(t1, 1, 2) + t2 - np.swapaxes(t2, 1, 2)
    return N


def nijenhuis_norm(Jc):
    return float(np.max(np.abs(nijenhuis_tensor(Jc.J))))


# -- deformation paths --------------------------------------------------------

_FUNCS = {"sin": np.sin, "cos": np.cos}


def _expression_field(entries, grid):
    x = grid.coords()
    S = np.zeros((4, 4) + grid.shape)
    for entry in entries:
        i, j = int(entry["i"]) - 1, int(entry["j"]) - 1
        term = float(entry.get("amp", 1.0)) * np.ones(grid.shape)
        for fac in entry.get("factors", []):
            fn = _FUNCS[fac["fn"]]
            term = term * fn(int(fac.get("freq", 1)) * x[int(fac["axis"]) - 1])
        S[i, j] += term
        if i != j:
            S[j, i] += term
    return S


@dataclass
class DeformationPath:
    """Family ``t -> J_t`` built from metrics ``h_t`` and retracted by polar decomposition.

    kind:
      * ``constant_linear``: ``h_t = Id + t S`` with a constant symmetric 4x4 ``S``
      * ``bump_metric``: ``h_t = Id + t S(x)``; ``S`` is a list of entries
        ``{"i", "j", "amp", "factors": [{"fn": "sin"|"cos", "axis", "freq"}]}``
        (1-based indices, off-diagonal entries are mirrored)
      * ``user_file``: ``h_t = (1 - t) Id + t g(J_1)`` with ``J_1`` read from an
        AKF4 file with 16 components (component ``4 i + j`` is ``J[i][j]``)
    """

    kind: str
    S: object = None
    t_max: float = 0.5
    samples: int = 11
    file: str = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("constant_linear", "bump_metric", "user_file"):
            raise ValueError(f"unknown path kind {self.kind!r}")
        if self.kind == "user_file" and self.t_max > 1:
            raise ValueError("user_file paths interpolate on [0, 1]")

    @classmethod
    def from_config(cls, cfg):
        return cls(
            kind=cfg["kind"],
            S=cfg.get("S"),
            t_max=float(cfg.get("t_max", 0.5)),
            samples=int(cfg.get("samples", 11)),
            file=cfg.get("file"),
        )

    def direction(self, grid):
        """The metric velocity ``S = dh/dt`` as a ``(4, 4, ...)`` array."""
        key = ("S", grid.n)
        if key not in self._cache:
            if self.kind == "constant_linear":
                S = np.asarray(self.S, dtype=float)
                if S.shape != (4, 4) or np.max(np.abs(S - S.T)) > 1e-14:
                    raise ValueError("constant_linear S must be a symmetric 4x4 matrix")
                S = _const(S)
            elif self.kind == "bump_metric":
                S = _expression_field(self.S, grid)
            else:
                data, _ = akf4.read_field(self.file)
                if data.shape[0] != 16 or data.shape[1] != grid.n:
                    raise ValueError("user_file J must have 16 components on the working grid")
                J1 = CompatibleStructure(data.reshape((4, 4) + grid.shape), grid)
                S = J1.metric.g - _const(np.eye(4))
            self._cache[key] = S
        return self._cache[key]

    def metric_at(self, t, grid):
        return _const(np.eye(4)) + t * self.direction(grid)

    def sample_times(self):
        return np.linspace(0.0, self.t_max, self.samples)


def path_evaluate(path, t, grid):
    if abs(t) > path.t_max * (1 + 1e-12):
        raise PathRangeError(f"|t| = {abs(t)} exceeds t_max = {path.t_max}")
    h = path.metric_at(t, grid)
    w = np.linalg.eigvalsh(_last(h))
    if not np.all(w > 0):
        raise PathRangeError(f"h_t loses positivity at t = {t}")
    if t == 0:
        return standard_structure(grid)
    return polar_compatible(MetricField(h, check=False), grid)
