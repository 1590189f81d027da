"""Periodic 4-grid on the flat torus R^4/(2 pi Z)^4 with Fourier differentiation.

Fields are plain numpy arrays whose last four axes are the grid axes
``(i1, i2, i3, i4)``; any leading axes are component/batch axes and are carried
through every operation untouched.
"""
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .errors import InvalidDensity, InvalidField

AXES = (-4, -3, -2, -1)
TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid with ``n`` points per axis and period 2 pi."""

    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or self.n < 8 or self.n % 2:
            raise ValueError(f"grid size must be an even integer >= 8, got {self.n!r}")

    @property
    def shape(self):
        return (self.n,) * 4

    @property
    def spacing(self):
        return TWO_PI / self.n

    @property
    def cell_volume(self):
        return self.spacing ** 4

    @property
    def volume(self):
        return TWO_PI ** 4

    def coords(self):
        """Coordinate arrays ``x1..x4`` each of shape ``(n, n, n, n)``."""
        x = np.arange(self.n) * self.spacing
        return np.meshgrid(x, x, x, x, indexing="ij")

    def zeros(self, *lead):
        return np.zeros(tuple(lead) + self.shape)

    def ones(self):
        return np.ones(self.shape)

    def random_field(self, rng, kmax=2, amplitude=1.0):
        """Random real band-limited field with modes ``|k_a| <= kmax``."""
        return random_bandlimited(self, rng, kmax=kmax, amplitude=amplitude)


def grid_of(field):
    """Recover the GridSpec from an array's trailing shape."""
    shape = np.shape(field)[-4:]
    if len(shape) != 4 or len(set(shape)) != 1:
        raise InvalidField(f"array of shape {np.shape(field)} is not a grid field")
    return GridSpec(int(shape[0]))


@lru_cache(maxsize=8)
def wavenumbers(n, derivative=True):
    """Broadcastable integer wavenumbers for the rfftn layout.

    With ``derivative=True`` the Nyquist entry is zeroed, which is the
    convention for odd derivatives of real data.
    """
    full = np.fft.fftfreq(n, d=1.0 / n)
    half = np.fft.rfftfreq(n, d=1.0 / n)
    if derivative:
        full = full.copy()
        half = half.copy()
        full[n // 2] = 0.0
        half[-1] = 0.0
    out = []
    for a in range(4):
        k = half if a == 3 else full
        shape = [1, 1, 1, 1]
        shape[a] = k.size
        out.append(k.reshape(shape))
    return tuple(out)


@lru_cache(maxsize=8)
def wavenumber_squared(n):
    """``|k|^2`` on the rfftn layout, Nyquist kept (used for even-order symbols)."""
    ks = wavenumbers(n, derivative=False)
    return sum(k * k for k in ks)


@lru_cache(maxsize=8)
def nyquist_mask(n):
    """1 on resolved modes, 0 where any wavenumber sits at the Nyquist frequency."""
    ks = wavenumbers(n, derivative=False)
    mask = np.ones(tuple(k.size for k in ks[:3]) + (ks[3].size,))
    for a, k in enumerate(ks):
        mask = mask * (np.abs(k) != n // 2)
    return mask


def dealias(field):
    """Remove the Nyquist content that spectral derivatives cannot see."""
    n = field.shape[-1]
    return ifft(nyquist_mask(n) * fft(field), n)


def fft(field):
    return sfft.rfftn(field, axes=AXES)


def ifft(hat, n):
    return sfft.irfftn(hat, s=(n,) * 4, axes=AXES)


def check_finite(field):
    if not np.all(np.isfinite(field)):
        raise InvalidField("field contains non-finite values")


def spectral_derivative(field, axis):
    """Derivative of ``field`` along ``axis`` (1..4)."""
    if axis not in (1, 2, 3, 4):
        raise ValueError(f"axis must be in 1..4, got {axis}")
    field = np.asarray(field, dtype=float)
    check_finite(field)
    return derivative(field, axis - 1)


def derivative(field, a):
    """Derivative along the 0-based axis ``a`` without validation."""
    n = field.shape[-1]
    k = wavenumbers(n)[a]
    return ifft(1j * k * fft(field), n)


def gradient(field):
    """All four partial derivatives, stacked on a new leading axis."""
    n = field.shape[-1]
    hat = fft(field)
    return np.stack([ifft(1j * k * hat, n) for k in wavenumbers(n)])


def _check_density(density):
    density = np.asarray(density, dtype=float)
    if not np.all(density > 0):
        raise InvalidDensity("density must be strictly positive")
    return density


def integrate(field, density=None):
    """Trapezoidal (spectrally exact) integral of ``field * density``."""
    field = np.asarray(field, dtype=float)
    grid = grid_of(field)
    if density is None:
        return grid.cell_volume * float(np.sum(field))
    density = _check_density(density)
    return grid.cell_volume * float(np.sum(field * density))


def mean(field, density=None):
    one = np.ones(np.shape(field)[-4:])
    return integrate(field, density) / integrate(one, density)


def zero_mean_project(field, density=None):
    """Subtract the ``density``-weighted mean of ``field``."""
    return np.asarray(field, dtype=float) - mean(field, density)


def is_zero_mean(field, density=None):
    scale = max(1.0, float(np.max(np.abs(field))))
    return abs(mean(field, density)) <= 1e-12 * scale


def l2_norm(field, density=None):
    """``sqrt(int field^2 density)``, summed over any leading component axes."""
    field = np.asarray(field, dtype=float)
    sq = np.sum(field * field, axis=tuple(range(field.ndim - 4)))
    return np.sqrt(integrate(sq, density))


def random_bandlimited(grid, rng, kmax=2, amplitude=1.0):
    """Real field with random Fourier coefficients on modes ``|k_a| <= kmax``."""
    n = grid.n
    hat = np.zeros((n, n, n, n // 2 + 1), dtype=complex)
    span = np.arange(-kmax, kmax + 1) % n
    shape = (len(span),) * 3 + (kmax + 1,)
    coef = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    hat[np.ix_(span, span, span, np.arange(kmax + 1))] = coef
    field = ifft(hat, n)
    return amplitude * field / np.max(np.abs(field))
