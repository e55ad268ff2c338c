"""Periodic grids, spectral field containers and Fourier-side operators.

Conventions used throughout the package:

* The domain is the torus ``[0, L)^d`` sampled on ``N^d`` points.
* ``transform_forward`` carries the ``1/N^d`` factor, so a constant field
  ``c`` has coefficient ``c`` at ``n = 0`` and ``cos(2 pi x_1 / L)`` has
  amplitude ``1/2`` at ``n = (+-1, 0, ...)``.
* Norms are absolute over the box: ``||f||_{L^2}^2 = L^d sum_n |f_n|^2``.
* Velocity gradient: ``(grad u)_{ij} = d_i u_j`` (row index = derivative).
* Nyquist modes (``|n_i| = N/2``) are always zero.
* Symmetric tensors are stored as their upper triangle in row-major order,
  e.g. ``(00, 01, 11)`` for ``d = 2``.  Frobenius products weight the
  off-diagonal entries by 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import ClassVar

import numpy as np
import scipy.fft as sfft

_WORKERS = 1


def set_fft_workers(n: int) -> None:
    """Set the number of threads used by every FFT in the package."""
    global _WORKERS
    _WORKERS = max(1, int(n))


def fft_workers() -> int:
    return _WORKERS


class GridMismatchError(ValueError):
    pass


def sym_index_pairs(d: int) -> list[tuple[int, int]]:
    """Upper-triangle (i, j) pairs in storage order."""
    return [(i, j) for i in range(d) for j in range(i, d)]


def sym_weights(d: int) -> np.ndarray:
    """Frobenius weights of the packed symmetric components."""
    return np.array([1.0 if i == j else 2.0 for i, j in sym_index_pairs(d)])


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on ``[0, L)^d`` with ``N`` points per axis."""

    d: int
    N: int
    L: float = 2 * np.pi

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError(f"d must be 2 or 3, got {self.d}")
        if self.N < 8 or self.N % 2:
            raise ValueError(f"N must be even and >= 8, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.d, 0))

    @property
    def volume(self) -> float:
        return float(self.L) ** self.d

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def k0(self) -> float:
        """Lattice spacing in wavenumber space, ``2 pi / L``."""
        return 2 * np.pi / self.L

    @cached_property
    def n_int(self) -> np.ndarray:
        """Integer wavevectors, shape ``(d, N, ..., N)`` in FFT ordering."""
        n1 = np.fft.fftfreq(self.N, 1.0 / self.N).round().astype(int)
        return np.array(np.meshgrid(*([n1] * self.d), indexing="ij"))

    @cached_property
    def xi(self) -> np.ndarray:
        """Physical wavevectors ``xi = (2 pi / L) n``, shape ``(d, N, ..., N)``."""
        return self.k0 * self.n_int.astype(float)

    @cached_property
    def xi2(self) -> np.ndarray:
        return np.sum(self.xi**2, axis=0)

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(self.xi2)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes kept by the grid (no Nyquist component)."""
        return np.all(np.abs(self.n_int) < self.N // 2, axis=0)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """2/3 rule: keep modes with every ``|n_i| <= N/3``."""
        return np.all(3 * np.abs(self.n_int) <= self.N, axis=0)

    @cached_property
    def xi_max(self) -> float:
        return float(self.xi_abs[self.nyquist_mask].max())

    def coordinates(self) -> np.ndarray:
        x1 = np.arange(self.N) * self.dx
        return np.array(np.meshgrid(*([x1] * self.d), indexing="ij"))


def reflect(a: np.ndarray, d: int) -> np.ndarray:
    """Map coefficient arrays ``c(n) -> c(-n)`` over the last ``d`` axes."""
    axes = tuple(range(a.ndim - d, a.ndim))
    return np.roll(np.flip(a, axis=axes), 1, axis=axes)


@dataclass(eq=False)
class SpectralField:
    """Fourier coefficients of a real field, shape ``(ncomp, N, ..., N)``."""

    grid: Grid
    coeffs: np.ndarray
    kind: ClassVar[str] = "field"

    @classmethod
    def ncomp(cls, d: int) -> int:
        raise NotImplementedError

    @classmethod
    def weights(cls, d: int) -> np.ndarray:
        return np.ones(cls.ncomp(d))

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        expected = (self.ncomp(self.grid.d),) + self.grid.shape
        if c.shape != expected:
            raise ValueError(f"{type(self).__name__} expects coefficients of shape {expected}, got {c.shape}")
        self.coeffs = c

    @classmethod
    def zeros(cls, grid: Grid):
        return cls(grid, np.zeros((cls.ncomp(grid.d),) + grid.shape, dtype=complex))

    @property
    def component_weights(self) -> np.ndarray:
        return self.weights(self.grid.d)

    def copy(self):
        return type(self)(self.grid, self.coeffs.copy())

    def with_coeffs(self, coeffs: np.ndarray):
        return type(self)(self.grid, coeffs)

    def _check(self, other: "SpectralField"):
        if other.grid != self.grid:
            raise GridMismatchError("fields live on different grids")
        if type(other) is not type(self):
            raise TypeError(f"cannot combine {type(self).__name__} with {type(other).__name__}")

    def __add__(self, other):
        self._check(other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, c: float):
        return self.with_coeffs(self.coeffs * c)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def mean(self) -> np.ndarray:
        """Zero-mode coefficient of every component."""
        return self.coeffs[(slice(None),) + (0,) * self.grid.d].copy()

    def coeff_norm(self) -> float:
        """Euclidean norm of the (Frobenius-weighted) coefficient array."""
        w = self.component_weights.reshape((-1,) + (1,) * self.grid.d)
        return float(np.sqrt(np.sum(w * np.abs(self.coeffs) ** 2)))

    def hermitian_defect(self) -> float:
        """``max |c(-n) - conj c(n)| / max |c|`` (0 for an exactly real field)."""
        scale = np.abs(self.coeffs).max()
        if scale == 0:
            return 0.0
        diff = reflect(self.coeffs, self.grid.d) - np.conj(self.coeffs)
        return float(np.abs(diff).max() / scale)


class ScalarField(SpectralField):
    kind = "scalar"

    @classmethod
    def ncomp(cls, d):
        return 1


class VectorField(SpectralField):
    kind = "vector"

    @classmethod
    def ncomp(cls, d):
        return d

    def divergence_defect(self) -> float:
        """``max |xi . u| / max |xi| |u|`` over the lattice."""
        g = self.grid
        num = np.abs(np.einsum("i...,i...->...", g.xi, self.coeffs)).max()
        den = (g.xi_abs * np.sqrt(np.sum(np.abs(self.coeffs) ** 2, axis=0))).max()
        return float(num / den) if den > 0 else 0.0

    def is_divergence_free(self, tol: float = 1e-10) -> bool:
        return self.divergence_defect() <= tol


class SymTensorField(SpectralField):
    kind = "symtensor"

    @classmethod
    def ncomp(cls, d):
        return d * (d + 1) // 2

    @classmethod
    def weights(cls, d):
        return sym_weights(d)

    def full(self) -> np.ndarray:
        """Coefficients as a full ``(d, d, ...)`` array."""
        return unpack_sym(self.coeffs, self.grid.d)

    @classmethod
    def from_full(cls, grid: Grid, full: np.ndarray, symmetrize: bool = True):
        if symmetrize:
            full = 0.5 * (full + np.swapaxes(full, 0, 1))
        return cls(grid, pack_sym(full, grid.d))


class TensorField(SpectralField):
    """General ``d x d`` tensor, components stored row-major (``i*d + j``)."""

    kind = "tensor"

    @classmethod
    def ncomp(cls, d):
        return d * d

    def full(self) -> np.ndarray:
        d = self.grid.d
        return self.coeffs.reshape((d, d) + self.grid.shape)

    @classmethod
    def from_full(cls, grid: Grid, full: np.ndarray):
        d = grid.d
        return cls(grid, np.asarray(full).reshape((d * d,) + grid.shape))


_KINDS = {c.kind: c for c in (ScalarField, VectorField, SymTensorField, TensorField)}


def field_class(kind: str) -> type[SpectralField]:
    try:
        return _KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown field kind {kind!r}") from None


def pack_sym(full: np.ndarray, d: int) -> np.ndarray:
    return np.array([full[i, j] for i, j in sym_index_pairs(d)])


def unpack_sym(packed: np.ndarray, d: int) -> np.ndarray:
    out = np.empty((d, d) + packed.shape[1:], dtype=packed.dtype)
    for c, (i, j) in enumerate(sym_index_pairs(d)):
        out[i, j] = packed[c]
        out[j, i] = packed[c]
    return out


# ---------------------------------------------------------------- transforms


def transform_forward(samples: np.ndarray, grid: Grid, kind: str = "scalar", keep_nyquist: bool = False):
    """Physical samples ``(ncomp, N, ..., N)`` to a spectral field.

    A scalar may also be passed without the leading component axis.
    """
    cls = field_class(kind)
    a = np.asarray(samples)
    if kind == "scalar" and a.shape == grid.shape:
        a = a[None]
    expected = (cls.ncomp(grid.d),) + grid.shape
    if a.shape != expected:
        raise ValueError(f"sample array has shape {a.shape}, grid {grid} expects {expected}")
    c = sfft.fftn(a, axes=grid.axes, workers=_WORKERS) / grid.N**grid.d
    if not keep_nyquist:
        c *= grid.nyquist_mask
    return cls(grid, c)


def transform_inverse(f: SpectralField) -> np.ndarray:
    """Real physical samples of ``f``, shape ``(ncomp, N, ..., N)``."""
    g = f.grid
    return sfft.ifftn(f.coeffs * g.N**g.d, axes=g.axes, workers=_WORKERS).real


# ------------------------------------------------------------------ operators


def lambda_power(f: SpectralField, s: float) -> SpectralField:
    """Apply ``Lambda^s = (-Delta)^{s/2}``; the zero mode goes to 0 for ``s != 0``."""
    if s == 0:
        return f.copy()
    g = f.grid
    m0 = np.abs(f.mean()).max()
    if s < 0 and m0 > 1e-12 * max(f.coeff_norm(), np.finfo(float).tiny):
        raise ValueError("negative-order operator on non-mean-zero field")
    mult = np.zeros(g.shape)
    nz = g.xi_abs > 0
    mult[nz] = g.xi_abs[nz] ** s
    return f.with_coeffs(f.coeffs * mult)


def _same_grid(*fields):
    g = fields[0].grid
    for f in fields[1:]:
        if f.grid != g:
            raise GridMismatchError("fields live on different grids")
    return g


def gradient(f: SpectralField):
    """Gradient of a scalar (-> vector) or of a vector (-> full tensor ``d_i u_j``)."""
    g = f.grid
    ik = 1j * g.xi
    if isinstance(f, ScalarField):
        return VectorField(g, ik * f.coeffs[0])
    if isinstance(f, VectorField):
        full = ik[:, None] * f.coeffs[None, :]
        return TensorField.from_full(g, full)
    raise TypeError(f"gradient not defined for {type(f).__name__}")


def divergence(f: SpectralField):
    """``div v`` for a vector, ``(div tau)_j = d_i tau_ij`` for a tensor."""
    g = f.grid
    ik = 1j * g.xi
    if isinstance(f, VectorField):
        return ScalarField(g, np.sum(ik * f.coeffs, axis=0)[None])
    if isinstance(f, (SymTensorField, TensorField)):
        full = f.full()
        return VectorField(g, np.einsum("i...,ij...->j...", ik, full))
    raise TypeError(f"divergence not defined for {type(f).__name__}")


def velocity_gradient(u: VectorField) -> np.ndarray:
    """Full ``(d, d, ...)`` coefficient array of ``d_i u_j``.

    The index order is a convention: with ``G[i, j] = d_i u_j`` the strain is
    ``(G + G^T)/2`` and the rotation ``(G - G^T)/2``.  ``Q`` depends on it
    when ``b != 0``.
    """
    return gradient(u).full()


def deformation_D(u: VectorField) -> SymTensorField:
    G = velocity_gradient(u)
    return SymTensorField.from_full(u.grid, G)


def vorticity_Omega(u: VectorField) -> TensorField:
    G = velocity_gradient(u)
    return TensorField.from_full(u.grid, 0.5 * (G - np.swapaxes(G, 0, 1)))


def leray_project(v: VectorField) -> VectorField:
    """``v - xi (xi . v) / |xi|^2``; the mean is left untouched."""
    g = v.grid
    xi2 = np.where(g.xi2 > 0, g.xi2, 1.0)
    proj = np.einsum("i...,i...->...", g.xi, v.coeffs) / xi2
    return VectorField(g, v.coeffs - g.xi * proj)


def dealias(f: SpectralField) -> SpectralField:
    return f.with_coeffs(f.coeffs * f.grid.dealias_mask)


def multiply_physical(f: SpectralField, g_: SpectralField) -> SpectralField:
    """Dealiased pointwise product; one factor must be scalar.

    The result has the kind of the non-scalar factor.
    """
    grid = _same_grid(f, g_)
    if not isinstance(f, ScalarField):
        f, g_ = g_, f
    if not isinstance(f, ScalarField):
        raise TypeError("multiply_physical needs at least one scalar factor")
    a = transform_inverse(dealias(f))
    b = transform_inverse(dealias(g_))
    prod = transform_forward(a * b, grid, kind=g_.kind)
    return dealias(prod)


# ---------------------------------------------------------------------- norms


def lp_norm(f: SpectralField, p: float) -> float:
    """``L^p`` norm over the box from physical samples.

    Each component's ``L^p`` norm is computed with quadrature weight
    ``(L/N)^d``; components are then combined in the Frobenius sense
    (weighted l^2), which coincides with Parseval at ``p = 2``.
    """
    p = float(p)
    if not (p >= 1):
        raise ValueError(f"invalid exponent p={p}; need p in [1, inf]")
    samples = transform_inverse(f)
    per = _lp_components(samples, p, f.grid)
    return float(np.sqrt(np.sum(f.component_weights * per**2)))


def _lp_components(samples: np.ndarray, p: float, grid: Grid) -> np.ndarray:
    flat = np.abs(samples.reshape(samples.shape[0], -1))
    if np.isinf(p):
        return flat.max(axis=1)
    w = grid.dx**grid.d
    m = flat.max(axis=1, keepdims=True)
    m[m == 0] = 1.0
    # scaled to avoid overflow for large p
    return m[:, 0] * (w * np.sum((flat / m) ** p, axis=1)) ** (1.0 / p)


def inner_product(f: SpectralField, g_: SpectralField) -> float:
    """``int f . g`` over the box by physical quadrature."""
    grid = _same_grid(f, g_)
    if f.kind != g_.kind:
        raise TypeError("inner product needs fields of the same kind")
    a = transform_inverse(f)
    b = transform_inverse(g_)
    w = f.component_weights.reshape((-1,) + (1,) * grid.d)
    return float(np.sum(w * a * b) * grid.dx**grid.d)


def inner_product_spectral(f: SpectralField, g_: SpectralField) -> float:
    """Parseval form of :func:`inner_product`."""
    grid = _same_grid(f, g_)
    w = f.component_weights.reshape((-1,) + (1,) * grid.d)
    return float(np.real(np.sum(w * np.conj(f.coeffs) * g_.coeffs)) * grid.volume)


def l2_norm_spectral(f: SpectralField) -> float:
    return np.sqrt(f.grid.volume) * f.coeff_norm()


def hermitian_symmetrize(f: SpectralField) -> SpectralField:
    c = 0.5 * (f.coeffs + np.conj(reflect(f.coeffs, f.grid.d)))
    return f.with_coeffs(c)


def random_field(
    grid: Grid,
    kind: str,
    rng: np.random.Generator,
    amplitude,
    n_max: int | None = None,
) -> SpectralField:
    """Random-phase real field with ``|c(n)| = amplitude(|xi(n)|)`` per component.

    Random numbers are drawn on the integer cube ``|n_i| <= n_max`` in a
    fixed order, so the low-mode coefficients do not depend on ``N`` as
    long as the cube fits in the grid.  ``amplitude`` receives ``|xi|`` and
    must return 0 at the origin for a mean-zero field.
    """
    d = grid.d
    cls = field_class(kind)
    nc = cls.ncomp(d)
    half = grid.N // 2 - 1
    if n_max is None:
        n_max = half
    m = int(n_max)
    side = 2 * m + 1
    z = rng.standard_normal((nc,) + (side,) * d) + 1j * rng.standard_normal((nc,) + (side,) * d)
    # z(n) + conj z(-n): Hermitian on the cube (index m is n = 0)
    w = z + np.conj(np.flip(z, axis=tuple(range(1, d + 1))))
    n1 = np.arange(-m, m + 1)
    nn = np.array(np.meshgrid(*([n1] * d), indexing="ij"))
    rad = grid.k0 * np.sqrt(np.sum(nn.astype(float) ** 2, axis=0))
    amp = np.asarray(amplitude(rad), dtype=float)
    mag = np.abs(w)
    mag[mag == 0] = 1.0
    cube = w / mag * amp
    keep = min(m, half)
    sl = (slice(None),) + (slice(m - keep, m + keep + 1),) * d
    cube = cube[sl]
    out = np.zeros((nc,) + grid.shape, dtype=complex)
    idx = np.arange(-keep, keep + 1) % grid.N
    out[(slice(None),) + np.ix_(*([idx] * d))] = cube
    return cls(grid, out * grid.nyquist_mask)
