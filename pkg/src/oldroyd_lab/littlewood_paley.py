"""Homogeneous Littlewood-Paley blocks and the Besov / Sobolev norms built on them.

The radial profile is ``psi(r) = chi(r) - chi(2 r)`` where ``chi`` equals 1
on ``[0, 1]``, 0 on ``[2, inf)`` and interpolates with the C^infinity step
built from ``exp(-1/x)``.  The dyadic sum therefore telescopes and equals
1 on every covered nonzero frequency up to rounding.

Shell ``j`` carries the multiplier ``psi(2^-j |xi|)``, supported in
``2^(j-1) <= |xi| <= 2^(j+1)``.  Shell sums run over ``[j_min, j_max]``,
which covers every nonzero lattice mode; for band-limited fields this
truncation of the infinite dyadic sum is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .grid_spectral import Grid, SpectralField, _lp_components, transform_inverse


def _h(x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def smooth_step(t):
    """C^infinity step: 0 for ``t <= 0``, 1 for ``t >= 1``."""
    t = np.asarray(t, dtype=float)
    a = _h(t)
    return a / (a + _h(1.0 - t))


def chi(r):
    """Low-pass cutoff: 1 on ``[0, 1]``, 0 on ``[2, inf)``."""
    return 1.0 - smooth_step(np.asarray(r, dtype=float) - 1.0)


def psi(r):
    """Dyadic annulus profile supported in ``[1/2, 2]``."""
    r = np.asarray(r, dtype=float)
    return chi(r) - chi(2.0 * r)


@dataclass(frozen=True)
class NormSpec:
    kind: str
    s: float
    p: float = 2.0
    r: float = 1.0

    def __post_init__(self):
        if self.kind not in ("besov", "sobolev"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if self.kind == "besov":
            _check_exponent("p", self.p)
            _check_exponent("r", self.r)

    def label(self) -> str:
        if self.kind == "sobolev":
            return f"H{self.s:g}"
        return f"B{self.s:g}_{_fmt_exp(self.p)}{_fmt_exp(self.r)}"


def _fmt_exp(p):
    return "inf" if np.isinf(p) else f"{p:g}"


def _check_exponent(name, p):
    if not (float(p) >= 1):
        raise ValueError(f"invalid exponent {name}={p}; need {name} in [1, inf]")


@dataclass
class DyadicPartition:
    """Per-shell multiplier tables ``Phi_j(xi) = profile(2^-j |xi|)`` on a grid."""

    grid: Grid
    j_min: int
    j_max: int
    tables: dict[int, np.ndarray] = field(repr=False)
    profile: Callable = field(default=psi, repr=False)

    @property
    def shells(self) -> range:
        return range(self.j_min, self.j_max + 1)

    def multiplier(self, j: int) -> np.ndarray:
        t = self.tables.get(j)
        return np.zeros(self.grid.shape) if t is None else t

    def total(self) -> np.ndarray:
        return sum(self.tables.values())

    def unity_residual(self) -> float:
        """``max |sum_j Phi_j - 1|`` over nonzero, non-Nyquist lattice modes."""
        g = self.grid
        mask = g.nyquist_mask & (g.xi_abs > 0)
        return float(np.abs(self.total()[mask] - 1.0).max())


def shell_range(grid: Grid) -> tuple[int, int]:
    j_min = int(np.floor(np.log2(grid.k0))) - 1
    j_max = int(np.ceil(np.log2(grid.xi_max))) + 1
    return j_min, j_max


def build_partition(grid: Grid, profile: Callable = psi) -> DyadicPartition:
    j_min, j_max = shell_range(grid)
    r = grid.xi_abs
    tables = {}
    for j in range(j_min, j_max + 1):
        t = np.asarray(profile(r * 2.0**-j), dtype=float)
        t = np.where(r > 0, t, 0.0)
        tables[j] = t
    return DyadicPartition(grid, j_min, j_max, tables, profile)


def dyadic_sum(r, j_min: int, j_max: int, profile: Callable = psi):
    """``sum_j profile(2^-j r)`` for arbitrary radii (no lattice)."""
    r = np.asarray(r, dtype=float)
    return sum(profile(r * 2.0**-j) for j in range(j_min, j_max + 1))


def block(f: SpectralField, j: int, partition: DyadicPartition) -> SpectralField:
    """Littlewood-Paley piece of ``f`` on shell ``j`` (zero outside the shell range)."""
    if f.grid != partition.grid:
        raise ValueError("field and partition live on different grids")
    return f.with_coeffs(f.coeffs * partition.multiplier(j))


def _require_mean_zero(f: SpectralField, what: str):
    m = np.abs(f.mean()).max()
    if m > 1e-12 * max(f.coeff_norm(), np.finfo(float).tiny):
        raise ValueError(f"{what} requires a mean-zero field")


def block_norms(f: SpectralField, p: float, partition: DyadicPartition) -> dict[int, float]:
    """``||Delta_j f||_{L^p}`` for every shell; tensors combine componentwise (Frobenius)."""
    _check_exponent("p", p)
    g = f.grid
    w = f.component_weights
    out = {}
    if p == 2:
        wb = w.reshape((-1,) + (1,) * g.d)
        a2 = np.sum(wb * np.abs(f.coeffs) ** 2, axis=0)
        for j in partition.shells:
            out[j] = float(np.sqrt(g.volume * np.sum(a2 * partition.multiplier(j) ** 2)))
        return out
    for j in partition.shells:
        samples = transform_inverse(block(f, j, partition))
        per = _lp_components(samples, float(p), g)
        out[j] = float(np.sqrt(np.sum(w * per**2)))
    return out


def besov_norm(f: SpectralField, s: float, p: float, r: float, partition: DyadicPartition) -> float:
    """``|| (2^{js} ||Delta_j f||_{L^p})_j ||_{l^r}`` over the grid's shells."""
    _check_exponent("p", p)
    _check_exponent("r", r)
    if s <= 0:
        _require_mean_zero(f, "Besov norm with s <= 0")
    bn = block_norms(f, p, partition)
    seq = np.array([2.0 ** (j * s) * bn[j] for j in partition.shells])
    if np.isinf(r):
        return float(seq.max())
    return float(np.sum(seq**r) ** (1.0 / r))


def sobolev_norm(f: SpectralField, s: float, remove_mean: bool = False) -> float:
    """Homogeneous ``H^s`` norm (zero mode excluded).

    For ``s < 0`` a field with nonzero mean is rejected unless
    ``remove_mean`` is set, in which case the mean is dropped explicitly.
    """
    g = f.grid
    if s < 0 and not remove_mean:
        m = np.abs(f.mean()).max()
        if m > 1e-12 * max(f.coeff_norm(), np.finfo(float).tiny):
            raise ValueError("negative-order operator on non-mean-zero field")
    w = f.component_weights.reshape((-1,) + (1,) * g.d)
    nz = g.xi2 > 0
    mult = np.zeros(g.shape)
    mult[nz] = g.xi2[nz] ** s
    return float(np.sqrt(g.volume * np.sum(w * np.abs(f.coeffs) ** 2 * mult)))


def norm(f: SpectralField, spec: NormSpec, partition: DyadicPartition | None = None) -> float:
    if spec.kind == "sobolev":
        return sobolev_norm(f, spec.s)
    if partition is None:
        partition = build_partition(f.grid)
    return besov_norm(f, spec.s, spec.p, spec.r, partition)
