"""Right-hand side and time integration of the incompressible Oldroyd-B system.

    u_t + u.grad u - mu Lap u = -grad pi + mu1 div tau,   div u = 0
    tau_t + u.grad tau + a tau + Q(grad u, tau) = mu2 D(u)
    Q = tau Omega - Omega tau + b (D tau + tau D)

The pressure is removed by Leray projection.  Time stepping is ETDRK2
(Cox-Matthews) with the exact per-mode linear propagator, so the viscous,
damping and coupling terms carry no step-size restriction.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np
import scipy.fft as sfft
import scipy.linalg as sla

from . import grid_spectral as gs
from .grid_spectral import Grid, SymTensorField, TensorField, VectorField
from .linear_symbol import state_size, symbol_matrices
from .littlewood_paley import besov_norm, build_partition
from .params import ModelParams
from .series import NormSeries

log = logging.getLogger(__name__)

C_CFL = 0.5


class InvariantError(ValueError):
    pass


class StabilityError(RuntimeError):
    """Step size above the advective CFL bound."""


class BlowUpError(FloatingPointError):
    """Non-finite values appeared during integration."""


class SimulationError(RuntimeError):
    def __init__(self, message, trajectory):
        super().__init__(message)
        self.trajectory = trajectory


@dataclass
class SimulationState:
    u: VectorField
    tau: SymTensorField
    t: float = 0.0
    params: ModelParams = field(default_factory=ModelParams)

    @property
    def grid(self) -> Grid:
        return self.u.grid

    def copy(self) -> "SimulationState":
        return SimulationState(self.u.copy(), self.tau.copy(), self.t, self.params)

    def violations(self, tol: float = 1e-10) -> list[str]:
        out = []
        if self.tau.grid != self.u.grid:
            out.append("u and tau live on different grids")
            return out
        if self.t < 0:
            out.append("time must be nonnegative")
        div = self.u.divergence_defect()
        if div > tol:
            out.append(f"u is not divergence-free (defect {div:.2e})")
        scale = max(self.u.coeff_norm(), np.finfo(float).tiny)
        if np.abs(self.u.mean()).max() > 1e-12 * scale:
            out.append("u has nonzero mean")
        for name, f in (("u", self.u), ("tau", self.tau)):
            h = f.hermitian_defect()
            if h > 1e-12:
                out.append(f"{name} is not a real field (Hermitian defect {h:.2e})")
        return out

    def validate(self):
        v = self.violations()
        if v:
            raise InvariantError("; ".join(v))


# ------------------------------------------------------------------ the Q term


def q_pointwise(G: np.ndarray, T: np.ndarray, b: float) -> np.ndarray:
    """``T Omega - Omega T + b (D T + T D)`` for full ``(d, d, ...)`` arrays.

    ``G[i, j] = d_i u_j``.
    """
    Gt = np.swapaxes(G, 0, 1)
    D = 0.5 * (G + Gt)
    W = 0.5 * (G - Gt)
    mm = lambda A, B: np.einsum("ik...,kj...->ij...", A, B)
    return mm(T, W) - mm(W, T) + b * (mm(D, T) + mm(T, D))


def compute_Q(grad_u: TensorField, tau: SymTensorField, b: float) -> SymTensorField:
    """Dealiased ``Q(grad u, tau)``; the result is symmetric by construction."""
    g = grad_u.grid
    if tau.grid != g:
        raise gs.GridMismatchError("fields live on different grids")
    G = gs.transform_inverse(gs.dealias(grad_u)).reshape((g.d, g.d) + g.shape)
    T = gs.unpack_sym(gs.transform_inverse(gs.dealias(tau)), g.d)
    Qp = q_pointwise(G, T, b)
    # Q is symmetric algebraically; symmetrise to remove rounding asymmetry
    Qp = 0.5 * (Qp + np.swapaxes(Qp, 0, 1))
    return gs.dealias(gs.transform_forward(gs.pack_sym(Qp, g.d), g, kind="symtensor"))


def advect(u: VectorField, f: gs.SpectralField) -> gs.SpectralField:
    """Dealiased ``(u . grad) f`` applied componentwise."""
    g = u.grid
    up = gs.transform_inverse(gs.dealias(u))
    fd = gs.dealias(f)
    ik = 1j * g.xi
    out = np.zeros_like(fd.coeffs)
    for c in range(fd.coeffs.shape[0]):
        dfi = sfft.ifftn(ik * fd.coeffs[c] * g.N**g.d, axes=g.axes, workers=gs.fft_workers()).real
        prod = np.sum(up * dfi, axis=0)
        out[c] = sfft.fftn(prod, axes=g.axes, workers=gs.fft_workers()) / g.N**g.d
    return gs.dealias(fd.with_coeffs(out * g.nyquist_mask))


def rhs(state: SimulationState, nonlinear: bool = True):
    """Time derivatives ``(du/dt, dtau/dt)`` of the full system."""
    state.validate()
    p = state.params
    u, tau = state.u, state.tau
    g = u.grid
    lap_u = u.with_coeffs(-g.xi2 * u.coeffs)
    du = p.mu * lap_u + p.mu1 * gs.divergence(tau)
    dtau = p.mu2 * gs.deformation_D(u) - p.a * tau
    if nonlinear:
        du = du - advect(u, u)
        dtau = dtau - advect(u, tau) - compute_Q(gs.gradient(u), tau, p.b)
    return gs.leray_project(du), dtau


# ------------------------------------------------------- half-spectrum kernels


def full_to_half(c: np.ndarray, N: int) -> np.ndarray:
    return c[..., : N // 2 + 1].copy()


def half_to_full(h: np.ndarray, N: int, d: int) -> np.ndarray:
    """Rebuild the full Hermitian lattice from its ``rfft`` half."""
    shape = h.shape[:-1] + (N,)
    out = np.zeros(shape, dtype=complex)
    out[..., : N // 2 + 1] = h
    lead = tuple(range(h.ndim - d, h.ndim - 1))
    neg = np.conj(np.roll(np.flip(h, axis=lead), 1, axis=lead)) if lead else np.conj(h)
    out[..., N // 2 + 1 :] = neg[..., N // 2 - 1 : 0 : -1]
    return out


def phi_matrices(M: np.ndarray, h: float):
    """``exp(hM)``, ``h phi1(hM)``, ``h phi2(hM)`` via one augmented exponential."""
    K, n, _ = M.shape
    A = np.zeros((K, 3 * n, 3 * n), dtype=complex)
    eye = np.eye(n)
    A[:, :n, :n] = h * M
    A[:, :n, n : 2 * n] = eye
    A[:, n : 2 * n, 2 * n :] = eye
    X = sla.expm(A)
    return X[:, :n, :n], h * X[:, :n, n : 2 * n], h * X[:, :n, 2 * n :]


class Stepper:
    """ETDRK2 integrator on the ``rfft`` half lattice.

    ``w`` arrays have shape ``(n, N, ..., N//2 + 1)`` with velocity
    components first and packed stress components after.
    """

    def __init__(self, grid: Grid, params: ModelParams, dt: float, nonlinear: bool = True):
        if not dt > 0:
            raise ValueError("dt must be positive")
        self.grid, self.params, self.dt, self.nonlinear = grid, params, float(dt), nonlinear
        d, N = grid.d, grid.N
        self.d, self.n = d, state_size(d)
        self.pairs = gs.sym_index_pairs(d)
        hs = slice(0, N // 2 + 1)
        self.xi = grid.xi[..., hs].copy()
        self.xi[-1] = np.abs(self.xi[-1])  # rfft convention on the last axis
        self.xi2 = np.sum(self.xi**2, axis=0)
        self.keep = grid.nyquist_mask[..., hs]
        self.dealias = grid.dealias_mask[..., hs] & self.keep
        self.hshape = self.xi2.shape
        # each interior half-lattice mode stands for itself and its conjugate
        self.mult = np.where(np.arange(N // 2 + 1) == 0, 1.0, 2.0) * np.ones(self.hshape)
        M = symbol_matrices(self.xi, params).reshape(-1, self.n, self.n)
        self.E, self.P1, self.P2 = phi_matrices(M, self.dt)
        self.drift: list[tuple[float, float]] = []

    # -- conversions
    def pack(self, state: SimulationState) -> np.ndarray:
        N = self.grid.N
        return np.concatenate([full_to_half(state.u.coeffs, N), full_to_half(state.tau.coeffs, N)])

    def unpack(self, w: np.ndarray, t: float) -> SimulationState:
        g = self.grid
        full = half_to_full(w, g.N, g.d)
        return SimulationState(VectorField(g, full[: g.d]), SymTensorField(g, full[g.d :]), t, self.params)

    # -- kernels
    def _apply(self, A: np.ndarray, w: np.ndarray) -> np.ndarray:
        flat = w.reshape(self.n, -1).T[..., None]
        return (A @ flat)[..., 0].T.reshape(w.shape)

    def _irfft(self, a):
        g = self.grid
        return sfft.irfftn(a * g.N**g.d, s=g.shape, axes=g.axes, workers=gs.fft_workers())

    def _rfft(self, a):
        g = self.grid
        return sfft.rfftn(a, axes=g.axes, workers=gs.fft_workers()) / g.N**g.d

    def leray(self, uh: np.ndarray) -> np.ndarray:
        safe = np.where(self.xi2 > 0, self.xi2, 1.0)
        return uh - self.xi * (np.sum(self.xi * uh, axis=0) / safe)

    def nonlinear_terms(self, w: np.ndarray, check_cfl: bool = False):
        """``(P[-u.grad u], -u.grad tau - Q)`` on the half lattice, dealiased."""
        d = self.d
        wd = w * self.dealias
        uh, th = wd[:d], wd[d:]
        ik = 1j * self.xi
        u = self._irfft(uh)
        umax = float(np.sqrt(np.sum(u**2, axis=0)).max())
        if check_cfl and umax > 0 and self.dt > C_CFL * self.grid.dx / umax:
            raise StabilityError(
                f"dt={self.dt:g} exceeds the CFL bound {C_CFL * self.grid.dx / umax:.3g} (max|u|={umax:.3g})"
            )
        G = self._irfft(ik[:, None] * uh[None, :])  # G[i, j] = d_i u_j
        T = gs.unpack_sym(self._irfft(th), d)
        dT = self._irfft(ik[:, None] * th[None, :])  # dT[i, c] = d_i tau_c
        adv_u = np.einsum("i...,ij...->j...", u, G)
        adv_t = np.einsum("i...,ic...->c...", u, dT)
        Q = q_pointwise(G, T, self.params.b)
        Qs = np.array([0.5 * (Q[i, j] + Q[j, i]) for i, j in self.pairs])
        nu = -self._rfft(adv_u) * self.dealias
        nt = -self._rfft(adv_t + Qs) * self.dealias
        out = np.concatenate([self.leray(nu), nt])
        if not np.all(np.isfinite(out)):
            raise BlowUpError("non-finite nonlinear terms")
        return out

    def linear_terms(self, w: np.ndarray) -> np.ndarray:
        M = symbol_matrices(self.xi, self.params).reshape(-1, self.n, self.n)
        return self._apply(M, w)

    def enforce(self, w: np.ndarray, t: float) -> np.ndarray:
        """Re-project velocity, zero the mean and Nyquist modes, fix the self-conjugate plane."""
        d = self.d
        uh = w[:d]
        den = np.sqrt(np.sum(np.abs(uh) ** 2, axis=0)) * np.sqrt(self.xi2)
        div = float(np.abs(np.sum(self.xi * uh, axis=0)).max() / max(den.max(), np.finfo(float).tiny))
        plane = w[..., 0]
        lead = tuple(range(1, plane.ndim))
        mirror = np.conj(np.roll(np.flip(plane, axis=lead), 1, axis=lead))
        scale = max(np.abs(w).max(), np.finfo(float).tiny)
        herm = float(np.abs(plane - mirror).max() / scale)
        w = w.copy()
        w[..., 0] = 0.5 * (plane + mirror)
        w[:d] = self.leray(w[:d])
        w[(slice(0, d),) + (0,) * self.grid.d] = 0.0
        w *= self.keep
        self.drift.append((div, herm))
        if div > 1e-10 or herm > 1e-10:
            log.warning("invariant drift at t=%.4g: div %.2e, hermitian %.2e", t, div, herm)
        else:
            log.debug("invariant drift at t=%.4g: div %.2e, hermitian %.2e", t, div, herm)
        return w

    def step(self, w: np.ndarray, t: float = 0.0) -> np.ndarray:
        if not self.nonlinear:
            out = self._apply(self.E, w)
        else:
            n0 = self.nonlinear_terms(w, check_cfl=True)
            a = self._apply(self.E, w) + self._apply(self.P1, n0)
            n1 = self.nonlinear_terms(a)
            out = a + self._apply(self.P2, n1 - n0)
        if not np.all(np.isfinite(out)):
            raise BlowUpError(f"non-finite state after step at t={t + self.dt:g}")
        return self.enforce(out, t + self.dt)

    # -- quadratic diagnostics on the half lattice
    def sobolev_sq(self, c: np.ndarray, s: float, weights=None) -> float:
        g = self.grid
        mult = np.zeros(self.hshape)
        nz = self.xi2 > 0
        mult[nz] = self.xi2[nz] ** s
        a2 = np.abs(c) ** 2
        if weights is not None:
            a2 = a2 * np.asarray(weights).reshape((-1,) + (1,) * g.d)
        return float(g.volume * np.sum(self.mult * mult * a2))

    def dissipation(self, w: np.ndarray, k: float) -> float:
        """``mu mu2 ||Lambda^{k+1} u||^2 + a mu1 ||Lambda^k tau||^2``."""
        p, d = self.params, self.d
        return p.mu * p.mu2 * self.sobolev_sq(w[:d], k + 1) + p.a * p.mu1 * self.sobolev_sq(
            w[d:], k, gs.sym_weights(d)
        )


def step(state: SimulationState, dt: float, nonlinear: bool = True, stepper: Stepper | None = None) -> SimulationState:
    """Advance one ETDRK2 step."""
    state.validate()
    if stepper is None:
        stepper = Stepper(state.grid, state.params, dt, nonlinear)
    w = stepper.step(stepper.pack(state), state.t)
    return stepper.unpack(w, state.t + dt)


# ---------------------------------------------------------------- initial data


@dataclass(frozen=True)
class InitialDataSpec:
    """Random-phase data with spectrum ``|xi|^(sigma - d/2 + eps0) exp(-(|xi|/cutoff)^4)``.

    The pair is scaled so that the critical Besov sum equals ``eps``.
    """

    seed: int = 0
    eps: float = 1e-2
    sigma: float = 0.0
    eps0: float = 0.1
    cutoff: float = 3.0

    def amplitude(self, d: int) -> Callable:
        e = self.sigma - d / 2 + self.eps0
        kc = self.cutoff

        def amp(r):
            r = np.asarray(r, float)
            out = np.zeros_like(r)
            pos = r > 0
            out[pos] = r[pos] ** e * np.exp(-((r[pos] / kc) ** 4))
            return out

        return amp


def critical_norms(u: VectorField, tau: SymTensorField, partition=None) -> tuple[float, float]:
    """``(||u||_{B^{d/2-1}_{2,1}}, ||tau||_{B^{d/2}_{2,1}})``."""
    d = u.grid.d
    if partition is None:
        partition = build_partition(u.grid)
    return besov_norm(u, d / 2 - 1, 2, 1, partition), besov_norm(tau, d / 2, 2, 1, partition)


def make_initial_data(spec: InitialDataSpec, grid: Grid) -> tuple[VectorField, SymTensorField]:
    d = grid.d
    if not 0 <= spec.sigma < d / 2:
        raise ValueError(f"sigma={spec.sigma} out of range: need 0 ≤ σ < d/2 = {d / 2:g}")
    if spec.eps < 0:
        raise ValueError("eps must be nonnegative")
    if spec.eps == 0:
        return VectorField.zeros(grid), SymTensorField.zeros(grid)
    rng = np.random.default_rng(spec.seed)
    n_max = int(math.ceil(3 * spec.cutoff / grid.k0))
    amp = spec.amplitude(d)
    u = gs.leray_project(gs.random_field(grid, "vector", rng, amp, n_max))
    tau = gs.random_field(grid, "symtensor", rng, amp, n_max)
    cu, ct = critical_norms(u, tau)
    scale = spec.eps / (cu + ct)
    return u * scale, tau * scale


# ------------------------------------------------------------------- simulate


@dataclass
class Trajectory:
    series: NormSeries
    state: SimulationState
    steps: int = 0
    drift: list = field(default_factory=list)
    error: str | None = None


Hook = Callable[[SimulationState], dict]


def simulate(
    state0: SimulationState,
    dt: float,
    T: float,
    hooks: Iterable[Hook] = (),
    output_every: float | None = None,
    nonlinear: bool = True,
    dissipation_orders: Iterable[float] = (),
    checkpoint_every: float | None = None,
    on_checkpoint: Callable[[SimulationState], None] | None = None,
) -> Trajectory:
    """Integrate to ``T`` and record every hook at the output cadence.

    Samples are taken at ``t = 0`` and every ``output_every`` (default: every
    step) when ``T > 0``; ``T = 0`` yields an empty series.  For each order
    in ``dissipation_orders`` the running integral of
    ``mu mu2 ||Lambda^{k+1} u||^2 + a mu1 ||Lambda^k tau||^2`` is accumulated
    by the trapezoid rule on the integrator steps and recorded as
    ``intD_H{k}``.

    On failure a :class:`SimulationError` is raised whose ``trajectory``
    holds everything recorded so far.
    """
    state0.validate()
    hooks = list(hooks)
    orders = list(dissipation_orders)
    series = NormSeries()
    traj = Trajectory(series, state0.copy())
    if T < 0:
        raise ValueError("T must be nonnegative")
    if T == 0:
        return traj
    n_steps = _count(T, dt, "T")
    every = 1 if output_every is None else _count(output_every, dt, "output_every")
    ck = None if checkpoint_every is None else _count(checkpoint_every, dt, "checkpoint_every")

    stepper = Stepper(state0.grid, state0.params, dt, nonlinear)
    w = stepper.pack(state0)
    t0 = state0.t
    acc = {k: 0.0 for k in orders}
    prev = {k: stepper.dissipation(w, k) for k in orders}

    def record(i, w):
        snap = stepper.unpack(w, t0 + i * dt)
        vals = {}
        for h in hooks:
            vals.update(h(snap))
        for k in orders:
            vals[f"intD_H{k:g}"] = acc[k]
        series.append(snap.t, vals)
        return snap

    record(0, w)
    i = 0
    try:
        for i in range(1, n_steps + 1):
            w = stepper.step(w, t0 + (i - 1) * dt)
            for k in orders:
                cur = stepper.dissipation(w, k)
                acc[k] += 0.5 * dt * (prev[k] + cur)
                prev[k] = cur
            if i % every == 0 or i == n_steps:
                record(i, w)
            if ck and on_checkpoint and i % ck == 0:
                on_checkpoint(stepper.unpack(w, t0 + i * dt))
    except (BlowUpError, StabilityError, FloatingPointError) as exc:
        traj.state = stepper.unpack(np.nan_to_num(w), t0 + (i - 1) * dt)
        traj.steps = i - 1
        traj.drift = stepper.drift
        traj.error = f"{type(exc).__name__}: {exc}"
        raise SimulationError(traj.error, traj) from exc
    traj.state = stepper.unpack(w, t0 + n_steps * dt)
    traj.steps = n_steps
    traj.drift = stepper.drift
    return traj


def _count(span: float, dt: float, name: str) -> int:
    n = span / dt
    m = int(round(n))
    if m < 1 or abs(n - m) > 1e-9 * max(1.0, n):
        raise ValueError(f"{name}={span:g} must be a positive integer multiple of dt={dt:g}")
    return m
