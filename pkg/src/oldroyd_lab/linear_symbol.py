"""Linearised Oldroyd-B system: per-frequency symbol, Green's matrix and decay quadrature.

Dropping the transport terms and ``Q``, each Fourier mode ``(u_hat, tau_hat)``
evolves by ``d/dt v = M(xi) v`` with, in stacked coordinates
``v = (u_0..u_{d-1}, tau packed upper triangle)``::

    M_uu = -mu |xi|^2 P(xi)          M_ut tau = P(xi) mu1 i xi . tau
    M_tu u = mu2 (i/2)(xi u^T + u xi^T)  M_tt = -a Id

``P(xi)`` is the Leray projector.  The matrix is complex in these
coordinates; substituting ``tau = i tau'`` makes it real.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy import integrate
from scipy.special import gamma

from .grid_spectral import sym_index_pairs, sym_weights
from .params import ModelParams

COND_FALLBACK = 1e8
# eigen-route error grows like cond * eps; quadrature nodes near the
# coalescent radius need the tighter switch to keep integrands smooth
COND_QUADRATURE = 1e4


class QuadratureError(RuntimeError):
    def __init__(self, message, residual=float("nan")):
        super().__init__(f"{message} (residual estimate {residual:.3e})")
        self.residual = residual


def state_size(d: int) -> int:
    return d + d * (d + 1) // 2


def weight_vector(d: int, params: ModelParams) -> np.ndarray:
    """Diagonal of the energy weight: ``mu2`` on velocity, ``mu1 * Frobenius`` on stress."""
    return np.concatenate([np.full(d, params.mu2), params.mu1 * sym_weights(d)])


def symbol_matrices(xi: np.ndarray, params: ModelParams) -> np.ndarray:
    """Batched symbol for wavevectors ``xi`` of shape ``(d, ...)``; returns ``(..., n, n)``."""
    xi = np.asarray(xi, dtype=float)
    d = xi.shape[0]
    batch = xi.shape[1:]
    n = state_size(d)
    x = np.moveaxis(xi, 0, -1)  # (..., d)
    x2 = np.sum(x**2, axis=-1)
    safe = np.where(x2 > 0, x2, 1.0)
    eye = np.eye(d)
    P = eye - x[..., :, None] * x[..., None, :] / safe[..., None, None]
    P = np.where((x2 > 0)[..., None, None], P, eye)
    pairs = sym_index_pairs(d)
    m = len(pairs)

    M = np.zeros(batch + (n, n), dtype=complex)
    M[..., :d, :d] = -params.mu * x2[..., None, None] * P
    # B[l, c]: (xi . tau)_l = sum_i xi_i tau_il from packed component c
    B = np.zeros(batch + (d, m), dtype=complex)
    for c, (i, j) in enumerate(pairs):
        B[..., j, c] += 1j * x[..., i]
        if i != j:
            B[..., i, c] += 1j * x[..., j]
    M[..., :d, d:] = params.mu1 * np.einsum("...lk,...kc->...lc", P, B)
    for c, (i, j) in enumerate(pairs):
        M[..., d + c, j] += 0.5j * params.mu2 * x[..., i]
        M[..., d + c, i] += 0.5j * params.mu2 * x[..., j]
    M[..., d:, d:] = -params.a * np.eye(m)
    return M


@dataclass
class LinearSymbol:
    xi: np.ndarray
    M: np.ndarray
    params: ModelParams

    @property
    def d(self) -> int:
        return len(self.xi)

    @property
    def weights(self) -> np.ndarray:
        return weight_vector(self.d, self.params)

    def dissipation(self, v: np.ndarray) -> float:
        """``Re <W v, M v>`` in the energy weight ``W``."""
        return float(np.real(np.vdot(self.weights * v, self.M @ v)))

    def dissipation_expected(self, v: np.ndarray) -> float:
        """``-mu mu2 |xi|^2 |u|^2 - a mu1 |tau|_F^2`` (valid when ``xi . u = 0``)."""
        d, p = self.d, self.params
        u, tau = v[:d], v[d:]
        x2 = float(np.sum(self.xi**2))
        return -p.mu * p.mu2 * x2 * float(np.sum(np.abs(u) ** 2)) - p.a * p.mu1 * float(
            np.sum(sym_weights(d) * np.abs(tau) ** 2)
        )


def assemble_symbol(xi, params: ModelParams) -> LinearSymbol:
    xi = np.asarray(xi, dtype=float).reshape(-1)
    return LinearSymbol(xi, symbol_matrices(xi, params), params)


def _expm_eig(M: np.ndarray, t: float, cond_max: float):
    """``exp(tM)`` via eigendecomposition; also returns a per-matrix 'needs fallback' mask."""
    lam, V = np.linalg.eig(M)
    cond = np.linalg.cond(V)
    bad = ~np.isfinite(cond) | (cond > cond_max)
    with np.errstate(all="ignore"):
        Vinv = np.linalg.inv(np.where(bad[..., None, None], np.eye(M.shape[-1]), V))
    E = np.einsum("...ij,...j,...jk->...ik", V, np.exp(t * lam), Vinv)
    return E, bad


def propagator_batch(M: np.ndarray, t: float, cond_max: float = COND_FALLBACK) -> np.ndarray:
    """Green's matrices ``exp(tM)`` for a stack of symbols."""
    if t < 0:
        raise ValueError("propagator needs t >= 0")
    if t == 0:
        return np.broadcast_to(np.eye(M.shape[-1], dtype=complex), M.shape).copy()
    E, bad = _expm_eig(M, t, cond_max)
    if np.any(bad):
        E[bad] = sla.expm(t * M[bad])
    return E


def propagator(symbol: LinearSymbol, t: float) -> np.ndarray:
    """Green's matrix ``exp(t M(xi))``.

    Eigendecomposition, with scaling-and-squaring when the eigenvector
    matrix has condition number above ``1e8`` (near-coalescent eigenvalues).
    """
    return propagator_batch(symbol.M[None], t)[0]


def transverse_basis(xi: np.ndarray) -> np.ndarray:
    """Orthonormal columns spanning the velocity directions orthogonal to ``xi``."""
    d = len(xi)
    q, _ = np.linalg.qr(np.column_stack([xi, np.eye(d)]))
    return q[:, 1:d]


@dataclass
class EigenAnalysis:
    eigenvalues: np.ndarray
    slow: np.ndarray
    fast: np.ndarray
    slow_stress_ratio: np.ndarray
    separated: bool


def eigen_analysis(symbol: LinearSymbol) -> EigenAnalysis:
    """Spectrum of the symbol on the divergence-free subspace ``xi . u = 0``.

    The ``d - 1`` eigenvalues nearest the origin are reported as slow; for
    each, ``slow_stress_ratio`` is ``|tau|_F / |u|`` of its eigenvector.
    """
    xi = symbol.xi
    d = len(xi)
    if not np.any(xi):
        raise ValueError("eigen_analysis needs xi != 0")
    m = d * (d + 1) // 2
    n = d + m
    Q = np.zeros((n, d - 1 + m))
    Q[:d, : d - 1] = transverse_basis(xi)
    Q[d:, d - 1 :] = np.eye(m)
    Mr = Q.T @ symbol.M @ Q
    lam, V = np.linalg.eig(Mr)
    order = np.argsort(np.abs(lam))
    lam, V = lam[order], V[:, order]
    full = Q @ V
    sw = sym_weights(d)
    ratios = np.array(
        [np.sqrt(np.sum(sw * np.abs(full[d:, c]) ** 2)) / np.linalg.norm(full[:d, c]) for c in range(d - 1)]
    )
    slow, fast = lam[: d - 1], lam[d - 1 :]
    separated = bool(np.abs(slow).max() < np.abs(fast).min())
    return EigenAnalysis(lam, slow, fast, ratios, separated)


def slow_rate_constant(params: ModelParams, d: int, radii=(1e-2, 1e-3, 1e-4), direction=None) -> tuple[float, np.ndarray]:
    """Estimate ``c = lim -lambda_slow / |xi|^2`` with a Richardson step.

    Returns the extrapolated value and the raw quotients at ``radii``.
    """
    if direction is None:
        direction = np.eye(d)[0]
    direction = np.asarray(direction, float) / np.linalg.norm(direction)
    q = []
    for r in radii:
        ea = eigen_analysis(assemble_symbol(r * direction, params))
        q.append(float(-np.real(ea.slow).max()) / r**2)
    q = np.array(q)
    # quotient is even in r: q(r) = c + O(r^2)
    r = np.array(radii)
    c = (q[-1] * r[-2] ** 2 - q[-2] * r[-1] ** 2) / (r[-2] ** 2 - r[-1] ** 2)
    return float(c), q


# ------------------------------------------------------------ decay quadrature


@dataclass(frozen=True)
class DecayProfile:
    """Radial initial data ``|w0(xi)| = |xi|^(sigma - d/2 + eps0)`` on ``|xi| <= cutoff``.

    The velocity sits in a transverse direction; the stress carries the same
    profile times ``stress_amplitude`` along the coupled symmetric direction
    ``(xi_hat e + e xi_hat) / sqrt 2``.
    """

    d: int
    sigma: float
    eps0: float = 0.1
    k: float = 0.0
    component: str = "u"
    cutoff: float = 1.0
    stress_amplitude: float = 1.0
    rtol: float = 1e-10

    def __post_init__(self):
        if self.d not in (2, 3):
            raise ValueError("d must be 2 or 3")
        if not 0 <= self.sigma < self.d / 2:
            raise ValueError(f"sigma={self.sigma} violates 0 ≤ σ < d/2")
        if self.k < 0:
            raise ValueError("k must be nonnegative")
        if self.component not in ("u", "tau"):
            raise ValueError("component must be 'u' or 'tau'")

    @property
    def radial_power(self) -> float:
        """Exponent ``alpha`` of ``r`` in the radial integrand at ``t = 0``."""
        d = self.d
        return d - 1 + 2 * self.k + 2 * (self.sigma - d / 2 + self.eps0)

    @property
    def predicted_slope(self) -> float:
        """Heat-type prediction for ``d log||.|| / d log t``."""
        extra = 1.0 if self.component == "tau" else 0.0
        return -(self.k + extra + self.sigma + self.eps0) / 2


def sphere_area(d: int) -> float:
    return 2 * np.pi ** (d / 2) / gamma(d / 2)


def radial_initial_vector(d: int, stress_amplitude: float = 1.0) -> np.ndarray:
    """Unit-profile initial mode for ``xi`` along ``e_0``: velocity along ``e_1``."""
    v = np.zeros(state_size(d), dtype=complex)
    v[1] = 1.0
    c = sym_index_pairs(d).index((0, 1))
    v[d + c] = stress_amplitude / np.sqrt(2.0)
    return v


def radial_response(r, t: float, profile: DecayProfile, params: ModelParams) -> np.ndarray:
    """``|G_comp(r, t) v0|^2`` for unit-profile data at radii ``r``."""
    r = np.atleast_1d(np.asarray(r, dtype=float))
    d = profile.d
    xi = np.zeros((d,) + r.shape)
    xi[0] = r
    M = symbol_matrices(xi, params)
    v0 = radial_initial_vector(d, profile.stress_amplitude)
    G = propagator_batch(M, t, COND_QUADRATURE)
    w = G @ v0
    if profile.component == "u":
        return np.sum(np.abs(w[:, :d]) ** 2, axis=-1)
    return np.sum(sym_weights(d) * np.abs(w[:, d:]) ** 2, axis=-1)


def initial_norm_closed_form(profile: DecayProfile) -> float:
    """``||Lambda^k comp(0)||`` from ``int_0^cutoff r^alpha dr``."""
    a = profile.radial_power
    amp2 = 1.0 if profile.component == "u" else profile.stress_amplitude**2
    return float(np.sqrt(sphere_area(profile.d) * amp2 * profile.cutoff ** (a + 1) / (a + 1)))


def _quad(f, lo, hi, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        res = integrate.quad(f, lo, hi, full_output=1, **kw)
    val, err = res[0], res[1]
    failed = len(res) > 3
    return val, err, failed


def decay_norm_quadrature(profile: DecayProfile, t: float, params: ModelParams) -> float:
    """``||Lambda^k comp(t)||_{L^2}`` for the radial profile, by adaptive quadrature.

    With ``s = sqrt(1 + t)`` the radius is rescaled to ``rho = r s`` so the
    heat-type factor ``exp(-c r^2 t)`` stays O(1) wide; the endpoint
    singularity ``rho^alpha`` is handled by an algebraic-weight rule.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    alpha = profile.radial_power
    s = np.sqrt(1.0 + t)
    top = profile.cutoff * s
    split = min(top, 1.0)

    def g(rho):
        return float(radial_response(rho / s, t, profile, params)[0])

    v1, e1, f1 = _quad(g, 0.0, split, weight="alg", wvar=(alpha, 0.0), limit=200, epsabs=0.0, epsrel=profile.rtol)
    v2 = e2 = 0.0
    f2 = False
    if top > split:
        v2, e2, f2 = _quad(lambda x: x**alpha * g(x), split, top, limit=400, epsabs=0.0, epsrel=profile.rtol)
    total = v1 + v2
    err = e1 + e2
    if f1 or f2 or err > max(1e-6 * abs(total), 1e-300):
        raise QuadratureError("radial quadrature did not converge", err / max(abs(total), 1e-300))
    val = sphere_area(profile.d) * s ** (-(alpha + 1)) * total
    return float(np.sqrt(max(val, 0.0)))


def decay_series(profile: DecayProfile, times, params: ModelParams) -> np.ndarray:
    return np.array([decay_norm_quadrature(profile, float(t), params) for t in times])


def polar_tensor_norm(profile: DecayProfile, t: float, params: ModelParams, n_r: int = 64, n_theta: int = 64) -> float:
    """Same norm as :func:`decay_norm_quadrature` on a 2D polar tensor grid.

    Every node carries its own wavevector direction and transverse frame,
    so agreement with the radial reduction checks rotational covariance.
    """
    if profile.d != 2:
        raise ValueError("polar tensor quadrature is implemented for d = 2")
    from scipy.special import roots_jacobi

    alpha = profile.radial_power  # includes the polar Jacobian r
    x, w = roots_jacobi(n_r, 0.0, alpha)  # weight (1+x)^alpha on [-1, 1]
    r = profile.cutoff * (x + 1) / 2
    wr = w * (profile.cutoff / 2) ** (alpha + 1)
    theta = 2 * np.pi * np.arange(n_theta) / n_theta
    R, TH = np.meshgrid(r, theta, indexing="ij")
    xi = np.array([R * np.cos(TH), R * np.sin(TH)])
    M = symbol_matrices(xi, params)
    G = propagator_batch(M, t, COND_QUADRATURE)
    e = np.array([-np.sin(TH), np.cos(TH)])  # transverse unit vector
    xh = np.array([np.cos(TH), np.sin(TH)])
    sfull = (xh[:, None] * e[None, :] + e[:, None] * xh[None, :]) / np.sqrt(2.0)
    v0 = np.zeros(R.shape + (5,), dtype=complex)
    v0[..., 0], v0[..., 1] = e[0], e[1]
    for c, (i, j) in enumerate(sym_index_pairs(2)):
        v0[..., 2 + c] = profile.stress_amplitude * sfull[i, j]
    wv = np.einsum("...ij,...j->...i", G, v0)
    if profile.component == "u":
        resp = np.sum(np.abs(wv[..., :2]) ** 2, axis=-1)
    else:
        resp = np.sum(sym_weights(2) * np.abs(wv[..., 2:]) ** 2, axis=-1)
    val = np.sum(wr[:, None] * resp) * (2 * np.pi / n_theta)
    return float(np.sqrt(val))


def lattice_evolve(w_hat: np.ndarray, xi: np.ndarray, t: float, params: ModelParams) -> np.ndarray:
    """Apply the Green's matrix mode by mode to stacked coefficients ``(n, ...)``."""
    M = symbol_matrices(xi, params)
    G = propagator_batch(M, t)
    return np.moveaxis(np.einsum("...ij,j...->...i", G, w_hat), -1, 0)
