"""Identity / inequality monitors and decay-rate estimation.

Hard checks (exact identities, Lyapunov inequalities) return a
:class:`Verdict` with ``passed`` set from a fixed tolerance.  Ratio sweeps
(commutator, product estimate) can only assert uniformity, never a numeric
constant, and are flagged ``soft``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from . import grid_spectral as gs
from .grid_spectral import Grid, SpectralField, SymTensorField, TensorField, VectorField
from .littlewood_paley import DyadicPartition, besov_norm, block, block_norms, build_partition, sobolev_norm
from .oldroyd_dynamics import SimulationState, compute_Q
from .params import ModelParams
from .series import NormSeries

TINY = 1e-300


@dataclass
class Verdict:
    check: str
    passed: bool
    window: tuple[float, float] | None = None
    residual: float | None = None
    slope: float | None = None
    soft: bool = False
    details: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {"check": self.check, "window": list(self.window) if self.window else None}
        if self.slope is not None:
            out["slope"] = self.slope
        else:
            out["residual"] = self.residual
        out["pass"] = bool(self.passed)
        out["details"] = self.details
        return out


def _label(x: float) -> str:
    return f"{x:g}"


# ------------------------------------------------------------------ energies


def energy_hk(state: SimulationState, k: float) -> float:
    """``mu2 ||Lambda^k u||^2 + mu1 ||Lambda^k tau||^2``."""
    p = state.params
    return p.mu2 * sobolev_norm(state.u, k) ** 2 + p.mu1 * sobolev_norm(state.tau, k) ** 2


def dissipation_hk(state: SimulationState, k: float) -> float:
    """``mu mu2 ||Lambda^{k+1} u||^2 + a mu1 ||Lambda^k tau||^2``."""
    p = state.params
    return p.mu * p.mu2 * sobolev_norm(state.u, k + 1) ** 2 + p.a * p.mu1 * sobolev_norm(state.tau, k) ** 2


def negative_sobolev_energy(state: SimulationState, sigma: float) -> float:
    """``mu2 ||u||_{H^-sigma}^2 + mu1 ||tau||_{H^-sigma}^2``.

    ``u`` must be mean-zero.  The mean of ``tau`` is generated by ``Q`` and
    damped at rate ``a``; it is left out of the norm (and reported
    separately by the recorder).
    """
    d = state.grid.d
    _check_sigma(sigma, d, strict_positive=False)
    p = state.params
    return p.mu2 * sobolev_norm(state.u, -sigma) ** 2 + p.mu1 * sobolev_norm(state.tau, -sigma, remove_mean=True) ** 2


def _check_sigma(sigma, d, strict_positive=True):
    lo_ok = sigma > 0 if strict_positive else sigma >= 0
    if not (lo_ok and sigma < d / 2):
        bound = "0 < σ < d/2" if strict_positive else "0 ≤ σ < d/2"
        raise ValueError(f"sigma={sigma} out of range: need {bound} = {d / 2:g}")


# --------------------------------------------------------------- Lyapunov


def lyapunov_check(
    series: NormSeries,
    k: float,
    eps: float | None = None,
    tol: float = 1e-9,
    integrated_tol: float = 1e-6,
) -> Verdict:
    """Discrete checks of the k-th order energy inequality.

    Uses ``E_H{k}`` and, when present, ``intD_H{k}`` (running integral of
    the dissipation).  Per output interval ``[t0, t1]``:

    * monotone:    ``E(t1) <= E(t0) + tol E(t0)``
    * dissipative: ``E(t1) - E(t0) + int_{t0}^{t1} D <= tol E(t0)``

    and globally ``E(t) + int_0^t D <= (1 + integrated_tol) E(0)``.
    """
    lab = _label(k)
    E = series.column(f"E_H{lab}")
    t = series.t()
    intD = series.column(f"intD_H{lab}") if f"intD_H{lab}" in series else None
    violations = []
    worst = 0.0

    def note(kind, i, excess):
        nonlocal worst
        worst = max(worst, excess)
        violations.append({"kind": kind, "t": float(t[i]), "excess": float(excess), "eps": eps})

    for i in range(1, len(E)):
        ref = max(E[i - 1], TINY)
        ex = (E[i] - E[i - 1]) / ref
        if ex > tol:
            note("monotone", i, ex)
        if intD is not None:
            ex = (E[i] - E[i - 1] + intD[i] - intD[i - 1]) / ref
            if ex > tol:
                note("dissipative", i, ex)
    integrated = None
    if intD is not None and len(E):
        ref = max(E[0], TINY)
        excess = (E + intD) / ref - 1.0
        integrated = float(excess.max())
        bad = np.nonzero(excess > integrated_tol)[0]
        for i in bad[:10]:
            note("integrated", i, float(excess[i]))
    details = {
        "k": k,
        "eps": eps,
        "n_intervals": max(len(E) - 1, 0),
        "n_violations": len(violations),
        "worst_relative_excess": worst,
        "integrated_max_excess": integrated,
        "violations": violations[:10],
    }
    window = (float(t[0]), float(t[-1])) if len(t) else None
    return Verdict(f"lyapunov_H{lab}", not violations, window, residual=worst, details=details)


def monotone_check(series: NormSeries, label: str, tol: float = 1e-9) -> Verdict:
    """Every interval nonincreasing up to ``tol`` relative."""
    y = series.column(label)
    t = series.t()
    ex = np.diff(y) / np.maximum(y[:-1], TINY) if len(y) > 1 else np.zeros(0)
    worst = float(ex.max()) if ex.size else 0.0
    window = (float(t[0]), float(t[-1])) if len(t) else None
    return Verdict(
        f"nonincreasing_{label}",
        worst <= tol,
        window,
        residual=max(worst, 0.0),
        details={"n_violations": int(np.sum(ex > tol))},
    )


# ---------------------------------------------------------- Besov functional


def besov_functional_E(
    series: NormSeries,
    a: float,
    w: float = 1.0,
    c0: float = 1.0,
    labels=("u_Bcrit", "tau_Bcrit", "u_Bdiss"),
) -> np.ndarray:
    """``E(t) = sup_s (||u||_crit + w ||tau||_crit) + int_0^t (c0/2 ||u||_diss + w a ||tau||_crit)``.

    ``||u||_crit``, ``||tau||_crit`` are the ``B^{d/2-1}_{2,1}`` and
    ``B^{d/2}_{2,1}`` norms, ``||u||_diss`` the ``B^{d/2+1}_{2,1}`` norm.
    The integral uses the trapezoid rule on the series times.
    """
    missing = [lab for lab in labels if lab not in series]
    if missing:
        raise KeyError(f"series lacks {missing} needed for the Besov functional")
    ub, tb, ud = (series.column(lab) for lab in labels)
    t = series.t()
    sup_part = np.maximum.accumulate(ub + w * tb) if len(t) else np.zeros(0)
    integrand = 0.5 * c0 * ud + w * a * tb
    integral = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (integrand[1:] + integrand[:-1]))]) if len(t) else np.zeros(0)
    return sup_part + integral


def besov_functional_verdict(E: np.ndarray, bound: float = 5.0) -> Verdict:
    ratio = float(E[-1] / max(E[0], TINY)) if len(E) else 0.0
    return Verdict("besov_functional", ratio <= bound, residual=ratio, details={"E0": float(E[0]) if len(E) else 0.0, "ratio": ratio, "bound": bound})


# ------------------------------------------------------------- cancellation


def cancellation_check(u: VectorField, tau, k: float) -> float:
    """Relative residual of ``<L^k div tau, L^k u> + <L^k D(u), L^k tau>``.

    ``tau`` may be a :class:`SymTensorField` (identity holds) or a general
    :class:`TensorField` (the identity needs symmetry).
    """
    g = u.grid
    if tau.grid != g:
        raise gs.GridMismatchError("fields live on different grids")
    nz = g.xi2 > 0
    mult = np.zeros(g.shape)
    mult[nz] = g.xi2[nz] ** k
    vol = g.volume
    div = gs.divergence(tau).coeffs
    T = tau.full()
    D = gs.deformation_D(u).full()
    lhs1 = vol * np.sum(mult * np.real(div * np.conj(u.coeffs)))
    lhs2 = vol * np.sum(mult * np.real(D * np.conj(T)))
    nu = sobolev_norm(u, k + 1)
    nt = math.sqrt(vol * np.sum(mult * np.abs(T) ** 2))
    return float(abs(lhs1 + lhs2) / (nu * nt + TINY))


def antisymmetrize(tau: SymTensorField, seed: int = 0) -> TensorField:
    """Negative control: add an antisymmetric part of comparable size to ``tau``."""
    g = tau.grid
    T = tau.full()
    rng = np.random.default_rng(seed)
    A = gs.random_field(g, "tensor", rng, lambda r: np.where(r > 0, np.abs(T).max() + 1e-30, 0.0), n_max=3).full()
    A = 0.5 * (A - np.swapaxes(A, 0, 1))
    return TensorField.from_full(g, T + A)


# ---------------------------------------------------------- interpolation


def interpolation_ratio(f: SpectralField, s: float, sigma: float) -> float:
    """``||f||_{H^s} / (||f||_{H^-sigma}^theta ||f||_{H^{s+1}}^{1-theta})``, ``theta = 1/(s+sigma+1)``.

    Fourier-side Holder gives a ratio at most 1 for every mean-zero ``f``.
    """
    th = 1.0 / (s + sigma + 1.0)
    lhs = sobolev_norm(f, s)
    rhs = sobolev_norm(f, -sigma) ** th * sobolev_norm(f, s + 1) ** (1 - th)
    if rhs == 0:
        return 0.0
    return lhs / rhs


# -------------------------------------------------------------- Bernstein


def bernstein_l2_ratio(f: SpectralField, j: int, alpha: float) -> float:
    """``||Lambda^{2 alpha} f|| / (2^{2 alpha j} ||f||)`` for ``f`` localized on shell ``j``."""
    n = sobolev_norm(f, 0.0)
    if n == 0:
        return 0.0
    return sobolev_norm(f, 2 * alpha) / (2.0 ** (2 * alpha * j) * n)


def bernstein_lp_ratio(f: SpectralField, j: int, alpha: float, p: float, q: float) -> float:
    """``||Lambda^{2 alpha} f||_{L^q} / (2^{2 alpha j + j d (1/p - 1/q)} ||f||_{L^p})``."""
    d = f.grid.d
    scale = 2.0 ** (2 * alpha * j + j * d * (1.0 / p - 1.0 / q))
    return gs.lp_norm(gs.lambda_power(f, 2 * alpha), q) / (scale * gs.lp_norm(f, p))


def shell_kernel(grid: Grid, j: int, partition: DyadicPartition | None = None) -> gs.ScalarField:
    """The Littlewood-Paley kernel ``Phi_j`` itself (all Fourier phases zero)."""
    if partition is None:
        partition = build_partition(grid)
    return gs.ScalarField(grid, (partition.multiplier(j) * grid.nyquist_mask)[None].astype(complex))


# -------------------------------------------------------------- decay fits


@dataclass
class FitResult:
    slope: float
    intercept: float
    rms: float
    window: tuple[float, float]
    count: int
    algebraic: bool = True

    def to_json(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "rms": self.rms,
            "window": list(self.window),
            "count": self.count,
            "algebraic": self.algebraic,
        }


def fit_power_law(t, y, window=(10.0, 1e3), min_points: int = 8, algebraic_rms: float = 0.05) -> FitResult:
    """Least-squares fit of ``log y`` against ``log(1 + t)`` inside ``window``."""
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    t0, t1 = window
    if not t0 < t1:
        raise ValueError(f"degenerate window [{t0}, {t1}]")
    sel = (t >= t0) & (t <= t1)
    n = int(sel.sum())
    if n < min_points:
        raise ValueError(f"degenerate window: {n} points in [{t0}, {t1}], need at least {min_points}")
    ys = y[sel]
    if np.any(ys <= 0) or not np.all(np.isfinite(ys)):
        raise ValueError("fit_decay needs positive finite values")
    x = np.log1p(t[sel])
    ly = np.log(ys)
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    res = ly - (slope * x + icpt)
    rms = float(np.sqrt(np.mean(res**2)))
    ts = t[sel]
    return FitResult(float(slope), float(icpt), rms, (float(ts[0]), float(ts[-1])), n, rms <= algebraic_rms)


def fit_decay(series: NormSeries, label: str, window=(10.0, 1e3), **kw) -> FitResult:
    return fit_power_law(series.t(), series.column(label), window, **kw)


# ------------------------------------------------------ commutator / product


@dataclass(frozen=True)
class CommutatorExponents:
    """Lebesgue exponents of the commutator bound; ``1/p = 1/p1 + 1/q1 = 1/p2 + 1/q2``."""

    p: float = 2.0
    r: float = 1.0
    p1: float = math.inf
    q1: float = 2.0
    p2: float = 2.0
    q2: float = math.inf

    def __post_init__(self):
        inv = lambda x: 0.0 if math.isinf(x) else 1.0 / x
        if abs(inv(self.p) - inv(self.p1) - inv(self.q1)) > 1e-12 or abs(inv(self.p) - inv(self.p2) - inv(self.q2)) > 1e-12:
            raise ValueError("exponents must satisfy 1/p = 1/p1 + 1/q1 = 1/p2 + 1/q2")


def _advect_components(u_phys: np.ndarray, grad_v: np.ndarray) -> np.ndarray:
    """``sum_i u_i grad_v[i, c]`` for each component ``c`` (physical samples)."""
    return np.einsum("i...,ic...->c...", u_phys, grad_v)


def commutator(u: VectorField, v: SpectralField, j: int, partition: DyadicPartition) -> SpectralField:
    """``Delta_j (u . grad v) - u . Delta_j (grad v)`` with dealiased products."""
    g = u.grid
    u = gs.dealias(u)
    v = gs.dealias(v)
    up = gs.transform_inverse(u)
    ik = 1j * g.xi
    gv = ik[:, None] * v.coeffs[None]  # (d, ncomp, ...)
    gv_j = gv * partition.multiplier(j)
    nc = v.coeffs.shape[0]
    inv = lambda c: gs.transform_inverse(gs.ScalarField(g, c[None]))[0]
    grad = np.array([[inv(gv[i, c]) for c in range(nc)] for i in range(g.d)])
    grad_j = np.array([[inv(gv_j[i, c]) for c in range(nc)] for i in range(g.d)])
    a = gs.dealias(gs.transform_forward(_advect_components(up, grad), g, kind=v.kind))
    b = gs.dealias(gs.transform_forward(_advect_components(up, grad_j), g, kind=v.kind))
    return block(a, j, partition) - b


def commutator_check(
    u: VectorField,
    v: SpectralField,
    s: float,
    exps: CommutatorExponents = CommutatorExponents(),
    j: int | None = None,
    partition: DyadicPartition | None = None,
) -> float:
    """Ratio of the commutator sum to the right-hand side of the commutator lemma.

    LHS: ``|| (2^{js} ||[Delta_j, u.grad] v||_{L^p})_j ||_{l^r}`` (a single
    shell if ``j`` is given); RHS: ``||grad u||_{L^p1} ||v||_{B^s_{q1,r}} +
    ||v||_{L^q2} ||grad u||_{B^s_{p2,r}}``.
    """
    if not s > -1:
        raise ValueError("commutator estimate needs s > -1")
    g = u.grid
    if partition is None:
        partition = build_partition(g)
    gu = gs.gradient(u)
    if not np.any(gu.coeffs):
        # constant u commutes with every Fourier multiplier
        return 0.0
    shells = [j] if j is not None else list(partition.shells)
    seq = []
    for jj in shells:
        c = commutator(u, v, jj, partition)
        per = gs._lp_components(gs.transform_inverse(c), exps.p, g)
        seq.append(2.0 ** (jj * s) * math.sqrt(float(np.sum(c.component_weights * per**2))))
    seq = np.array(seq)
    lhs = float(seq.max()) if math.isinf(exps.r) else float(np.sum(seq**exps.r) ** (1 / exps.r))
    if lhs == 0.0:
        return 0.0
    rhs = gs.lp_norm(gu, exps.p1) * besov_norm(v, s, exps.q1, exps.r, partition) + gs.lp_norm(v, exps.q2) * besov_norm(
        gu, s, exps.p2, exps.r, partition
    )
    return lhs / (rhs + TINY)


def product_estimate_check(u: VectorField, tau: SymTensorField, b: float = 0.0, partition: DyadicPartition | None = None) -> float:
    """``||Q(grad u, tau)||_{B^{d/2}_{2,1}} / (||tau||_{B^{d/2}_{2,1}} ||u||_{B^{d/2+1}_{2,1}})``."""
    g = u.grid
    d = g.d
    if partition is None:
        partition = build_partition(g)
    q = compute_Q(gs.gradient(u), tau, b)
    num = besov_norm(q, d / 2, 2, 1, partition)
    if num == 0.0:
        return 0.0
    den = besov_norm(tau, d / 2, 2, 1, partition) * besov_norm(u, d / 2 + 1, 2, 1, partition)
    return num / (den + TINY)


def random_sample(grid: Grid, kind: str, rng: np.random.Generator, k_max_frac: float = 1 / 6):
    """Random mean-zero field with random spectral slope and band limit (for ratio sweeps).

    The band limit scales with the grid so that refining ``N`` explores
    higher frequencies.
    """
    slope = rng.uniform(0.5, 3.0)
    kc = grid.k0 * rng.uniform(2.0, max(2.0, k_max_frac * grid.N))
    amp = lambda r: np.where(r > 0, np.maximum(r, grid.k0) ** -slope * np.exp(-((r / kc) ** 2)), 0.0)
    f = gs.random_field(grid, kind, rng, amp)
    if kind == "vector":
        f = gs.leray_project(f)
    return gs.dealias(f)


def ratio_sweep(
    kind: str,
    n_samples: int = 200,
    Ns: Iterable[int] = (32, 64),
    d: int = 2,
    L: float = 2 * math.pi,
    seed: int = 0,
    s: float = 0.5,
    b: float = 0.5,
    max_median_bound: float = 20.0,
    stability_bound: float = 2.0,
) -> Verdict:
    """Uniformity sweep of ``commutator`` or ``product`` ratios over random pairs and grids.

    Soft verdict: ``max/median < max_median_bound`` on every grid and the
    per-grid maxima differ by less than ``stability_bound``.
    """
    if kind not in ("commutator", "product"):
        raise ValueError(f"unknown sweep {kind!r}")
    stats = {}
    for N in Ns:
        g = Grid(d, N, L)
        part = build_partition(g)
        rng = np.random.default_rng([seed, N])
        ratios = []
        for _ in range(n_samples):
            u = random_sample(g, "vector", rng)
            if kind == "commutator":
                v = random_sample(g, "scalar", rng)
                ratios.append(commutator_check(u, v, s, partition=part))
            else:
                tau = random_sample(g, "symtensor", rng)
                ratios.append(product_estimate_check(u, tau, b, part))
        r = np.array(ratios)
        med = float(np.median(r))
        stats[N] = {"max": float(r.max()), "median": med, "min": float(r.min()), "max_over_median": float(r.max() / max(med, TINY))}
    maxes = [v["max"] for v in stats.values()]
    stab = max(maxes) / max(min(maxes), TINY)
    worst_mm = max(v["max_over_median"] for v in stats.values())
    ok = worst_mm < max_median_bound and stab < stability_bound
    details = {"per_grid": {str(k): v for k, v in stats.items()}, "max_stability": stab, "worst_max_over_median": worst_mm, "samples": n_samples, "d": d}
    return Verdict(f"{kind}_uniformity", ok, residual=worst_mm, soft=True, details=details)


# ------------------------------------------------------------- recorder


def make_recorder(
    params: ModelParams,
    grid: Grid,
    ks: Iterable[float] = (0.0,),
    sigma: float | None = None,
    cancel_ks: Iterable[float] = (0.0, 1.0, 2.5),
    interp_pairs: Iterable[tuple[float, float]] = (),
    besov: Iterable[tuple[str, float, float, float]] = (),
) -> Callable[[SimulationState], dict]:
    """Hook for :func:`oldroyd_dynamics.simulate` recording the standard labels.

    Labels: ``E_H{k}``, ``D_H{k}``, ``u_H{k}``, ``tau_H{k}`` per ``k``;
    ``u_Bcrit``, ``tau_Bcrit``, ``u_Bdiss``; ``E_H-{sigma}`` and
    ``tau_mean`` when ``sigma`` is set; ``u_B{s}_{p}{r}``/``tau_B..`` for
    extra Besov entries; and the diagnostics ``div_u``, ``cancel_max``,
    ``interp_ratio_max``.
    """
    ks = list(ks)
    cancel_ks = list(cancel_ks)
    interp_pairs = list(interp_pairs)
    besov = list(besov)
    part = build_partition(grid)
    d = grid.d
    if sigma is not None:
        _check_sigma(sigma, d, strict_positive=False)

    def hook(state: SimulationState) -> dict:
        st = SimulationState(state.u, state.tau, state.t, params)
        out = {}
        for k in ks:
            lab = _label(k)
            hu, ht = sobolev_norm(st.u, k), sobolev_norm(st.tau, k)
            out[f"E_H{lab}"] = params.mu2 * hu**2 + params.mu1 * ht**2
            out[f"D_H{lab}"] = dissipation_hk(st, k)
            out[f"u_H{lab}"] = hu
            out[f"tau_H{lab}"] = ht
        bu = block_norms(st.u, 2, part)
        bt = block_norms(st.tau, 2, part)
        out["u_Bcrit"] = sum(2.0 ** (j * (d / 2 - 1)) * v for j, v in bu.items())
        out["tau_Bcrit"] = sum(2.0 ** (j * (d / 2)) * v for j, v in bt.items())
        out["u_Bdiss"] = sum(2.0 ** (j * (d / 2 + 1)) * v for j, v in bu.items())
        for comp, s, p, r in besov:
            f = st.u if comp == "u" else st.tau
            out[f"{comp}_B{_label(s)}_{_label(p)}{_label(r)}"] = besov_norm(f, s, p, r, part)
        if sigma is not None:
            out[f"E_H-{_label(sigma)}"] = negative_sobolev_energy(st, sigma)
            out["tau_mean"] = float(np.sqrt(np.sum(st.tau.component_weights * np.abs(st.tau.mean()) ** 2)))
        out["div_u"] = st.u.divergence_defect()
        out["cancel_max"] = max((cancellation_check(st.u, st.tau, k) for k in cancel_ks), default=0.0)
        out["interp_ratio_max"] = max((interpolation_ratio(st.u, s, sg) for s, sg in interp_pairs), default=0.0)
        return out

    return hook


def negative_sobolev_monitor(series: NormSeries, sigma: float, d: int, factor: float = 2.0) -> Verdict:
    """Boundedness verdict for ``E_H-{sigma}``: ``sup_t <= factor * initial``."""
    _check_sigma(sigma, d)
    y = series.column(f"E_H-{_label(sigma)}")
    t = series.t()
    if not len(y):
        return Verdict("negative_sobolev", True, None, residual=0.0)
    ratio = float(y.max() / max(y[0], TINY)) if y[0] > 0 else (0.0 if y.max() == 0 else math.inf)
    nonincreasing = bool(np.all(np.diff(y) <= 1e-9 * np.maximum(y[:-1], TINY)))
    return Verdict(
        "negative_sobolev",
        ratio <= factor,
        (float(t[0]), float(t[-1])),
        residual=ratio,
        details={"sigma": sigma, "sup_over_initial": ratio, "bound": factor, "nonincreasing": nonincreasing},
    )


def threshold_check(series: NormSeries, label: str, tol: float, name: str | None = None) -> Verdict:
    """``max_t value <= tol`` (for diagnostics such as ``cancel_max``)."""
    y = series.column(label)
    worst = float(y.max()) if len(y) else 0.0
    t = series.t()
    return Verdict(name or f"max_{label}", worst <= tol, (float(t[0]), float(t[-1])) if len(t) else None, residual=worst, details={"tol": tol})
