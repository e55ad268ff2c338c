"""Exact-identity and property suites behind ``check-invariants``.

Each suite returns a :class:`~oldroyd_lab.monitors.Verdict`.  Hard suites
test identities that hold to rounding; the ratio sweeps are soft.
"""

from __future__ import annotations

import math

import numpy as np

from . import grid_spectral as gs
from . import monitors as mon
from .grid_spectral import Grid
from .littlewood_paley import besov_norm, block, build_partition, psi, sobolev_norm
from .monitors import Verdict


def tampered_profile(r):
    """Unnormalized annulus profile (negative control for the partition suite)."""
    return 1.1 * psi(r)


def partition_suite(grids, tamper: bool = False, tol: float = 1e-12) -> Verdict:
    worst = 0.0
    per = {}
    for g in grids:
        part = build_partition(g, tampered_profile if tamper else psi)
        res = part.unity_residual()
        per[f"{g.N}^{g.d}"] = res
        worst = max(worst, res)
    return Verdict("partition_of_unity", worst <= tol, residual=worst, details={"per_grid": per, "tol": tol, "tampered": tamper})


def bernstein_l2_suite(grids, rng, alphas=(0.5, 1.0), n_fields: int = 10) -> Verdict:
    """``||Lambda^{2a} f|| / (2^{2aj} ||f||)`` in ``[2^{-2a}, 2^{2a}]`` for shell-localized ``f``."""
    violations = 0
    count = 0
    lo_seen, hi_seen = math.inf, 0.0
    for g in grids:
        part = build_partition(g)
        for _ in range(n_fields):
            f0 = mon.random_sample(g, "scalar", rng, k_max_frac=1 / 3)
            for j in part.shells:
                f = block(f0, j, part)
                if sobolev_norm(f, 0) == 0:
                    continue
                for a in alphas:
                    r = mon.bernstein_l2_ratio(f, j, a)
                    count += 1
                    lo_seen, hi_seen = min(lo_seen, r / 2 ** (-2 * a)), max(hi_seen, r / 2 ** (2 * a))
                    if not 2 ** (-2 * a) <= r <= 2 ** (2 * a):
                        violations += 1
    return Verdict(
        "bernstein_l2",
        violations == 0,
        residual=float(violations),
        details={"checked": count, "violations": violations, "min_ratio_over_lower": lo_seen, "max_ratio_over_upper": hi_seen},
    )


def bernstein_lp_suite(
    N: int = 256, L: float = 2 * math.pi * 32, shells=(-1, 0, 1), alpha: float = 0.5, pq=((1.0, 2.0), (2.0, math.inf), (1.0, math.inf)), tol: float = 0.05
) -> Verdict:
    """Scaling structure of the L^p -> L^q Bernstein bound on the shell kernels.

    The ratio measured at ``j = 0`` must reproduce within ``tol`` at the
    shifted shells.
    """
    g = Grid(2, N, L)
    part = build_partition(g)
    ks = {j: mon.shell_kernel(g, j, part) for j in shells}
    worst = 0.0
    table = {}
    for p, q in pq:
        base = mon.bernstein_lp_ratio(ks[0], 0, alpha, p, q)
        row = {}
        for j in shells:
            r = mon.bernstein_lp_ratio(ks[j], j, alpha, p, q)
            row[str(j)] = r
            worst = max(worst, abs(r / base - 1))
        table[f"{p:g}->{q:g}"] = row
    return Verdict("bernstein_lp_scaling", worst <= tol, residual=worst, details={"ratios": table, "tol": tol, "alpha": alpha})


def interpolation_suite(grid: Grid, rng, n: int = 1000, pairs=((1.0, 0.5), (2.0, 1.0)), tol: float = 1e-12) -> Verdict:
    violations = 0
    worst = 0.0
    for _ in range(n):
        f = mon.random_sample(grid, "scalar", rng, k_max_frac=1 / 3)
        for s, sg in pairs:
            r = mon.interpolation_ratio(f, s, sg)
            worst = max(worst, r)
            if r > 1 + tol:
                violations += 1
    return Verdict(
        "interpolation",
        violations == 0,
        residual=worst,
        details={"fields": n, "pairs": [list(p) for p in pairs], "violations": violations, "max_ratio": worst, "tol": tol},
    )


def cancellation_suite(grids, rng, n: int = 50, ks=(0.0, 1.0, 2.5), tol: float = 1e-10) -> Verdict:
    worst = 0.0
    for g in grids:
        for _ in range(n):
            # the identity does not need a divergence-free u
            u = gs.dealias(gs.random_field(g, "vector", rng, lambda r: np.where(r > 0, (1 + r) ** -2.0, 0.0)))
            tau = mon.random_sample(g, "symtensor", rng)
            for k in ks:
                worst = max(worst, mon.cancellation_check(u, tau, k))
    return Verdict("cancellation", worst <= tol, residual=worst, details={"pairs_per_grid": n, "k": list(ks), "tol": tol})


def l2_equivalence_suite(grids, seeds=(0, 1, 2), n: int = 20, kc: float = 8.0, stability: float = 0.01) -> Verdict:
    """Two-sided bound ``c ||f|| <= ||f||_{B^0_{2,2}} <= C ||f||`` on mean-zero fields.

    On a lattice the sharp constants are ``c^2 = min sum_j Phi_j^2`` and
    ``C^2 = max sum_j Phi_j^2`` over the nonzero modes.  They are measured
    once per grid, must lie in ``[1/sqrt 2, 1]`` (at most two shells
    overlap) and agree within ``stability`` across grids of one dimension;
    random fields from every seed must fall inside ``[c, C]``.
    """
    amp = lambda r: np.where(r > 0, np.maximum(r, 1e-300) ** -1.0 * np.exp(-((r / kc) ** 2)), 0.0)
    by_d: dict[int, list] = {}
    outside = 0
    in_range = True
    for g in grids:
        part = build_partition(g)
        m = sum(part.multiplier(j) ** 2 for j in part.shells)
        mask = g.nyquist_mask & (g.xi_abs > 0)
        c, C = float(np.sqrt(m[mask].min())), float(np.sqrt(m[mask].max()))
        in_range &= 2**-0.5 - 1e-12 <= c <= C <= 1 + 1e-12
        by_d.setdefault(g.d, []).append((f"{g.N}^{g.d}", c, C))
        for seed in seeds:
            rng = np.random.default_rng([seed, g.N, g.d])
            for _ in range(n):
                # a sum of two unit-modulus random fields has random magnitudes
                f = gs.random_field(g, "scalar", rng, amp) + gs.random_field(g, "scalar", rng, amp)
                r = besov_norm(f, 0.0, 2, 2, part) / sobolev_norm(f, 0)
                outside += not (c * (1 - 1e-12) <= r <= C * (1 + 1e-12))
    spread = 0.0
    table = {}
    for d, rows in by_d.items():
        lo = np.array([x[1] for x in rows])
        hi = np.array([x[2] for x in rows])
        spread = max(spread, lo.max() / lo.min() - 1, hi.max() / hi.min() - 1)
        table[str(d)] = {name: [a, b] for name, a, b in rows}
    return Verdict(
        "l2_equivalence",
        bool(in_range and outside == 0 and spread <= stability),
        residual=spread,
        details={"constants": table, "stability_tol": stability, "in_range": bool(in_range), "fields_outside": int(outside)},
    )


def run_all(cfg, seed: int | None = None) -> list[Verdict]:
    v = cfg.values
    seed = v["init.seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    exact = [Grid(d, N) for N, d in v["invariants.exact_grids"]]
    grids2 = [g for g in exact if g.d == 2] or [Grid(2, 64)]
    out = [
        partition_suite(exact, v["invariants.tamper_partition"]),
        bernstein_l2_suite(exact, rng),
        bernstein_lp_suite(),
        interpolation_suite(grids2[0], rng, v["invariants.n_interp"]),
        cancellation_suite(exact, rng, v["invariants.n_cancel"]),
        # each grid paired with a refinement partner for the stability check
        l2_equivalence_suite(exact + [Grid(g.d, g.N // 2 if g.N >= 16 else 2 * g.N) for g in exact]),
    ]
    for kind in ("commutator", "product"):
        out.append(
            mon.ratio_sweep(kind, v["invariants.n_sweep"], v["invariants.sweep_N"], v["invariants.sweep_d"], seed=seed, b=v["params.b"])
        )
    return out
