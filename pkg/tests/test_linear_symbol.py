import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oldroyd_lab import linear_symbol as ls
from oldroyd_lab import monitors as mon
from oldroyd_lab.grid_spectral import sym_weights
from oldroyd_lab.params import ModelParams

STANDARD = ModelParams(mu=1, mu1=1, mu2=1, a=1, b=0.5)
params_st = st.builds(
    ModelParams,
    mu=st.floats(0.1, 5),
    mu1=st.floats(0.1, 5),
    mu2=st.floats(0.1, 5),
    a=st.floats(0.1, 5),
    b=st.floats(-1, 1),
)


def xi_st(d):
    return st.lists(st.floats(-20, 20), min_size=d, max_size=d).map(np.array)


def div_free_vector(xi, rng):
    d = len(xi)
    u = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    if xi @ xi > 0:
        u -= xi * (xi @ u) / (xi @ xi)
    m = d * (d + 1) // 2
    return np.concatenate([u, rng.standard_normal(m) + 1j * rng.standard_normal(m)])


class TestSymbol:
    @pytest.mark.parametrize("d", [2, 3])
    def test_zero_frequency_blocks(self, d):
        G = ls.propagator(ls.assemble_symbol(np.zeros(d), STANDARD), 2.0)
        n = ls.state_size(d)
        assert np.allclose(G[:d, :d], np.eye(d), atol=1e-14)
        assert np.allclose(G[d:, d:], np.exp(-2.0) * np.eye(n - d), atol=1e-14)
        assert np.allclose(G[:d, d:], 0) and np.allclose(G[d:, :d], 0)

    def test_heat_decoupling(self):
        p = STANDARD.replace(strict=False, mu1=0.0)
        xi = np.array([1.0, 2.0])
        G = ls.propagator(ls.assemble_symbol(xi, p), 0.7)
        P = np.eye(2) - np.outer(xi, xi) / 5
        assert np.allclose(G[:2, :2], np.exp(-5 * 0.7) * P + (np.eye(2) - P), atol=1e-13)
        assert np.allclose(G[:2, 2:], 0, atol=1e-14)

    def test_state_size(self):
        assert ls.state_size(2) == 5 and ls.state_size(3) == 9

    def test_realness_after_substitution(self):
        # tau = i tau' makes M real
        xi = np.array([0.3, -1.2, 0.8])
        M = ls.assemble_symbol(xi, STANDARD).M
        S = np.diag(np.concatenate([np.ones(3), 1j * np.ones(6)]))
        assert np.abs((np.linalg.inv(S) @ M @ S).imag).max() < 1e-15

    def test_negative_time(self):
        with pytest.raises(ValueError):
            ls.propagator(ls.assemble_symbol(np.ones(2), STANDARD), -1)

    @settings(max_examples=60, deadline=None)
    @given(st.sampled_from([2, 3]).flatmap(lambda d: st.tuples(xi_st(d), params_st, st.integers(0, 2**31))))
    def test_dissipativity(self, args):
        xi, p, seed = args
        sym = ls.assemble_symbol(xi, p)
        v = div_free_vector(xi, np.random.default_rng(seed))
        got, exp = sym.dissipation(v), sym.dissipation_expected(v)
        scale = max(abs(exp), 1e-300)
        assert abs(got - exp) <= 1e-12 * scale + 1e-12
        assert got <= 1e-12 * scale

    @settings(max_examples=40, deadline=None)
    @given(st.sampled_from([2, 3]).flatmap(lambda d: st.tuples(xi_st(d), params_st)), st.floats(0, 3), st.floats(0, 3))
    def test_semigroup(self, args, t, s):
        xi, p = args
        sym = ls.assemble_symbol(xi, p)
        lhs = ls.propagator(sym, t + s)
        rhs = ls.propagator(sym, t) @ ls.propagator(sym, s)
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(1.0, np.abs(rhs).max())

    @settings(max_examples=30, deadline=None)
    @given(st.sampled_from([2, 3]).flatmap(lambda d: st.tuples(xi_st(d), params_st, st.integers(0, 2**31))))
    def test_weighted_contraction(self, args):
        xi, p, seed = args
        sym = ls.assemble_symbol(xi, p)
        w = sym.weights
        v = div_free_vector(xi, np.random.default_rng(seed))
        e0 = np.sum(w * np.abs(v) ** 2)
        for t in np.linspace(0, 5, 100):
            vt = ls.propagator(sym, t) @ v
            assert np.sum(w * np.abs(vt) ** 2) <= e0 * (1 + 1e-10)

    def test_spectrum_sweep(self):
        rng = np.random.default_rng(0)
        for d in (2, 3):
            dirs = rng.standard_normal((10_000, d))
            dirs /= np.linalg.norm(dirs, axis=1)[:, None]
            xi = (dirs * rng.uniform(0.1, 10, 10_000)[:, None]).T
            lam = np.linalg.eigvals(ls.symbol_matrices(xi, STANDARD))
            assert lam.real.max() <= 1e-12

    def test_coalescent_radius_fallback(self):
        # mu = a = 1 has a double eigenvalue near |xi| = 1; the fallback keeps exp(tM) accurate
        import scipy.linalg as sla

        for r in np.linspace(0.9, 1.1, 41):
            M = ls.assemble_symbol(np.array([r, 0.0]), STANDARD).M
            assert np.abs(ls.propagator_batch(M[None], 1.3)[0] - sla.expm(1.3 * M)).max() < 1e-10


class TestEigen:
    @pytest.mark.parametrize("d", [2, 3])
    def test_slow_rate_constant(self, d):
        c, q = ls.slow_rate_constant(STANDARD, d)
        assert np.abs(q / c - 1).max() < 1e-3
        # recorded value for the standard parameters
        assert c == pytest.approx(1.5, rel=1e-6)

    @pytest.mark.parametrize("d", [2, 3])
    def test_heat_slow_eigenvalue(self, d):
        p = STANDARD.replace(strict=False, mu1=0.0)
        xi = np.linspace(0.03, 0.11, d)
        ea = ls.eigen_analysis(ls.assemble_symbol(xi, p))
        assert np.allclose(ea.slow, -(xi @ xi), rtol=1e-12)

    def test_direction_independent(self):
        c1, _ = ls.slow_rate_constant(STANDARD, 3, direction=[1, 0, 0])
        c2, _ = ls.slow_rate_constant(STANDARD, 3, direction=[1, 2, -1])
        assert c1 == pytest.approx(c2, rel=1e-8)

    def test_separation_and_ratio(self):
        r = 1e-2
        ea = ls.eigen_analysis(ls.assemble_symbol(np.array([r, 0.0, 0.0]), STANDARD))
        assert ea.separated and len(ea.slow) == 2
        # slow eigenvector stress is O(|xi|)
        assert np.all(ea.slow_stress_ratio < 10 * r)

    def test_zero_xi_rejected(self):
        with pytest.raises(ValueError):
            ls.eigen_analysis(ls.assemble_symbol(np.zeros(2), STANDARD))


class TestDecay:
    @pytest.mark.parametrize("d,sigma,k,comp", [(2, 0.5, 0, "u"), (3, 1.0, 1, "u"), (3, 1.0, 0, "tau"), (2, 0.0, 2, "tau")])
    def test_initial_closed_form(self, d, sigma, k, comp):
        prof = ls.DecayProfile(d, sigma, 0.1, k, comp)
        assert ls.decay_norm_quadrature(prof, 0.0, STANDARD) == pytest.approx(ls.initial_norm_closed_form(prof), rel=1e-8)

    def test_profile_validation(self):
        with pytest.raises(ValueError, match="0 ≤ σ < d/2"):
            ls.DecayProfile(2, 1.0)
        with pytest.raises(ValueError):
            ls.DecayProfile(4, 0.5)
        with pytest.raises(ValueError):
            ls.DecayProfile(2, 0.5, component="p")

    def test_heat_only_slope(self):
        p = STANDARD.replace(strict=False, mu1=0.0)
        prof = ls.DecayProfile(2, 0.5, 0.1, 1, "u")
        t = np.geomspace(10, 1000, 15)
        fit = mon.fit_power_law(t, ls.decay_series(prof, t, p), (10, 1000))
        assert abs(fit.slope - prof.predicted_slope) <= 0.03

    def test_stress_gap(self):
        t = np.geomspace(10, 1000, 15)
        pu = ls.DecayProfile(3, 1.0, 0.1, 0, "u")
        pt = ls.DecayProfile(3, 1.0, 0.1, 0, "tau")
        su = mon.fit_power_law(t, ls.decay_series(pu, t, STANDARD), (10, 1000)).slope
        st_ = mon.fit_power_law(t, ls.decay_series(pt, t, STANDARD), (10, 1000)).slope
        assert st_ - su == pytest.approx(-0.5, abs=0.08)

    def test_derivative_gap(self):
        t = np.geomspace(10, 1000, 15)
        s0 = mon.fit_power_law(t, ls.decay_series(ls.DecayProfile(2, 0.5, 0.1, 0, "u"), t, STANDARD), (10, 1000)).slope
        s1 = mon.fit_power_law(t, ls.decay_series(ls.DecayProfile(2, 0.5, 0.1, 1, "u"), t, STANDARD), (10, 1000)).slope
        assert s1 - s0 == pytest.approx(-0.5, abs=0.05)

    @pytest.mark.parametrize("comp", ["u", "tau"])
    @pytest.mark.parametrize("t", [0.0, 1.0, 10.0])
    def test_polar_grid_matches_radial(self, comp, t):
        prof = ls.DecayProfile(2, 0.5, 0.1, 0, comp)
        a = ls.polar_tensor_norm(prof, t, STANDARD)
        b = ls.decay_norm_quadrature(prof, t, STANDARD)
        assert abs(a / b - 1) <= 1e-4

    def test_upper_bound_not_trending(self):
        # ||u(t)|| (1+t)^{(sigma+eps0)/2} stays bounded and flattens
        prof = ls.DecayProfile(2, 0.5, 0.1, 0, "u")
        t = np.geomspace(10, 1000, 15)
        scaled = ls.decay_series(prof, t, STANDARD) * (1 + t) ** ((prof.sigma + prof.eps0) / 2)
        fit = mon.fit_power_law(t, scaled, (10, 1000))
        assert abs(fit.slope) < 0.05
        assert scaled.max() / scaled.min() < 1.5

    def test_lattice_evolve_zero_time(self):
        rng = np.random.default_rng(0)
        xi = rng.standard_normal((2, 4, 4))
        w = rng.standard_normal((5, 4, 4)) + 0j
        assert np.allclose(ls.lattice_evolve(w, xi, 0.0, STANDARD), w)

    def test_weights(self):
        assert np.array_equal(ls.weight_vector(2, STANDARD.replace(mu2=3.0, mu1=2.0)), np.r_[3.0, 3.0, 2 * sym_weights(2)])
