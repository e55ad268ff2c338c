import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oldroyd_lab import grid_spectral as gs
from oldroyd_lab.grid_spectral import Grid, ScalarField, SymTensorField, TensorField, VectorField


def rand_field(grid, kind, seed, slope=1.5, n_max=None):
    rng = np.random.default_rng(seed)
    amp = lambda r: np.where(r > 0, (1 + r) ** -slope, 0.0)
    return gs.random_field(grid, kind, rng, amp, n_max)


def mode(grid, n, amp=1.0, comp=0, kind="scalar"):
    """Real field amp * cos(xi(n).x) placed in component ``comp``."""
    cls = gs.field_class(kind)
    c = np.zeros((cls.ncomp(grid.d),) + grid.shape, complex)
    idx = tuple(int(x) % grid.N for x in n)
    nidx = tuple(int(-x) % grid.N for x in n)
    c[(comp,) + idx] += amp / 2
    c[(comp,) + nidx] += amp / 2
    return cls(grid, c)


grids = st.sampled_from([Grid(2, 8), Grid(2, 16, 3.0), Grid(3, 8), Grid(2, 12, 10.0)])
kinds = st.sampled_from(["scalar", "vector", "symtensor", "tensor"])
seeds = st.integers(0, 2**32 - 1)


class TestGrid:
    @pytest.mark.parametrize("d,N,L", [(1, 8, 1.0), (4, 8, 1.0), (2, 7, 1.0), (2, 6, 1.0), (2, 8, 0.0), (2, 8, -1.0)])
    def test_invalid(self, d, N, L):
        with pytest.raises(ValueError):
            Grid(d, N, L)

    def test_lattice_symmetric(self):
        g = Grid(2, 16)
        kept = g.n_int[:, g.nyquist_mask]
        as_set = {tuple(v) for v in kept.T}
        assert all(tuple(-np.array(v)) in as_set for v in as_set)

    def test_wavenumbers(self):
        g = Grid(3, 8, 4.0)
        assert np.allclose(g.xi, 2 * np.pi / 4.0 * g.n_int)
        # FFT ordering stores the (always zeroed) Nyquist index as -N/2
        assert g.n_int.max() == 3 and g.n_int.min() == -4


class TestTransforms:
    def test_constant(self):
        g = Grid(2, 16)
        f = gs.transform_forward(np.full(g.shape, 3.5), g)
        assert f.coeffs[0, 0, 0] == pytest.approx(3.5)
        c = f.coeffs.copy()
        c[0, 0, 0] = 0
        assert np.abs(c).max() < 1e-15

    def test_cosine(self):
        g = Grid(2, 16, 3.0)
        x = g.coordinates()
        f = gs.transform_forward(np.cos(2 * np.pi * x[0] / g.L), g)
        assert f.coeffs[0, 1, 0] == pytest.approx(0.5)
        assert f.coeffs[0, -1, 0] == pytest.approx(0.5)
        c = f.coeffs.copy()
        c[0, 1, 0] = c[0, -1, 0] = 0
        assert np.abs(c).max() < 1e-15

    def test_direct_dft_oracle(self):
        # O(N^{2d}) DFT on 8^2 against the FFT, then Parseval
        g = Grid(2, 8, 2.0)
        rng = np.random.default_rng(0)
        a = rng.standard_normal(g.shape)
        x = g.coordinates().reshape(2, -1)
        xi = g.xi.reshape(2, -1)
        F = np.exp(-1j * xi.T @ x) @ a.reshape(-1) / g.N**2
        f = gs.transform_forward(a, g, keep_nyquist=True)
        assert np.allclose(f.coeffs.reshape(-1), F, atol=1e-14)
        l2_phys = math.sqrt(np.sum(a**2) * g.dx**2)
        assert gs.l2_norm_spectral(f) == pytest.approx(l2_phys, rel=1e-12)

    def test_size_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            gs.transform_forward(np.zeros((8, 9)), Grid(2, 8))
        with pytest.raises(ValueError):
            gs.transform_forward(np.zeros((2, 8, 8)), Grid(2, 8), kind="symtensor")

    @settings(max_examples=30, deadline=None)
    @given(grids, kinds, seeds)
    def test_round_trip(self, g, kind, seed):
        f = rand_field(g, kind, seed)
        back = gs.transform_forward(gs.transform_inverse(f), g, kind=kind)
        assert np.abs(back.coeffs - f.coeffs).max() <= 1e-12 * np.abs(f.coeffs).max()

    def test_nyquist_zeroed(self):
        g = Grid(2, 8)
        rng = np.random.default_rng(1)
        f = gs.transform_forward(rng.standard_normal(g.shape), g)
        assert np.all(f.coeffs[0][~g.nyquist_mask] == 0)


class TestLambda:
    def test_single_mode(self):
        g = Grid(2, 16)
        f = mode(g, (2, 0))
        assert np.allclose(gs.lambda_power(f, 1).coeffs, 2 * f.coeffs)

    def test_identity(self):
        f = rand_field(Grid(2, 16), "vector", 3)
        assert np.array_equal(gs.lambda_power(f, 0).coeffs, f.coeffs)

    @settings(max_examples=25, deadline=None)
    @given(grids, seeds, st.floats(0.1, 2.5))
    def test_inverse(self, g, seed, s):
        f = rand_field(g, "scalar", seed)
        back = gs.lambda_power(gs.lambda_power(f, -s), s)
        assert np.abs(back.coeffs - f.coeffs).max() <= 1e-12 * np.abs(f.coeffs).max()

    def test_negative_order_needs_mean_zero(self):
        g = Grid(2, 8)
        f = gs.transform_forward(np.ones(g.shape), g)
        with pytest.raises(ValueError, match="negative-order operator on non-mean-zero field"):
            gs.lambda_power(f, -0.5)

    def test_zero_mode_dropped(self):
        g = Grid(2, 8)
        f = gs.transform_forward(np.ones(g.shape), g)
        assert np.all(gs.lambda_power(f, 1.0).coeffs == 0)


class TestDifferentialOps:
    def test_shear_point_values(self):
        # u = (0, sin x0) has grad u = [[0, cos x0], [0, 0]]; equal to [[0,1],[0,0]] at x0 = 0
        g = Grid(2, 16)
        x = g.coordinates()
        u = gs.transform_forward(np.array([np.zeros(g.shape), np.sin(x[0])]), g, kind="vector")
        D = gs.unpack_sym(gs.transform_inverse(gs.deformation_D(u)), 2)[..., 0, 0]
        W = gs.transform_inverse(gs.vorticity_Omega(u)).reshape(2, 2, *g.shape)[..., 0, 0]
        G = gs.transform_inverse(gs.gradient(u)).reshape(2, 2, *g.shape)[..., 0, 0]
        assert np.allclose(G, [[0, 1], [0, 0]], atol=1e-13)
        assert np.allclose(D, [[0, 0.5], [0.5, 0]], atol=1e-13)
        assert np.allclose(W, [[0, 0.5], [-0.5, 0]], atol=1e-13)

    def test_constant_velocity(self):
        g = Grid(3, 8)
        u = gs.transform_forward(np.ones((3,) + g.shape), g, kind="vector")
        assert np.all(gs.deformation_D(u).coeffs == 0)
        assert np.all(gs.vorticity_Omega(u).coeffs == 0)

    @settings(max_examples=20, deadline=None)
    @given(grids, seeds)
    def test_div_grad_is_minus_lambda2(self, g, seed):
        f = rand_field(g, "scalar", seed)
        lhs = gs.divergence(gs.gradient(f)).coeffs
        rhs = -gs.lambda_power(f, 2).coeffs
        assert np.abs(lhs - rhs).max() <= 1e-12 * np.abs(rhs).max()

    @settings(max_examples=20, deadline=None)
    @given(grids, seeds)
    def test_D_plus_Omega_and_trace(self, g, seed):
        u = rand_field(g, "vector", seed)
        G = gs.velocity_gradient(u)
        D = gs.deformation_D(u).full()
        W = gs.vorticity_Omega(u).full()
        assert np.array_equal(D + W, G) or np.abs(D + W - G).max() <= 1e-15 * np.abs(G).max()
        assert np.allclose(np.swapaxes(D, 0, 1), D) and np.allclose(np.swapaxes(W, 0, 1), -W)
        tr = sum(D[i, i] for i in range(g.d))
        assert np.abs(tr - gs.divergence(u).coeffs[0]).max() <= 1e-14 * np.abs(G).max()

    def test_tensor_divergence_convention(self):
        # (div tau)_j = d_i tau_ij: tau with only tau_01 = tau_10 = sin x0 gives (0, cos x0)
        g = Grid(2, 16)
        x = g.coordinates()
        full = np.zeros((2, 2) + g.shape)
        full[0, 1] = full[1, 0] = np.sin(x[0])
        tau = gs.transform_forward(gs.pack_sym(full, 2), g, kind="symtensor")
        dv = gs.transform_inverse(gs.divergence(tau))
        assert np.allclose(dv[0], 0, atol=1e-13) and np.allclose(dv[1], np.cos(x[0]), atol=1e-13)


class TestLeray:
    def test_gradient_annihilated(self):
        f = rand_field(Grid(2, 16), "scalar", 5)
        assert np.abs(gs.leray_project(gs.gradient(f)).coeffs).max() < 1e-14

    def test_hand_oracle(self):
        g = Grid(2, 16)
        x = g.coordinates()
        target = np.array([np.sin(x[1]), np.sin(x[0])])
        v = target + np.array([-np.sin(x[0]), np.zeros(g.shape)])  # + grad cos x0
        pv = gs.transform_inverse(gs.leray_project(gs.transform_forward(v, g, kind="vector")))
        assert np.allclose(pv, target, atol=1e-13)

    @settings(max_examples=25, deadline=None)
    @given(grids, seeds)
    def test_idempotent_and_orthogonal(self, g, seed):
        v = rand_field(g, "vector", seed)
        p1 = gs.leray_project(v)
        p2 = gs.leray_project(p1)
        assert np.abs(p2.coeffs - p1.coeffs).max() <= 1e-12 * np.abs(p1.coeffs).max()
        assert p1.is_divergence_free()
        phi = rand_field(g, "scalar", seed + 1)
        gp = gs.gradient(phi)
        ip = gs.inner_product(p1, gp)
        assert abs(ip) <= 1e-10 * gs.l2_norm_spectral(p1) * gs.l2_norm_spectral(gp)

    def test_divergence_free_unchanged(self):
        v = gs.leray_project(rand_field(Grid(3, 8), "vector", 2))
        assert np.abs(gs.leray_project(v).coeffs - v.coeffs).max() <= 1e-12 * np.abs(v.coeffs).max()


class TestDealias:
    def test_product_exact(self):
        g = Grid(2, 16)
        x = g.coordinates()
        f = gs.transform_forward(np.cos(x[0]), g)
        h = gs.transform_forward(np.cos(2 * x[0]), g)
        prod = gs.multiply_physical(f, h)
        # cos x cos 2x = (cos x + cos 3x) / 2: amplitude 1/4 at n = (+-3, 0)
        assert prod.coeffs[0, 3, 0] == pytest.approx(0.25, abs=1e-15)
        assert prod.coeffs[0, 1, 0] == pytest.approx(0.25, abs=1e-15)

    def test_constant_factor(self):
        g = Grid(2, 16)
        c = gs.transform_forward(np.full(g.shape, 2.5), g)
        v = gs.dealias(rand_field(g, "vector", 1))
        out = gs.multiply_physical(c, v)
        assert np.abs(out.coeffs - 2.5 * v.coeffs).max() < 1e-14

    def test_needs_scalar(self):
        g = Grid(2, 8)
        with pytest.raises(TypeError):
            gs.multiply_physical(VectorField.zeros(g), VectorField.zeros(g))

    def test_grid_mismatch(self):
        with pytest.raises(gs.GridMismatchError):
            gs.multiply_physical(ScalarField.zeros(Grid(2, 8)), ScalarField.zeros(Grid(2, 10)))

    @settings(max_examples=20, deadline=None)
    @given(grids, kinds, seeds)
    def test_idempotent(self, g, kind, seed):
        f = gs.dealias(rand_field(g, kind, seed))
        assert np.array_equal(gs.dealias(f).coeffs, f.coeffs)


class TestNorms:
    def test_constant(self):
        g = Grid(3, 8, 2.0)
        f = gs.transform_forward(np.ones(g.shape), g)
        assert gs.lp_norm(f, 2) == pytest.approx(math.sqrt(g.volume), rel=1e-14)

    def test_sine(self):
        g = Grid(2, 16, 3.0)
        x = g.coordinates()
        f = gs.transform_forward(np.sin(2 * np.pi * x[0] / g.L), g)
        assert gs.lp_norm(f, 2) == pytest.approx(math.sqrt(g.volume / 2), rel=1e-13)
        assert gs.lp_norm(f, np.inf) == pytest.approx(np.abs(gs.transform_inverse(f)).max())

    @settings(max_examples=25, deadline=None)
    @given(grids, kinds, seeds)
    def test_parseval(self, g, kind, seed):
        f = rand_field(g, kind, seed)
        assert gs.lp_norm(f, 2) == pytest.approx(gs.l2_norm_spectral(f), rel=1e-10)
        h = rand_field(g, kind, seed + 1)
        assert gs.inner_product(f, h) == pytest.approx(gs.inner_product_spectral(f, h), rel=1e-10, abs=1e-12)

    @pytest.mark.parametrize("p", [0.5, 0, -1])
    def test_invalid_p(self, p):
        with pytest.raises(ValueError):
            gs.lp_norm(ScalarField.zeros(Grid(2, 8)), p)

    def test_tensor_frobenius(self):
        # full-tensor and packed-symmetric storage give the same L^2 norm
        g = Grid(2, 8)
        tau = rand_field(g, "symtensor", 4)
        full = TensorField.from_full(g, tau.full())
        assert gs.lp_norm(tau, 2) == pytest.approx(gs.lp_norm(full, 2), rel=1e-13)


class TestHermitian:
    @settings(max_examples=20, deadline=None)
    @given(grids, seeds)
    def test_preserved(self, g, seed):
        u = rand_field(g, "vector", seed)
        f = rand_field(g, "scalar", seed + 3)
        outs = [
            gs.leray_project(u),
            gs.deformation_D(u),
            gs.vorticity_Omega(u),
            gs.gradient(f),
            gs.divergence(u),
            gs.lambda_power(f, 1.3),
            gs.multiply_physical(f, u),
            gs.dealias(u),
        ]
        for o in outs:
            assert o.hermitian_defect() <= 1e-12

    def test_symmetric_storage(self):
        g = Grid(3, 8)
        tau = rand_field(g, "symtensor", 0)
        T = tau.full()
        assert np.array_equal(T, np.swapaxes(T, 0, 1))
        assert SymTensorField.from_full(g, T).coeffs.shape[0] == 6
