import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linear_sum_assignment

from mlsi_lab.convex_core import GridFunction, gaussian_potential, power_potential
from mlsi_lab.errors import CapacityError, SupNotLocalized
from mlsi_lab.functionals import bump, constant, linear
from mlsi_lab.prekopa_transport import (check_transport, cost_matrix, exhaustive_assignment, hungarian,
                                        lemma_expansion_order, optimal_coupling, pl_check, pl_majorant,
                                        quantile_points, sup_convolution, wasserstein_L)
from mlsi_lab.quadrature import scenario_rule

G1 = gaussian_potential(1)


class TestSupConvolution:
    @pytest.mark.parametrize("z", [-1.0, 0.0, 0.4])
    def test_zero_function(self, z):
        r = sup_convolution(power_potential(4), constant(0.0), 0.1, z)
        assert abs(r.value) <= 1e-12
        assert r.argmax[0] == pytest.approx(z, abs=1e-5)

    def test_matches_fine_brute_force(self):
        g = bump()
        s, z = 0.05, 0.3
        y = np.linspace(-4, 4, 400001)
        x = (z - s * y) / (1 - s)
        brute = np.max(g.func(x[:, None]) - (1 - s) * x ** 2 / 2 - s * y ** 2 / 2 + z ** 2 / 2)
        assert sup_convolution(G1, g, s, z).value == pytest.approx(brute, abs=1e-9)

    def test_argmax_limit_solves_gradient_equation(self):
        g = bump(radius=1.5)
        z = 0.5
        y0 = z - float(np.ravel(g.gradient(z))[0])
        errs = [abs(sup_convolution(G1, g, s, z).argmax[0] - y0) for s in (1e-2, 1e-3)]
        assert errs[1] < errs[0] and errs[1] < 1e-2

    def test_boundary_argmax_raises(self):
        with pytest.raises(SupNotLocalized):
            sup_convolution(G1, linear(1.0), 0.1, 0.0, y_axes=[np.linspace(-0.1, 0.1, 11)])

    def test_s_range(self):
        with pytest.raises(ValueError):
            sup_convolution(G1, linear(1.0), 0.6, 0.0)

    def test_two_dimensional(self):
        P = gaussian_potential(2)
        r = sup_convolution(P, constant(0.0, dim=2), 0.1, [0.2, -0.3])
        np.testing.assert_allclose(r.argmax, [0.2, -0.3], atol=1e-5)


class TestExpansionOrder:
    def test_gaussian_bump(self):
        o = lemma_expansion_order(G1, bump())
        assert 1.8 <= o.slope <= 2.2

    def test_zero_is_exact(self):
        o = lemma_expansion_order(G1, constant(0.0))
        assert o.exact and o.slope is None

    def test_linear_decays_at_second_order(self):
        o = lemma_expansion_order(G1, linear(0.5))
        assert o.exact or o.slope >= 1.8


class TestPrekopaLeindler:
    AX = (np.linspace(-4, 4, 161),)

    def test_indicator_equality(self):
        ax = np.linspace(-1, 2, 301)
        ind = GridFunction((ax,), ((ax >= 0) & (ax <= 1)).astype(float))
        r = pl_check(ind, ind, ind)
        assert r.hypothesis_holds and r.conclusion_holds
        assert r.lhs == pytest.approx(r.rhs, rel=1e-12)

    def test_gaussian_equality(self):
        f = GridFunction.sample(lambda x: np.exp(-x[..., 0] ** 2), self.AX)
        r = pl_check(f, f, f)
        assert r.hypothesis_holds and r.conclusion_holds
        assert r.lhs == pytest.approx(math.sqrt(math.pi), rel=1e-6)

    def test_halved_w_fails_hypothesis(self):
        f = GridFunction.sample(lambda x: np.exp(-x[..., 0] ** 2), self.AX)
        half = GridFunction(f.axes, 0.5 * f.values)
        r = pl_check(f, f, half)
        assert not r.hypothesis_holds and r.conclusion_holds is None

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5), st.floats(0.2, 2.0), st.floats(0.1, 0.9))
    def test_majorant_implies_conclusion(self, a, b, k, t):
        ax = (np.linspace(-4, 4, 81),)
        u = GridFunction.sample(lambda x: np.exp(-k * (x[..., 0] - a) ** 2), ax)
        v = GridFunction.sample(lambda x: np.exp(-(x[..., 0] - b) ** 4), ax)
        r = pl_check(u, v, pl_majorant(u, v, t), t=t)
        assert r.hypothesis_holds and r.conclusion_holds

    def test_rejects_negative(self):
        ax = (np.linspace(0, 1, 5),)
        f = GridFunction(ax, np.array([1.0, -1.0, 1.0, 1.0, 1.0]))
        with pytest.raises(ValueError):
            pl_check(f, f, f)


def brute_cost(C):
    return min(sum(C[i, p[i]] for i in range(len(p))) for p in itertools.permutations(range(C.shape[0])))


class TestAssignment:
    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 7), st.integers(0, 2 ** 31))
    def test_hungarian_matches_permutations(self, k, seed):
        C = np.random.default_rng(seed).uniform(0, 10, (k, k))
        perm = hungarian(C)
        assert sorted(perm) == list(range(k))
        assert sum(C[i, perm[i]] for i in range(k)) == pytest.approx(brute_cost(C), abs=1e-9)

    @pytest.mark.parametrize("k", [9, 11, 12])
    def test_dp_matches_scipy(self, k):
        C = np.random.default_rng(k).uniform(0, 1, (k, k))
        r, c = linear_sum_assignment(C)
        perm = exhaustive_assignment(C)
        assert sum(C[i, perm[i]] for i in range(k)) == pytest.approx(C[r, c].sum(), abs=1e-12)

    def test_hungarian_large_matches_scipy(self):
        C = np.random.default_rng(0).normal(size=(120, 120))
        r, c = linear_sum_assignment(C)
        perm = hungarian(C)
        assert C[np.arange(120), perm].sum() == pytest.approx(C[r, c].sum(), abs=1e-9)

    def test_exhaustive_capacity(self):
        with pytest.raises(CapacityError):
            exhaustive_assignment(np.zeros((13, 13)))

    def test_square_only(self):
        with pytest.raises(ValueError):
            hungarian(np.zeros((2, 3)))


class TestCoupling:
    def test_identity_is_free(self):
        x = np.linspace(-1, 1, 7)
        assert wasserstein_L(G1, x, x) == pytest.approx(0.0, abs=1e-15)

    def test_single_pair(self):
        assert wasserstein_L(G1, [0.0], [2.0]) == pytest.approx(2.0)

    def test_cost_is_bregman(self):
        C = cost_matrix(power_potential(3), [1.0], [2.0])
        assert C[0, 0] == pytest.approx(4 / 3)

    def test_lp_and_assignment_agree(self):
        rng = np.random.default_rng(3)
        x, y = rng.normal(size=10), rng.normal(size=10)
        a = optimal_coupling(G1, x, y, method="assignment")
        b = optimal_coupling(G1, x, y, method="lp")
        assert a.cost == pytest.approx(b.cost, abs=1e-10)
        assert b.marginal_error() < 1e-10

    def test_unequal_masses_use_lp(self):
        c = optimal_coupling(G1, [0.0, 1.0], [0.5], source_mass=[0.25, 0.75], target_mass=[1.0])
        assert c.method == "lp"
        assert c.cost == pytest.approx(0.25 * 0.125 + 0.75 * 0.125)

    def test_mass_mismatch(self):
        with pytest.raises(ValueError):
            optimal_coupling(G1, [0.0], [1.0], source_mass=[1.0], target_mass=[2.0])

    def test_csv(self, tmp_path):
        c = optimal_coupling(G1, [0.0, 1.0], [1.0, 0.0])
        c.to_csv(tmp_path / "c.csv")
        assert (tmp_path / "c.csv").read_text().splitlines()[0] == "x1,y1,mass"

    def test_shifted_gaussian_quantiles(self):
        ax = np.linspace(-9, 10, 4001)
        src = quantile_points(np.exp(-(ax - 1) ** 2 / 2), ax, 64)
        tgt = quantile_points(np.exp(-ax ** 2 / 2), ax, 64)
        assert wasserstein_L(G1, src, tgt) == pytest.approx(0.5, abs=0.05)


class TestQuantiles:
    def test_uniform(self):
        ax = np.linspace(0, 1, 11)
        np.testing.assert_allclose(quantile_points(np.ones(11), ax, 4), [0.125, 0.375, 0.625, 0.875])

    def test_linear_density_exact(self):
        # density 2x on [0, 1]: quantile u is sqrt(u)
        ax = np.linspace(0, 1, 3)
        np.testing.assert_allclose(quantile_points(2 * ax, ax, 4), np.sqrt((np.arange(4) + 0.5) / 4), atol=1e-14)

    def test_negative_density(self):
        with pytest.raises(ValueError):
            quantile_points(np.array([1.0, -1.0]), np.array([0.0, 1.0]), 2)


class TestTransportCheck:
    RULE = scenario_rule(G1)

    def test_constant_density(self):
        r = check_transport(G1, lambda x: np.ones(x.shape[0]), self.RULE)
        assert abs(r.lhs) < 1e-12 and abs(r.rhs) < 1e-12

    def test_shifted_gaussian_equality(self):
        r = check_transport(G1, lambda x: np.exp(x[:, 0] - 0.5), self.RULE)
        assert r.rhs == pytest.approx(0.5, abs=1e-8)
        assert abs(r.deficit) <= 0.05

    def test_narrow_gaussian(self):
        F = lambda x: 2.0 * np.exp(-1.5 * x[:, 0] ** 2)
        r = check_transport(G1, F, self.RULE)
        assert r.rhs == pytest.approx(0.5 * (0.25 - 1 - math.log(0.25)), abs=1e-6)
        assert r.passed

    def test_unnormalized_density_rejected(self):
        with pytest.raises(ValueError):
            check_transport(G1, lambda x: np.full(x.shape[0], 2.0), self.RULE)

    def test_two_dimensional_rejected(self):
        P = gaussian_potential(2)
        with pytest.raises(CapacityError):
            check_transport(P, lambda x: np.ones(x.shape[0]), scenario_rule(P, resolution=21))
