import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mlsi_lab.convex_core import Potential, gaussian_potential, power_potential, powerlog_potential
from mlsi_lab.errors import InfeasibleSelection, ScenarioSkipped, SingularHessian
from mlsi_lab.functionals import bump, constant, linear, neg_potential, quadratic
from mlsi_lab.inequalities import (DeficitReport, LargeEntropyConstants, check_brascamp_lieb,
                                   check_large_entropy, check_mlsi, check_perturbation,
                                   derive_large_entropy_constants, euclidean_lsi_check, euclidean_lsi_rhs,
                                   gross_reduction_residual, homogeneous_lsi_check, log_exp_moment, min_A,
                                   optimal_lambda, power_mlsi_constant, power_mlsi_integrand, psi_alpha)
from mlsi_lab.quadrature import normalize, scenario_rule

G1 = gaussian_potential(1)


def dx_rule(P, g, **kw):
    return scenario_rule(P, tilt=g.func, reference="dx", **kw)


class TestDeficitReport:
    def test_schema(self):
        d = DeficitReport("x", 1.0, 1.5, 1e-6, {"k": np.float64(2.0), "ok": np.bool_(True)}).to_dict()
        assert list(d) == ["name", "lhs", "rhs", "deficit", "pass", "tol", "metadata"]
        assert d["deficit"] == 0.5 and d["pass"] is True
        json.dumps(d)

    def test_tolerance_decides_pass(self):
        assert DeficitReport("x", 1.0, 1.0 - 1e-7, 1e-6).passed
        assert not DeficitReport("x", 1.0, 1.0 - 1e-5, 1e-6).passed

    def test_roundtrip(self):
        r = DeficitReport("x", 1.0, 2.0, 1e-6, {"a": 1})
        assert DeficitReport.from_dict(json.loads(r.to_json())) == r


class TestMLSI:
    def test_gaussian_linear_equality(self):
        g = linear(1.0)
        r = check_mlsi(G1, g, scenario_rule(G1, tilt=g.func))
        assert r.lhs == pytest.approx(0.5 * math.exp(0.5), abs=1e-8)
        assert abs(r.deficit) <= 1e-5

    @pytest.mark.parametrize("P", [G1, power_potential(3), powerlog_potential(3, 1)], ids=["gauss", "p3", "powerlog"])
    def test_zero_function(self, P):
        r = check_mlsi(P, constant(0.0), scenario_rule(P))
        assert abs(r.lhs) <= 1e-12 and abs(r.rhs) <= 1e-12

    def test_power_four_bump(self):
        P = power_potential(4)
        g = bump(height=1.0)
        r = check_mlsi(P, g, scenario_rule(P, tilt=g.func))
        assert r.deficit > 0 and r.metadata["min_integrand"] >= -1e-12

    def test_normalizing_constant_is_irrelevant(self):
        P = power_potential(3)
        g = linear(0.7)
        rule = scenario_rule(P, tilt=g.func)
        a = check_mlsi(P, g, rule)
        b = check_mlsi(normalize(P, rule), g, rule)
        assert a.rhs == pytest.approx(b.rhs, rel=1e-10)


class TestGrossReduction:
    @pytest.mark.parametrize("g,bound", [(linear(1.0), 1e-10), (quadratic(1.0), 1e-8), (bump(), 1e-8)])
    def test_identity(self, g, bound):
        assert gross_reduction_residual(g, scenario_rule(G1)) <= bound


class TestBrascampLieb:
    def test_linear_equality(self):
        r = check_brascamp_lieb(G1, linear(1.0), scenario_rule(G1))
        assert r.lhs == pytest.approx(1.0, abs=1e-6) and abs(r.deficit) <= 1e-6

    def test_square_moment(self):
        r = check_brascamp_lieb(G1, quadratic(1.0), scenario_rule(G1))
        assert r.lhs == pytest.approx(2.0, abs=1e-4)
        assert r.rhs == pytest.approx(4.0, abs=1e-4)

    def test_epsilon_coefficient_tends_to_half(self):
        r = check_brascamp_lieb(G1, quadratic(1.0), scenario_rule(G1))
        assert abs(r.metadata["ent_eps_coeff_2"] - 0.5) < abs(r.metadata["ent_eps_coeff_0"] - 0.5)
        assert r.metadata["ent_eps_coeff_2"] == pytest.approx(0.5, abs=0.05)

    def test_singular_hessian(self):
        P = power_potential(4)
        with pytest.raises(SingularHessian):
            check_brascamp_lieb(P, linear(1.0), scenario_rule(P))


class TestPerturbation:
    def test_zero_perturbation_is_mlsi(self):
        g = linear(1.0)
        rule = scenario_rule(G1, tilt=g.func)
        a = check_perturbation(G1, lambda x: np.zeros(x.shape[0]), g, rule)
        b = check_mlsi(G1, g, rule)
        assert a.lhs == pytest.approx(b.lhs, rel=1e-12) and a.rhs == pytest.approx(b.rhs, rel=1e-12)

    def test_constant_perturbation_cancels(self):
        g = linear(1.0)
        rule = scenario_rule(G1, tilt=g.func)
        a = check_perturbation(G1, lambda x: np.full(x.shape[0], 5.0), g, rule)
        assert a.metadata["osc"] == 0.0
        assert a.lhs == pytest.approx(check_mlsi(G1, g, rule).lhs, rel=1e-12)

    def test_sine(self):
        g = linear(1.0)
        r = check_perturbation(G1, lambda x: 0.5 * np.sin(x[:, 0]), g, scenario_rule(G1, tilt=g.func))
        assert r.metadata["osc"] == pytest.approx(1.0, abs=1e-4)
        assert r.metadata["factor"] == pytest.approx(math.e ** 2, rel=1e-3)
        assert r.metadata["density_ratio_ok"] and r.deficit >= 0


class TestPowerConstant:
    def test_single_point(self):
        assert power_mlsi_integrand(np.array([1.0, 0.0]), np.array([1.0, 0.0]), 2.0) == pytest.approx(0.5)

    def test_quadratic(self):
        assert power_mlsi_constant(2) == pytest.approx(0.5, abs=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0, 2 * math.pi), st.sampled_from([1.5, 2.0, 3.0]))
    def test_integrand_nonnegative(self, w1, w2, th, q):
        e = np.array([math.cos(th), math.sin(th)])
        assert power_mlsi_integrand(np.array([w1, w2]), e, q) >= -1e-12

    def test_rejects_subquadratic(self):
        with pytest.raises(ValueError):
            power_mlsi_constant(1.5)


class TestLebesgueLSI:
    @pytest.mark.parametrize("center", [-1.0, 0.0, 0.7])
    def test_gaussian_equality(self, center):
        C = power_potential(2)
        g = neg_potential(C, center=center)
        r = euclidean_lsi_check(C, g, 1.0, dx_rule(C, g))
        assert abs(r.deficit) <= 1e-5

    def test_away_from_one_is_strict(self):
        C = power_potential(2)
        g = neg_potential(C, center=0.7)
        assert euclidean_lsi_check(C, g, 2.0, dx_rule(C, g)).deficit > 1e-3

    def test_cube_equality(self):
        C = power_potential(3)
        g = neg_potential(C, center=1.0)
        assert abs(euclidean_lsi_check(C, g, 1.0, dx_rule(C, g)).deficit) <= 1e-4

    def test_lambda_must_be_positive(self):
        C = power_potential(2)
        g = neg_potential(C)
        with pytest.raises(ValueError):
            euclidean_lsi_check(C, g, 0.0, dx_rule(C, g))


class TestOptimalLambda:
    @pytest.mark.parametrize("center", [-1.0, 0.0, 0.7])
    def test_equality_case_gives_one(self, center):
        C = power_potential(2)
        g = neg_potential(C, center=center)
        lam, resid = optimal_lambda(C, g, dx_rule(C, g))
        assert lam == pytest.approx(1.0, abs=1e-6)
        assert resid < 1e-8

    def test_scaled_gaussian_closed_form(self):
        # rhs(l) = -m log(l e) + l^2 K / 2 + const with K = int |g'|^2 e^g, so l0 = sqrt(m / K)
        C = power_potential(2)
        g = quadratic(-1.0)
        rule = dx_rule(C, g)
        m = math.sqrt(math.pi)
        K = 2 * math.sqrt(math.pi)
        lam, _ = optimal_lambda(C, g, rule)
        assert lam == pytest.approx(math.sqrt(m / K), abs=1e-6)

    def test_local_minimality(self):
        C = power_potential(2)
        g = quadratic(-1.0)
        rule = dx_rule(C, g)
        lam, _ = optimal_lambda(C, g, rule)
        Pn = normalize(C, rule)
        best = euclidean_lsi_rhs(Pn, g, lam, rule)
        for f in (0.9, 1.1):
            assert euclidean_lsi_rhs(Pn, g, lam * f, rule) > best

    def test_no_sign_change(self):
        C = power_potential(2)
        g = neg_potential(C)
        with pytest.raises(InfeasibleSelection):
            optimal_lambda(C, g, dx_rule(C, g), lam_min=2.0, lam_max=10.0)


class TestHomogeneous:
    def test_gaussian_extremal(self):
        C = power_potential(2)
        g = neg_potential(C, b=0.5, center=0.3)
        r = homogeneous_lsi_check(C, g, dx_rule(C, g))
        assert abs(r.deficit) <= 1e-4
        assert r.metadata["closed_form_gap"] <= 1e-6

    def test_cube_extremal(self):
        C = power_potential(3)
        g = neg_potential(C, center=1.0)
        r = homogeneous_lsi_check(C, g, dx_rule(C, g))
        assert abs(r.deficit) <= 1e-3
        assert r.metadata["p"] == pytest.approx(1.5)

    def test_bump_plus_extremal(self):
        C = power_potential(2)
        g = neg_potential(C) + bump(height=0.8)
        r = homogeneous_lsi_check(C, g, dx_rule(C, g))
        assert r.deficit >= 0 and r.metadata["closed_form_gap"] <= 1e-6

    def test_needs_homogeneity(self):
        C = powerlog_potential(3, 1)
        g = neg_potential(power_potential(2))
        with pytest.raises(ValueError):
            homogeneous_lsi_check(C, g, dx_rule(power_potential(2), g))


class TestLargeEntropySelection:
    QUAD = power_potential(2, coef=2.0)

    @pytest.mark.parametrize("alpha", [0.2, 0.01])
    def test_psi_quadratic(self, alpha):
        assert psi_alpha(self.QUAD, alpha) == pytest.approx(1 / (1 - alpha), abs=1e-6)

    def test_psi_power_formula(self):
        # (1 - a)^{1 - q} for |x|^p/p with conjugate exponent q
        assert psi_alpha(power_potential(2), 0.1) == pytest.approx(0.9 ** -1, abs=1e-6)
        assert psi_alpha(power_potential(3), 0.1) == pytest.approx(0.9 ** -0.5, abs=1e-6)

    def test_psi_monotone_to_one(self):
        vals = [psi_alpha(self.QUAD, a) for a in (0.1, 0.01, 0.001)]
        assert vals[0] > vals[1] > vals[2] > 1

    def test_psi_rejects_alpha(self):
        with pytest.raises(ValueError):
            psi_alpha(self.QUAD, 1.0)

    @pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
    def test_min_A_power(self, p):
        assert min_A(power_potential(p), np.linspace(-10, 10, 2001)) == pytest.approx(p - 1, abs=1e-6)

    def test_min_A_powerlog_far_field(self):
        P = powerlog_potential(3, 1)
        a1 = min_A(P, np.linspace(30, 1000, 5001))
        a2 = min_A(P, np.linspace(30, 1000, 10001))
        assert 2.0 <= a1 <= 2.3 and a1 == pytest.approx(a2, abs=1e-6)

    def test_moment_tends_to_zero(self):
        assert abs(log_exp_moment(self.QUAD, 1e3)) < 2e-3
        assert log_exp_moment(self.QUAD, 1.0) == math.inf

    def test_moment_closed_form(self):
        # Phi = x^2: log int e^{Phi/l} dmu = -(1/2) log(1 - 1/l)
        assert log_exp_moment(self.QUAD, 2.0) == pytest.approx(0.5 * math.log(2.0), abs=1e-9)

    def test_quadratic_selection(self):
        rule = scenario_rule(self.QUAD)
        c = derive_large_entropy_constants(self.QUAD, rule)
        m = c.metadata
        assert m["lambda_condition_ok"] and m["alpha_condition_ok"] and m["A_condition_ok"]
        assert c.C1 == pytest.approx(4 * c.alpha) and c.C2 == pytest.approx(1 / c.alpha)
        # lambda: smallest grid value with -(1/2) log(1 - 1/l) <= 1
        lam_exact = 1 / (1 - math.exp(-2))
        assert lam_exact <= c.lam <= lam_exact * 1.03
        # alpha: (a + a / (1 - a)) lam <= 1/4 solved on the grid
        grid = np.geomspace(1e-4, 0.5, 400)
        ok = grid[(grid + grid / (1 - grid)) * c.lam <= 0.25 + 1e-12]
        assert c.alpha == pytest.approx(ok.max(), rel=1e-9)

    def test_growth_failure(self):
        # Phi = e^|x| - 1 grows too fast: x Phi' / Phi is unbounded
        P = Potential(dim=1, func=lambda x: np.exp(np.abs(x[..., 0])) - 1,
                      grad=lambda x: (np.sign(x[..., 0]) * np.exp(np.abs(x[..., 0])))[..., None],
                      kind="custom-grid")
        with pytest.raises(InfeasibleSelection):
            derive_large_entropy_constants(P, scenario_rule(P))

    def test_constants_validate(self):
        with pytest.raises(ValueError):
            LargeEntropyConstants(1.0, 1.5, 1.0, 6.0, 1 / 1.5)


@pytest.fixture(scope="module")
def constants():
    Q = power_potential(2, coef=2.0)
    return derive_large_entropy_constants(Q, scenario_rule(Q))


class TestLargeEntropyCheck:
    QUAD = power_potential(2, coef=2.0)


    def test_entropy_value(self, constants):
        g = linear(3.0)
        r = check_large_entropy(self.QUAD, g, constants, scenario_rule(self.QUAD, tilt=g.func))
        # under N(0, 1/2), Ent(e^{ax}) with unit mass is a^2/4
        assert r.lhs == pytest.approx(2.25, abs=1e-6)
        assert r.passed

    def test_small_entropy_skipped(self, constants):
        g = linear(0.5)
        with pytest.raises(ScenarioSkipped, match="small-entropy"):
            check_large_entropy(self.QUAD, g, constants, scenario_rule(self.QUAD, tilt=g.func))

    def test_glued_cube(self):
        Phi = powerlog_potential(3, 0)
        c = derive_large_entropy_constants(Phi, scenario_rule(Phi))
        g = linear(2.0)
        rule = scenario_rule(Phi, tilt=g.func)
        try:
            r = check_large_entropy(Phi, g, c, rule)
        except ScenarioSkipped:
            g = linear(3.0)
            r = check_large_entropy(Phi, g, c, scenario_rule(Phi, tilt=g.func))
        assert r.passed
