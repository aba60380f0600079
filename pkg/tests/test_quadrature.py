import math
import random

import mpmath
import numpy as np
import pytest

from mlsi_lab.convex_core import gaussian_potential, interaction_potential, power_potential, powerlog_potential
from mlsi_lab.errors import NonFiniteIntegrand, TruncationError
from mlsi_lab.quadrature import (Box, integrate, integrate_values, log_normalizer, measure_weights,
                                 normalize, scan_box, scenario_rule, tensor_rule)


def mp_log_partition(f, lo=-40, hi=40):
    return float(mpmath.log(mpmath.quad(lambda t: mpmath.exp(-f(t)), [lo, -2, 0, 2, hi])))


class TestBox:
    def test_symmetric(self):
        b = Box.symmetric(3.0, 2)
        assert b.volume == 36.0
        np.testing.assert_array_equal(b.radius, [3.0, 3.0])

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Box((1.0,), (0.0,))

    def test_union(self):
        b = Box((-1.0,), (2.0,)).union(Box((-3.0,), (1.0,)))
        assert b.lower == (-3.0,) and b.upper == (2.0,)


class TestRules:
    def test_trapezoid_weights_sum_to_volume(self):
        r = tensor_rule(Box((-1.0, 0.0), (1.0, 3.0)), (11, 7))
        assert math.fsum(r.weights) == pytest.approx(6.0, rel=1e-14)

    def test_midpoint_is_exact_for_linear(self):
        r = tensor_rule(Box((0.0,), (2.0,)), 5, scheme="midpoint")
        assert integrate(lambda x: 3 * x[:, 0] + 1, r) == pytest.approx(8.0, rel=1e-14)

    def test_coarsen_and_refine(self):
        r = tensor_rule(Box.symmetric(2.0), 201)
        assert r.coarsen().resolution == (101,)
        assert r.refine().resolution == (401,)

    def test_boundary_mask_2d(self):
        r = tensor_rule(Box.symmetric(1.0, 2), 5)
        assert int(r.boundary_mask().sum()) == 16

    def test_csv_export(self, tmp_path):
        r = tensor_rule(Box.symmetric(1.0), 3)
        r.to_csv(tmp_path / "r.csv")
        lines = (tmp_path / "r.csv").read_text().strip().splitlines()
        assert len(lines) == 4

    def test_nonfinite_values_reported_with_node(self):
        r = tensor_rule(Box.symmetric(1.0), 3)
        with pytest.raises(NonFiniteIntegrand) as exc:
            integrate_values([0.0, np.inf, 1.0], r)
        assert exc.value.node == [0.0]


class TestPartitionFunctions:
    def test_gaussian_normalizer_is_zero(self):
        G = gaussian_potential(1)
        assert log_normalizer(G, scenario_rule(G)) == pytest.approx(0.0, abs=1e-9)

    def test_gaussian_2d(self):
        G = gaussian_potential(2)
        assert log_normalizer(G, scenario_rule(G)) == pytest.approx(0.0, abs=1e-8)

    @pytest.mark.parametrize("p", [3.0, 4.0])
    def test_power_against_mpmath(self, p):
        P = power_potential(p)
        ref = mp_log_partition(lambda t: abs(t) ** p / p)
        assert log_normalizer(P, scenario_rule(P)) == pytest.approx(ref, abs=1e-7)

    def test_powerlog_against_mpmath(self):
        P = powerlog_potential(3, 1)
        ref = mp_log_partition(lambda t: float(P.func(np.array([[float(t)]]))[0]), -15, 15)
        assert log_normalizer(P, scenario_rule(P, resolution=4001)) == pytest.approx(ref, abs=1e-6)

    def test_normalize_gives_probability(self):
        P = power_potential(4)
        r = scenario_rule(P)
        Q = normalize(P, r)
        assert log_normalizer(Q, r) == pytest.approx(0.0, abs=1e-13)

    def test_measure_weights_sum_to_one(self):
        P = interaction_potential(2)
        w = measure_weights(P, scenario_rule(P, resolution=81))
        assert math.fsum(w) == pytest.approx(1.0, abs=1e-15)


class TestTruncation:
    def test_gaussian_tail_radius(self):
        b = scan_box(lambda x: 0.5 * np.sum(x ** 2, -1), 1, tail_tol=1e-10)
        assert 6.0 <= b.upper[0] <= 8.0
        assert b.lower[0] == -b.upper[0]

    def test_tilt_widens_box(self):
        P = gaussian_potential(1)
        plain = scenario_rule(P).box
        tilted = scenario_rule(P, tilt=lambda x: 4 * x[:, 0]).box
        assert tilted.upper[0] > plain.upper[0] + 3

    def test_non_integrable_density_detected(self):
        with pytest.raises(TruncationError):
            scan_box(lambda x: 0.01 * np.abs(x[:, 0]) ** 0.5, 1)

    def test_tail_tol_range(self):
        with pytest.raises(ValueError):
            scan_box(lambda x: x[:, 0] ** 2, 1, tail_tol=0.1)


class TestDeterminism:
    def test_sum_independent_of_order(self):
        P = power_potential(3)
        r = scenario_rule(P)
        v = np.exp(-P.func(r.nodes))
        first = integrate_values(v, r)
        idx = list(range(v.size))
        random.Random(7).shuffle(idx)
        r2 = type(r)(r.nodes[idx], r.weights[idx], r.box, r.scheme, r.resolution, r.axes)
        assert integrate_values(v[idx], r2) == first
