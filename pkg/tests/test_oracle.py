import math

import numpy as np
import pytest

from aoi_online import oracle
from aoi_online.acceptance import cubic_uniform_root
from aoi_online.delay_models import Deterministic, Empirical, LeCamPerturbed, LogNormal, Uniform

from conftest import MODELS

U01 = Uniform(0.0, 1.0)
GAMMA_U = 0.3221853546


def test_cubic_root():
    g = cubic_uniform_root()
    assert g ** 3 + 3 * g - 1 == pytest.approx(0, abs=1e-15)


class TestGBar:
    @pytest.mark.parametrize("model,gamma,want", [(U01, 0.25, 0.0390625), (U01, 0.5, -0.1041666667),
                                                  (Deterministic(1.0), 0.5, 0.0)])
    def test_examples(self, model, gamma, want):
        assert oracle.g_bar(model, gamma) == pytest.approx(want, abs=1e-9)

    @pytest.mark.parametrize("name", list(MODELS))
    def test_monotone_on_grid(self, name):
        m = MODELS[name]
        ub = oracle.exact_gamma_bounds(m).gamma_ub
        vals = [oracle.g_bar(m, g) for g in np.linspace(0, ub, 100)]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("name", list(MODELS))
    def test_slope_is_minus_e_max(self, name):
        m = MODELS[name]
        g = oracle.solve_unconstrained(m) * 0.9 + 0.05
        h = 1e-5
        slope = (oracle.g_bar(m, g + h) - oracle.g_bar(m, g - h)) / (2 * h)
        assert slope == pytest.approx(-m.threshold_integrals(g)[0], rel=1e-4)


class TestBounds:
    def test_examples(self):
        b = oracle.gamma_bounds(0.5, 0.5, 1 / 3, 1 / 3)
        assert (b.gamma_lb, b.gamma_ub) == (0.25, pytest.approx(1 / 3))
        b = oracle.gamma_bounds(0.5, 0.5, 1 / 3, 1 / 3, f_max=1.0)
        assert b.gamma_ub == pytest.approx(0.7777777778)
        b = oracle.gamma_bounds(1, 1, 1, 1)
        assert (b.gamma_lb, b.gamma_ub) == (0.5, 0.5)

    @pytest.mark.parametrize("args", [(0, 1, 1, 1), (2, 1, 1, 1), (1, 1, 2, 1), (1, 1, 1, 1, 0.0)])
    def test_bad_orderings(self, args):
        with pytest.raises(ValueError):
            oracle.gamma_bounds(*args)

    @pytest.mark.parametrize("name", list(MODELS))
    def test_exact_bounds_bracket_root(self, name):
        m = MODELS[name]
        b = oracle.exact_gamma_bounds(m)
        assert oracle.g_bar(m, b.gamma_lb) >= 0 >= oracle.g_bar(m, b.gamma_ub)


class TestUnconstrained:
    def test_uniform(self):
        assert abs(oracle.solve_unconstrained(U01) - cubic_uniform_root()) <= 1e-8

    @pytest.mark.parametrize("d", [0.1, 1.0, 7.5])
    def test_deterministic(self, d):
        assert oracle.solve_unconstrained(Deterministic(d)) == pytest.approx(d / 2, abs=1e-9)

    def test_lecam_ordering(self):
        assert oracle.solve_unconstrained(LeCamPerturbed(0.1611, 0.5, 100)) >= cubic_uniform_root()

    @pytest.mark.parametrize("name", list(MODELS))
    def test_residual(self, name):
        m = MODELS[name]
        g = oracle.solve_unconstrained(m)
        assert abs(oracle.g_bar(m, g)) <= 1e-9 * m.threshold_integrals(g)[0]

    def test_loose_bounds_expand(self):
        # estimated-style bounds D/10, 10D: the bracket is valid but wide
        m = LogNormal(1.0, 1.3)
        b = oracle.gamma_bounds(0.63, 63.0, 4.0, 2900.0)
        assert oracle.solve_unconstrained(m, bounds=b) == pytest.approx(oracle.solve_unconstrained(m), abs=1e-8)
        # a bracket entirely above the root is widened downward
        b = oracle.GammaBounds(20.0, 30.0)
        assert oracle.solve_unconstrained(m, bounds=b) == pytest.approx(oracle.solve_unconstrained(m), abs=1e-8)

    def test_bracket_error_names_signs(self):
        with pytest.raises(oracle.BracketError, match=r"g_bar\(lo\).*\(-\)"):
            oracle.solve_unconstrained(U01, bounds=oracle.GammaBounds(1000.0, 2000.0))


class TestConstrained:
    def test_binding(self):
        s = oracle.solve_constrained(U01, f_max=1.0)
        assert (s.beta, s.gamma_star, s.nu_star, s.aoi_star) == (
            pytest.approx(1.0, abs=1e-8), pytest.approx(0.5, abs=1e-8),
            pytest.approx(0.5, abs=1e-8), pytest.approx(1.0, abs=1e-8))
        assert abs(s.nu_star * (s.mean_cycle_length - 1.0)) <= 1e-9

    def test_slack(self):
        s = oracle.solve_constrained(U01, f_max=10.0)
        assert s.nu_star == 0 and s.gamma_star == pytest.approx(GAMMA_U, abs=1e-9)
        assert s.mean_cycle_length == pytest.approx(0.5519017, abs=1e-6)

    def test_deterministic(self):
        s = oracle.solve_constrained(Deterministic(1.0))
        assert (s.gamma_star, s.nu_star, s.beta, s.aoi_star) == (
            pytest.approx(0.5), 0.0, pytest.approx(0.5), pytest.approx(1.5))

    def test_lognormal_binding(self):
        m = LogNormal(1.0, 1.5)
        f = 1 / (10 * m.moments().mean)
        s = oracle.solve_constrained(m, f)
        assert s.nu_star > 0
        assert abs(m.threshold_integrals(s.beta)[0] - 1 / f) <= 1e-9 * (1 / f)
        assert s.mean_cycle_length >= 1 / f * (1 - 1e-9)
        # g-condition at the constrained optimum
        e_max, e_half = m.threshold_integrals(s.gamma_star + s.nu_star)
        assert e_half - s.gamma_star * e_max == pytest.approx(0, abs=1e-8 * e_half)

    def test_infeasible(self):
        # every real model is feasible under the default cap, so shrink the cap
        with pytest.raises(oracle.InfeasibleError, match="unattainable within wait cap"):
            orig = oracle._search_cap
            try:
                oracle._search_cap = lambda *a: 0.5
                oracle.solve_constrained(U01, f_max=0.1)
            finally:
                oracle._search_cap = orig

    def test_bad_fmax(self):
        with pytest.raises(ValueError):
            oracle.solve_constrained(U01, f_max=0.0)


class TestStationary:
    def test_zero_wait(self):
        assert oracle.stationary_policy_aoi(U01, 0.0) == pytest.approx(5 / 6, abs=1e-12)

    def test_at_optimum(self):
        assert oracle.stationary_policy_aoi(U01, GAMMA_U) == pytest.approx(0.822185, abs=1e-6)

    def test_deterministic(self):
        assert oracle.stationary_policy_aoi(Deterministic(1.0), 0.5) == 1.5

    @pytest.mark.parametrize("name", list(MODELS))
    def test_grid_optimality(self, name):
        m = MODELS[name]
        s = oracle.solve_constrained(m)
        betas = np.linspace(0, 3 * s.beta, 50)
        curve = oracle.aoi_curve(m, betas)
        assert np.all(curve >= s.aoi_star - 1e-9)
        assert oracle.stationary_policy_aoi(m, s.beta) == pytest.approx(s.aoi_star, abs=1e-9)

    def test_constant_wait(self):
        assert oracle.constant_wait_aoi(U01, 0.5) == pytest.approx(25 / 24, abs=1e-12)
        assert oracle.constant_wait_aoi(U01, 0.0) == pytest.approx(5 / 6, abs=1e-12)

    def test_empirical_plugin_near_truth(self):
        m = LogNormal.truncated(1.0, 1.3)
        emp = Empirical(m.sample(np.random.default_rng(0), 200_000))
        assert oracle.solve_unconstrained(emp) == pytest.approx(oracle.solve_unconstrained(m), rel=0.03)
        assert math.isfinite(oracle.solve_constrained(emp, 1 / (10 * emp.moments().mean)).beta)
