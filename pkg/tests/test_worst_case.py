import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from goodhart import worst_case as wc
from goodhart.errors import DomainError

# mpmath at 40 digits, direct integration of e**g g P(m, g) over g <= 0
MP_ORACLE = {10.0: -1.5528105242297753, 1000.0: -2.7734625550787952}


class TestParams:
    def test_at_zero(self):
        p = wc.params_at(0.0, 0.3)
        assert p.beta_g == 5.0
        assert p.eta_g**2 == pytest.approx(9 * 0.09 / 17, rel=1e-14)
        assert p.mix_point == 0.5
        # two-component moments written out by hand
        mean = 0.5 * p.x_g + 0.5 * (4 / 3) * p.eta_g
        second = 0.5 * p.x_g**2 + 0.5 * 2.0 * p.eta_g**2
        assert mean == pytest.approx(0.0, abs=1e-15)
        assert second == pytest.approx(0.09, rel=1e-14)

    def test_index_approaches_four(self):
        assert wc.params_at(-1e9, 0.1).beta_g == pytest.approx(4.0, abs=1e-8)
        assert wc.params_at(-1e9, 0.1).beta_g > 4.0

    @pytest.mark.parametrize("eps", [0.01, 0.1, 1.0])
    def test_moment_constraints_on_grid(self, eps):
        for g in np.linspace(-100.0, 0.0, 50):
            p = wc.params_at(float(g), eps)
            assert 4 < p.beta_g <= 5
            assert abs(p.conditional_mean()) < 1e-12
            assert p.conditional_variance() == pytest.approx(eps**2, rel=1e-10)
            assert p.x_g < 0 < p.eta_g

    @given(st.floats(-1e6, 0.0), st.floats(1e-4, 10.0))
    def test_moment_constraints_anywhere(self, g, eps):
        p = wc.params_at(g, eps)
        assert abs(p.conditional_mean()) <= 1e-12 * eps
        assert p.conditional_variance() == pytest.approx(eps**2, rel=1e-10)

    def test_domain(self):
        with pytest.raises(DomainError):
            wc.params_at(0.5, 0.1)
        with pytest.raises(DomainError):
            wc.params_at(-1.0, 0.0)


class TestSurvival:
    def test_half_at_tail_boundary(self):
        p = wc.params_at(-2.0, 0.1)
        assert wc.conditional_survival(-2.0 + p.eta_g, -2.0, 0.1) == pytest.approx(0.5, rel=1e-14)

    def test_includes_point_mass_below_it(self):
        p = wc.params_at(-2.0, 0.1)
        assert wc.conditional_survival(-2.0 + p.x_g - 1e-9, -2.0, 0.1) == 1.0

    @pytest.mark.parametrize("eps", [0.01, 0.1, 1.0])
    def test_both_bounds(self, eps):
        for m in np.geomspace(eps, 1e6, 30):
            for g in np.concatenate([-np.geomspace(1e-3, 100.0, 40), [0.0]]):
                p = wc.params_at(float(g), eps)
                if m - g < p.eta_g:
                    continue
                s = wc.conditional_survival(float(m), float(g), eps)
                scale = m ** (-3.0 - 1.0 / (1.0 - g))
                assert s <= eps**3 * scale
                if g >= -m:
                    assert s >= eps**4 / 256 * scale


class TestThresholdCurve:
    @pytest.mark.parametrize("m", sorted(MP_ORACLE))
    def test_against_high_precision(self, m):
        assert wc.conditional_goal_given_threshold(m, 0.1) == pytest.approx(MP_ORACLE[m], rel=1e-12)

    def test_unconditional(self):
        assert wc.conditional_goal_given_threshold(-math.inf, 0.1) == -1.0

    def test_low_threshold_is_near_unconditional(self):
        # with eps tiny, M >= -40 keeps essentially the whole goal distribution
        assert wc.conditional_goal_given_threshold(-40.0, 1e-3) == pytest.approx(-1.0, abs=1e-12)

    def test_strictly_decreasing(self):
        m = [10.0, 1e2, 1e3, 1e4]
        v = wc.threshold_curve(m, 0.1)
        assert np.all(np.diff(v) < 0)

    def test_refined_grid_is_monotone(self):
        v = wc.threshold_curve(np.geomspace(10.0, 1e4, 13), 0.1)
        assert np.all(np.diff(v) < 0)

    def test_sqrt_log_fit(self):
        m = 10.0 ** np.arange(1, 5)
        fit = wc.fit_sqrt_log(m, wc.threshold_curve(m, 0.1))
        assert fit.c1 > 0
        assert fit.r2 > 0.9

    def test_domain(self):
        with pytest.raises(DomainError):
            wc.conditional_goal_given_threshold(10.0, 0.0)
        with pytest.raises(DomainError):
            wc.conditional_goal_given_threshold(math.nan, 0.1)


class TestFit:
    def test_exact_recovery(self):
        m = np.geomspace(3.0, 1e5, 9)
        fit = wc.fit_sqrt_log(m, 2.0 - 0.7 * np.sqrt(np.log(m)))
        assert fit.c0 == pytest.approx(2.0, rel=1e-12)
        assert fit.c1 == pytest.approx(0.7, rel=1e-12)
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)

    def test_needs_m_above_one(self):
        with pytest.raises(DomainError):
            wc.fit_sqrt_log([0.5, 10.0], [0.0, 1.0])
