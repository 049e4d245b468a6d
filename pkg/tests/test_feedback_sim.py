import dataclasses
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from goodhart import feedback_sim as fs
from goodhart.errors import ConfigError


def _params(**kw):
    base = dict(theta=0.2, addiction=5.0, horizon=100, delta=1e-5, omega=0.31)
    base.update(kw)
    return fs.SimParams(**base)


@pytest.fixture(scope="module")
def default_run():
    return fs.run_experiment(fs.ExperimentConfig())


class TestScore:
    def test_single_step_by_hand(self):
        assert fs.simulate_score(_params(theta=1.0, addiction=1.0, horizon=1, delta=1.0, omega=0.0)) == pytest.approx(
            0.8, rel=1e-15
        )

    def test_static_content_closed_sum(self):
        a, th, d, T = 5.0, 0.2, 1e-5, 100
        expected = sum(1 / (d + (a * th / (a + t)) ** 2) for t in range(1, T + 1))
        assert fs.simulate_score(_params(omega=0.0)) == pytest.approx(expected, rel=1e-13)

    def test_perfect_tracking(self):
        assert fs.simulate_score(_params(theta=0.0, omega=0.0, horizon=37)) == pytest.approx(37 / 1e-5, rel=1e-15)

    def test_three_steps_traced_by_hand(self):
        # t=1: x=0, theta_1 = 1/6, y=+1, x_2 = 0.31
        # t=2: theta_2 = 1.31/7 < x_2, y=-1, x_3 = 0.31 - 0.155
        # t=3: theta_3 = (1 + 0.31 + 0.155)/8
        d = F(1, 100000)
        terms = [(F(1, 6), F(0)), (F(131, 700), F(31, 100)), (F(1465, 8000), F(155, 1000))]
        expected = sum(1 / (d + (th - x) ** 2) for th, x in terms)
        xs, ths, score = fs.trajectory(_params(horizon=3))
        np.testing.assert_allclose(xs, [float(x) for _, x in terms], rtol=1e-15)
        np.testing.assert_allclose(ths, [float(th) for th, _ in terms], rtol=1e-15)
        assert score == pytest.approx(float(expected), rel=1e-12)

    def test_tie_moves_content_up(self):
        # theta = 0 and x_1 = 0 gives theta_1 == x_1
        xs, _, _ = fs.trajectory(_params(theta=0.0, horizon=2, omega=1.0))
        assert xs[1] == 1.0

    @settings(max_examples=100, deadline=None)
    @given(st.floats(0.0, 50.0), st.floats(-1.0, 1.0), st.floats(0.1, 100.0), st.integers(1, 120))
    def test_harmonic_bound(self, omega, theta, addiction, horizon):
        xs, _, _ = fs.trajectory(_params(omega=omega, theta=theta, addiction=addiction, horizon=horizon))
        h = np.concatenate([[0.0], np.cumsum(1.0 / np.arange(1, horizon))])
        assert np.all(np.abs(xs) <= abs(xs[0]) + omega * h * (1 + 1e-12) + 1e-300)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.0, 1e3), min_size=1, max_size=20), st.floats(0.1, 100.0))
    def test_vectorised_matches_scalar(self, omegas, addiction):
        vec = fs.scores(np.array(omegas), 0.2, addiction, 100, 1e-5)
        one = [fs.simulate_score(_params(omega=w, addiction=addiction)) for w in omegas]
        np.testing.assert_array_equal(vec, one)

    @pytest.mark.parametrize(
        "kw", [dict(horizon=0), dict(delta=0.0), dict(addiction=0.0), dict(omega=-1.0)]
    )
    def test_invalid_params(self, kw):
        with pytest.raises(ConfigError):
            _params(**kw)


class TestExperiment:
    def test_deterministic(self):
        c = fs.ExperimentConfig(n_draws=2000, seed=9)
        a, b = fs.run_experiment(c), fs.run_experiment(c)
        np.testing.assert_array_equal(a.m_value, b.m_value)
        np.testing.assert_array_equal(a.g_value, b.g_value)
        assert a.summary() == b.summary()

    def test_seed_changes_draws(self):
        a = fs.draw_omegas(1, 100, 0.0, 3.0)
        b = fs.draw_omegas(2, 100, 0.0, 3.0)
        assert not np.any(a == b)

    def test_omega_draws_are_lognormal(self):
        from scipy import stats

        w = fs.draw_omegas(0, 50_000, 0.5, 2.0)
        assert stats.kstest(np.log(w), stats.norm(0.5, 2.0).cdf).pvalue > 1e-3

    def test_same_coefficients_give_identical_scores(self):
        r = fs.run_experiment(fs.ExperimentConfig(addiction_goal=50.0, n_draws=1000))
        np.testing.assert_array_equal(r.m_value, r.g_value)
        assert r.correlation == pytest.approx(1.0, abs=1e-12)
        assert r.best_by_measure == r.best_by_goal

    @pytest.mark.parametrize("seed", range(5))
    def test_small_run_invariants(self, seed):
        r = fs.run_experiment(fs.ExperimentConfig(n_draws=100, seed=seed))
        assert r.best_by_measure.m >= r.best_by_goal.m
        assert r.best_by_goal.g >= r.best_by_measure.g
        assert r.best_by_goal.g == r.g_value.max()
        assert r.best_by_measure.m == r.m_value.max()
        assert r.histogram_counts.sum() == 100
        assert -1 <= r.correlation <= 1

    @pytest.mark.parametrize(
        "kw", [dict(n_draws=99), dict(horizon=0), dict(delta=-1.0), dict(omega_lognormal=(0.0, 0.0))]
    )
    def test_invalid_config(self, kw):
        with pytest.raises(ConfigError):
            fs.ExperimentConfig(**kw)

    def test_summary_is_json_ready(self):
        import json

        r = fs.run_experiment(fs.ExperimentConfig(n_draws=200))
        json.dumps(r.summary(), allow_nan=False)

    def test_discrepancy_has_heavy_tails(self, default_run):
        assert default_run.kurtosis > 3

    def test_discrepancy_is_right_skewed(self, default_run):
        assert default_run.skew > 0
