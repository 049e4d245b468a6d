import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from goodhart import closed_forms as cf
from goodhart import monte_carlo as mc
from goodhart import truncation as tr
from goodhart.errors import ConfigError, DomainError, MissingStdErrors
from goodhart.records import STAT_FIELDS

N = 200_000


@pytest.fixture(scope="module")
def uniform_exp_run():
    s = tr.uniform_exponential(1 / 256)
    return mc.run(s, mc.McConfig(N, 7, (1.0, 0.1, 0.005)))


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [
            dict(n=999, seed=0, alpha_list=(0.5,)),
            dict(n=10_000, seed=0, alpha_list=()),
            dict(n=10_000, seed=0, alpha_list=(0.0,)),
            dict(n=10_000, seed=0, alpha_list=(1.5,)),
            dict(n=10_000, seed=0, alpha_list=(0.005,)),
            dict(n=10_000, seed=0, alpha_list=(0.5,), resamples=1),
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            mc.McConfig(**kw).validate()

    def test_survivor_count(self):
        assert mc.survivor_count(10_000_000, 1e-3) == 10_000
        assert mc.survivor_count(1000, 0.0015) == 2
        assert mc.survivor_count(1000, 1.0) == 1000


class TestRun:
    def test_deterministic(self, uniform_exp_run):
        again = mc.run(uniform_exp_run.scenario, uniform_exp_run.config)
        assert again.rows == uniform_exp_run.rows

    def test_worker_count_does_not_change_results(self, uniform_exp_run):
        cfg = dataclasses.replace(uniform_exp_run.config, workers=1)
        one = mc.run(uniform_exp_run.scenario, cfg)
        assert one.rows == uniform_exp_run.rows

    def test_prefix_property_of_streams(self):
        s = tr.normal_normal(0.3)
        g1, x1 = mc.draw(s, 5000, 3)
        g2, x2 = mc.draw(s, 12_000, 3)
        np.testing.assert_array_equal(g1, g2[:5000])
        np.testing.assert_array_equal(x1, x2[:5000])

    def test_survivor_counts_and_threshold(self, uniform_exp_run):
        assert uniform_exp_run.survivors == [N, N // 10, 1000]
        g, x = mc.draw(uniform_exp_run.scenario, N, 7)
        m = np.sort(g + x)[::-1]
        for row, k in zip(uniform_exp_run.rows, uniform_exp_run.survivors):
            assert row.m_alpha == m[k - 1]

    def test_full_selection_matches_population(self, uniform_exp_run):
        row = uniform_exp_run.rows[0]
        exact = tr.truncated_stats(uniform_exp_run.scenario, 1.0)
        rep = mc.compare(exact, row)
        assert abs(rep.z["rho_alpha"]) < 4
        assert rep.passed

    def test_plateau_correlation_is_zero(self, uniform_exp_run):
        row = uniform_exp_run.rows[-1]
        assert abs(row.rho_alpha) < 4 * row.std_errors["rho_alpha"]

    def test_standard_errors_match_seed_to_seed_spread(self):
        # the threshold itself is random, so sqrt(var/k) would understate the error
        s = tr.uniform_exponential(1 / 256)
        rows = [mc.run(s, mc.McConfig(20_000, seed, (0.1,), resamples=50)).rows[0] for seed in range(40)]
        for f in ("e_g", "rho_alpha"):
            spread = np.std([getattr(r, f) for r in rows], ddof=1)
            se = np.mean([r.std_errors[f] for r in rows])
            assert se == pytest.approx(spread, rel=0.35)

    def test_every_field_has_a_standard_error(self, uniform_exp_run):
        for row in uniform_exp_run.rows:
            assert set(row.std_errors) == set(STAT_FIELDS)
            assert all(v >= 0 for v in row.std_errors.values())

    def test_csv(self, uniform_exp_run):
        lines = uniform_exp_run.csv_lines()
        assert lines[0].endswith("se_e_g,se_rho")
        assert len(lines) == 4

    def test_turning_point_correlation_is_negative(self):
        s = tr.uniform_power(3.5, 1 / 256)
        tp = cf.uniform_power_turning_point(3.5, 1 / 256)
        a = float(f"{tp.alpha:.6g}")
        res = mc.run(s, mc.McConfig(1_000_000, 5, (a,)))
        row = res.rows[0]
        assert row.rho_alpha < 0
        rep = mc.compare(tr.truncated_stats(s, a), row, heavy_tail=True)
        assert abs(rep.z["rho_alpha"]) < 4


class TestTopKWeights:
    @given(st.lists(st.integers(0, 6), min_size=1, max_size=200), st.integers(1, 300))
    def test_mass_is_capped_at_k(self, counts, k):
        c = np.asarray(counts, dtype=np.uint8)
        w = mc._top_k_weights(c, k)
        assert w.sum() == min(k, int(c.sum()))
        assert np.all(w >= 0) and np.all(w <= c)
        nz = np.flatnonzero(w)
        if nz.size:
            # weights form a prefix of the ranked draws
            assert np.array_equal(w[: nz[-1]], c[: nz[-1]].astype(float))

    def test_poisson_table_mean(self):
        assert mc._POISSON_TABLE.mean() == pytest.approx(1.0, abs=1e-3)


class TestCompare:
    def _row(self, run):
        return run.rows[1]

    def test_identical_inputs_give_zero(self, uniform_exp_run):
        row = self._row(uniform_exp_run)
        rep = mc.compare(row, row)
        assert rep.passed
        assert all(v == 0 for v in rep.z.values() if math.isfinite(v))

    def test_ten_se_shift_is_flagged(self, uniform_exp_run):
        row = self._row(uniform_exp_run)
        shifted = dataclasses.replace(row, e_g=row.e_g + 10 * row.std_errors["e_g"])
        rep = mc.compare(shifted, row)
        assert rep.flagged == ["e_g"]
        assert rep.z["e_g"] == pytest.approx(-10.0)

    def test_heavy_band_widens_second_moments_only(self, uniform_exp_run):
        row = self._row(uniform_exp_run)
        se = row.std_errors
        shifted = dataclasses.replace(row, e_g=row.e_g + 5 * se["e_g"], var_xi=row.var_xi + 5 * se["var_xi"])
        rep = mc.compare(shifted, row, heavy_tail=True)
        assert rep.flagged == ["e_g"]
        assert rep.bands["var_xi"] == 6 and rep.bands["e_g"] == 4

    def test_missing_fields_are_skipped(self, uniform_exp_run):
        row = self._row(uniform_exp_run)
        partial = cf.uniform_exp_stats(1 / 256, row.m_alpha)
        partial = dataclasses.replace(partial, alpha=row.alpha)
        rep = mc.compare(partial, row)
        assert set(rep.compared()) <= {"e_g", "alpha", "m_alpha"}
        assert "e_g" in rep.compared()

    def test_requires_standard_errors(self, uniform_exp_run):
        row = self._row(uniform_exp_run)
        with pytest.raises(MissingStdErrors):
            mc.compare(row, dataclasses.replace(row, std_errors=None))

    def test_alpha_mismatch(self, uniform_exp_run):
        a, b = uniform_exp_run.rows[0], uniform_exp_run.rows[1]
        with pytest.raises(DomainError):
            mc.compare(a, b)

    def test_report_is_json_ready(self, uniform_exp_run):
        import json

        row = self._row(uniform_exp_run)
        json.dumps(mc.compare(row, row).to_dict(), allow_nan=False)

    def test_heavy_tail_rule(self):
        assert mc.heavy_tailed(tr.uniform_power(3.5, 0.01))
        assert mc.heavy_tailed(tr.uniform_power(5.0, 0.01))
        assert not mc.heavy_tailed(tr.uniform_power(6.0, 0.01))
        assert not mc.heavy_tailed(tr.normal_normal(0.1))
