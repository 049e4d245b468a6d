"""Acceptance checks, one per criterion; each prints a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import math
import sys

import numpy as np
import pytest

from goodhart import analysis as an
from goodhart import closed_forms as cf
from goodhart import feedback_sim as fs
from goodhart import truncation as tr
from goodhart import worst_case as wc
from goodhart.errors import GoodhartError

FIGURE_GRID = tr.AlphaLogGrid(1.0, 1e-9, 64)


def criterion_1():
    got = [cf.epsilon_from_correlation(r) for r in (0.9, 0.99, 0.99995)]
    ok = abs(got[0] - 0.484) <= 1e-3 and abs(got[1] - 0.1425) <= 1e-3 and abs(got[2] - 0.0100) <= 2e-4
    return ok, "eps = " + ", ".join(f"{v:.5f}" for v in got)


def criterion_2():
    eps = 1 / 256
    s = tr.uniform_exponential(eps)
    thr = cf.uniform_exp_plateau_threshold(eps)
    alphas = [a for a in (1e-3, 1e-5, 1e-7) if a < thr]
    rows = [tr.truncated_stats(s, a) for a in alphas]
    rho = max(abs(r.rho_alpha) for r in rows)
    e = [r.e_g for r in rows]
    spread = max(e) - min(e)
    gap = abs(1 - e[0])
    ok = len(alphas) == 3 and rho < 1e-6 and spread <= 1e-9 and gap <= eps * math.sqrt(12) + 10 * eps**2
    return ok, f"max|rho| = {rho:.2e}, E[G] spread = {spread:.2e}, 1 - E[G] = {gap:.6f}"


def criterion_3():
    s = tr.normal_normal(0.1)
    alphas = (1e-3, 1e-4, 1e-5, 1e-6)
    ratios = [tr.truncated_stats(s, a).rho_alpha / cf.normal_rho_asymptotic(0.1, a).value for a in alphas]
    toward = all(abs(b - 1) < abs(a - 1) for a, b in zip(ratios, ratios[1:]))
    ok = toward and 0.9 <= ratios[-1] <= 1.1
    return ok, "ratios " + ", ".join(f"{r:.3f}" for r in ratios) + f"; monotone toward 1: {toward}"


def criterion_4():
    beta, eps = 3.5, 1 / 256
    t = tr.sweep(tr.uniform_power(beta, eps), FIGURE_GRID)
    a, rho = t.column("alpha"), t.column("rho_alpha")
    crosses = bool(np.any(rho[:-1] > 0) and np.any(rho < 0))
    i = int(np.nonzero(a >= 10 * eps ** (beta - 1))[0][-1])
    pred = cf.uniform_power_rho_asymptotic(beta, eps, float(a[i]))
    stated = rho[i] / pred.details["sqrt12_variant"]
    rederived = rho[i] / pred.value
    ok = crosses and rho.min() < -0.2 and 0.85 <= stated <= 1.15
    return ok, (
        f"crosses zero: {crosses}, min rho = {rho.min():.4f}, ratio at alpha={a[i]:.3g}: "
        f"{stated:.3f} (sqrt(12) constant), {rederived:.3f} (constant 12)"
    )


def criterion_5():
    parts, ok = [], True
    for beta in (5.0, 3.5):
        tp = cf.uniform_power_turning_point(beta, 1e-4)
        q = tr.stats_at_threshold(tr.uniform_power(beta, 1e-4), tp.m)
        err = abs(q.rho_alpha / tp.rho_limit - 1)
        ok &= err <= 0.05
        parts.append(f"beta={beta:g}: rho={q.rho_alpha:.4f} vs {tp.rho_limit:.4f}")
    return ok, "; ".join(parts)


def _deepest_feasible(s, start=10):
    last = None
    for k in range(start, 200, 2):
        try:
            last = (10.0**-k, tr.truncated_stats(s, 10.0**-k))
        except GoodhartError:
            break
    return last


def criterion_6():
    light = tr.truncated_stats(tr.power_power(5.0, 6.0, 0.1), 1e-8).rho_alpha
    eps = 1 / 256
    heavy = tr.power_power(7.0, 3.5, eps)
    a, q = _deepest_feasible(heavy)
    pred = cf.power_power_rho_asymptotic(3.5, 7.0, eps, a)
    alt = cf.power_power_strong_rho_leading(3.5, 7.0, eps, a)
    ratio = q.rho_alpha / pred.value
    ok = light >= 0.99 and q.rho_alpha < 0 and 0.8 <= ratio <= 1.2
    return ok, (
        f"light tail rho(1e-8) = {light:.10f}; heavy tail at alpha={a:.0e}: rho = {q.rho_alpha:.4e}, "
        f"ratio to D law = {ratio:.5f}, ratio to 1/(beta-2) law = {q.rho_alpha / alt.value:.10f}"
    )


def criterion_7():
    t = tr.sweep(tr.uniform_lognormal(0.25), FIGURE_GRID)
    ext = tr.detect_double_descent(t)
    kinds = [e.kind for e in ext]
    small = [e.kind for e in tr.detect_double_descent(tr.sweep(tr.uniform_lognormal(1 / 16), FIGURE_GRID))]
    ok = kinds == ["max", "min"]
    return ok, f"eps=1/4 extrema {kinds}; eps=1/16 extrema {small}"


def criterion_8():
    m = [10.0, 1e2, 1e3, 1e4]
    v = wc.threshold_curve(m, 0.1)
    fit = wc.fit_sqrt_log(m, v)
    dec = bool(np.all(np.diff(v) < 0))
    ok = dec and fit.c1 > 0 and fit.r2 > 0.9
    return ok, "E[G|M>=m] = " + ", ".join(f"{x:.4f}" for x in v) + f"; c1 = {fit.c1:.3f}, R^2 = {fit.r2:.4f}"


def criterion_9():
    corr, events, kurt = [], 0, []
    for seed in range(5):
        r = fs.run_experiment(fs.ExperimentConfig(seed=seed))
        corr.append(r.correlation)
        events += r.best_by_measure.g < 0.1 * r.best_by_goal.g
        kurt.append(r.kurtosis)
    ok = all(0.6 <= c <= 0.95 for c in corr) and events >= 4 and all(k > 3 for k in kurt)
    return ok, (
        "correlation " + ", ".join(f"{c:.3f}" for c in corr) + f"; strong events {events}/5; kurtosis "
        + ", ".join(f"{k:.2f}" for k in kurt)
    )


def criterion_10():
    rep = an.validation_matrix(an.reference_scenarios(), [0.5, 0.1, 0.01, 1e-3], an.McBudget(10_000_000, 42))
    flagged = [
        f"{r['scenario']}@{r['alpha']:g}:{','.join(r['monte_carlo']['flagged'])}"
        for r in rep.rows if r["monte_carlo"]["flagged"]
    ]
    ok = rep.passed
    return ok, (
        f"closed-form failures {rep.closed_form_failures}; MC pass fraction {rep.mc_pass_fraction:.4f} "
        f"({rep.mc_flagged}/{rep.mc_fields} flagged{': ' + '; '.join(flagged) if flagged else ''})"
    )


CRITERIA = [criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10]


def _line(n, fn):
    ok, detail = fn()
    return ok, f"criterion {n}: {'PASS' if ok else 'FAIL'} {detail}"


@pytest.mark.parametrize("n", range(1, len(CRITERIA) + 1))
def test_criterion(n, capsys):
    ok, line = _line(n, CRITERIA[n - 1])
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = [_line(i, fn) for i, fn in enumerate(CRITERIA, 1)]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
