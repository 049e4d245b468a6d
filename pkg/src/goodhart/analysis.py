"""Regime verdicts for sweeps and the three-engine validation matrix."""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import closed_forms as cf
from . import monte_carlo as mc
from .distributions import SQRT12, Family
from .errors import DomainError, InsufficientSweep
from .records import TruncatedStats
from .truncation import (
    Scenario,
    SweepTable,
    detect_double_descent,
    normal_normal,
    power_power,
    truncated_stats,
    uniform_exponential,
    uniform_lognormal,
    uniform_power,
)

__all__ = [
    "Regime",
    "RegimeVerdict",
    "classify",
    "closed_form_at",
    "detect_double_descent",
    "reference_scenarios",
    "validation_matrix",
]

STRONG_THRESHOLD = -0.05
WEAK_MARGIN = 0.05
DEEP_ALPHA = 1e-6
CLOSED_FORM_REL = 1e-6
CLOSED_FORM_ABS = 1e-12
MC_PASS_FRACTION = 0.99
COMPARED_FIELDS = ("alpha", "e_g", "e_xi", "var_g", "var_xi", "cov_gxi", "rho_alpha")


class Regime(str, enum.Enum):
    WEAK = "WeakGoodhart"
    STRONG = "StrongGoodhart"
    NONE = "NoGoodhart"


@dataclass(frozen=True)
class RegimeVerdict:
    scenario: str
    classification: Regime
    min_rho: float
    alpha_zero_crossing: float | None
    plateau_e_g: float | None
    rho_first: float
    rho_last: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["classification"] = self.classification.value
        return d


def _zero_crossing(alpha: np.ndarray, rho: np.ndarray, floor: float = 1e-12) -> float | None:
    # Settling onto an exact zero (rounding-level values) is not a crossing.
    for i in range(len(rho) - 1):
        if rho[i] > floor and rho[i + 1] < -floor:
            # Linear in log alpha between the bracketing rows.
            la, lb = math.log(alpha[i]), math.log(alpha[i + 1])
            f = rho[i] / (rho[i] - rho[i + 1])
            return math.exp(la + f * (lb - la))
    return None


def _plateau(e_g: np.ndarray, tail: int = 3, tol: float = 1e-9) -> float | None:
    if len(e_g) < tail:
        return None
    last = e_g[-tail:]
    if np.ptp(last) <= tol * max(1.0, abs(float(last[-1]))):
        return float(last[-1])
    return None


def classify(
    t: SweepTable,
    strong_threshold: float = STRONG_THRESHOLD,
    weak_margin: float = WEAK_MARGIN,
    deep_alpha: float = DEEP_ALPHA,
) -> RegimeVerdict:
    """Strong if rho dips below ``strong_threshold``; weak if rho ends at least
    ``weak_margin`` below its running peak; otherwise no Goodhart effect."""
    alpha = t.column("alpha")
    rho = t.column("rho_alpha")
    if len(t.rows) < 2 or np.nanmin(alpha) > deep_alpha:
        raise InsufficientSweep(f"sweep must reach alpha <= {deep_alpha:g}")
    order = np.argsort(-alpha, kind="stable")
    alpha, rho, e_g = alpha[order], rho[order], t.column("e_g")[order]
    ok = np.isfinite(rho)
    min_rho = float(np.min(rho[ok]))
    last = float(rho[ok][-1])
    if min_rho < strong_threshold:
        regime = Regime.STRONG
    elif last < float(np.max(rho[ok])) - weak_margin:
        regime = Regime.WEAK
    else:
        regime = Regime.NONE
    return RegimeVerdict(
        scenario=t.scenario.name or "",
        classification=regime,
        min_rho=min_rho,
        alpha_zero_crossing=_zero_crossing(alpha[ok], rho[ok]),
        plateau_e_g=_plateau(e_g),
        rho_first=float(rho[ok][0]),
        rho_last=last,
    )


# ---------------------------------------------------------------- validation matrix


def reference_scenarios() -> list[Scenario]:
    return [
        uniform_exponential(1 / 256),
        normal_normal(0.1),
        uniform_power(3.5, 1 / 256),
        power_power(7.0, 3.5, 1 / 256),
        uniform_lognormal(0.25),
    ]


def closed_form_at(s: Scenario, m: float) -> TruncatedStats | None:
    """The exact record for this scenario at threshold ``m``, or None outside every closed form's regime."""
    g, x = s.goal, s.discrepancy
    try:
        if g.family == Family.UNIFORM01 and x.family == Family.EXPONENTIAL:
            if m < 0:
                return None
            return cf.uniform_exp_stats(1.0 / (x["rate"] * SQRT12), m)
        if g.family == Family.NORMAL and x.family == Family.NORMAL and g["sigma"] == 1.0:
            return cf.normal_normal_stats(x["sigma"], m)
        if g.family == Family.UNIFORM01 and x.family == Family.POWER_LAW:
            beta, eta = x["beta"], x["eta"]
            if m >= 1 + eta:
                return cf.uniform_power_stats_high(beta, eta, m)
            if m >= eta:
                return cf.uniform_power_stats_mid(beta, eta, m)
            return None
        if g.family == Family.POWER_LAW and x.family == Family.POWER_LAW and g["eta"] == 1.0:
            return cf.power_power_stats(x["beta"], x["eta"], g["beta"], m)
    except DomainError:
        return None
    return None


def _rel_gap(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a), abs(b)) if max(abs(a), abs(b)) > 0 else 0.0


def compare_closed_form(quad: TruncatedStats, exact: TruncatedStats) -> dict:
    gaps = {}
    failed = []
    for f in COMPARED_FIELDS:
        a, b = getattr(quad, f), getattr(exact, f)
        if not (math.isfinite(a) and math.isfinite(b)):
            continue
        gaps[f] = _rel_gap(a, b)
        if abs(a - b) > CLOSED_FORM_REL * max(abs(a), abs(b)) + CLOSED_FORM_ABS:
            failed.append(f)
    return {"status": "Compared", "rel_gap": gaps, "failed": failed, "passed": not failed}


@dataclass
class McBudget:
    n: int
    seed: int
    workers: int | None = None


@dataclass
class ValidationReport:
    rows: list[dict] = field(default_factory=list)
    mc_fields: int = 0
    mc_flagged: int = 0
    closed_form_failures: int = 0

    @property
    def mc_pass_fraction(self) -> float:
        return 1.0 - self.mc_flagged / self.mc_fields if self.mc_fields else 1.0

    @property
    def passed(self) -> bool:
        return self.closed_form_failures == 0 and self.mc_pass_fraction >= MC_PASS_FRACTION

    def to_dict(self) -> dict:
        return {
            "rows": self.rows,
            "summary": {
                "mc_fields": self.mc_fields,
                "mc_flagged": self.mc_flagged,
                "mc_pass_fraction": self.mc_pass_fraction,
                "closed_form_failures": self.closed_form_failures,
                "passed": self.passed,
            },
        }


def _clean(d: dict) -> dict:
    return {k: (None if isinstance(v, float) and not math.isfinite(v) else v) for k, v in d.items()}


def validation_matrix(
    scenarios: Sequence[Scenario], alphas: Sequence[float], mc_budget: McBudget | None = None
) -> ValidationReport:
    """Quadrature, closed form (where one applies) and Monte Carlo for each pair."""
    report = ValidationReport()
    for s in scenarios:
        mc_rows = {}
        if mc_budget is not None:
            res = mc.run(s, mc.McConfig(mc_budget.n, mc_budget.seed, tuple(alphas), mc_budget.workers))
            mc_rows = {r.alpha: r for r in res.rows}
        for a in alphas:
            quad = truncated_stats(s, float(a))
            row = {"scenario": s.name, "alpha": float(a), "quadrature": _clean(quad.to_dict())}
            exact = closed_form_at(s, quad.m_alpha)
            if exact is None:
                row["closed_form"] = {"status": "NotApplicable"}
            else:
                row["closed_form"] = compare_closed_form(quad, exact)
                report.closed_form_failures += not row["closed_form"]["passed"]
            if a in mc_rows:
                cmp = mc.compare(quad, mc_rows[a], mc.heavy_tailed(s))
                row["monte_carlo"] = {**cmp.to_dict(), "record": _clean(mc_rows[a].to_dict())}
                report.mc_fields += len(cmp.compared())
                report.mc_flagged += len(cmp.flagged)
            report.rows.append(row)
    return report
