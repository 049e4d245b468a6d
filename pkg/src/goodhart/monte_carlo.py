"""Sampling oracle for the top-alpha selection statistics.

Draws are indexed counter streams (goal on stream 0, discrepancy on stream 1),
so a run is a pure function of ``(scenario, n, seed)``.  Survivors are picked
by order statistic of ``M``; the analytic threshold is never consulted.

Standard errors come from a Poisson(1) bootstrap.  Each resample re-selects
the top ``k`` by accumulated weight inside a band slightly wider than ``k``,
so the randomness of the empirical threshold is part of the error.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from . import distributions as dist
from .distributions import Family
from .errors import ConfigError, DomainError, MissingStdErrors
from .records import CSV_HEADER, STAT_FIELDS, Method, TruncatedStats, fmt
from .streams import CounterStream, worker_count
from .truncation import Scenario

RESAMPLES = 200
Z_FLAG = 4.0
Z_FLAG_HEAVY = 6.0
SECOND_MOMENT_FIELDS = ("e_g2", "e_xi2", "e_gxi", "var_g", "var_xi", "cov_gxi", "rho_alpha")

# Poisson(1) inverse CDF on a 16-bit grid: one table lookup per bootstrap weight.
_POISSON_TABLE = sps.poisson.ppf((np.arange(65536) + 0.5) / 65536.0, 1.0).astype(np.uint8)


@dataclass(frozen=True)
class McConfig:
    n: int
    seed: int
    alpha_list: tuple[float, ...]
    workers: int | None = None
    resamples: int = RESAMPLES

    def __post_init__(self) -> None:
        object.__setattr__(self, "alpha_list", tuple(float(a) for a in self.alpha_list))

    def validate(self) -> None:
        if self.n < 1000:
            raise ConfigError(f"n must be at least 1000, got {self.n}")
        if not self.alpha_list:
            raise ConfigError("alpha_list is empty")
        if any(not 0 < a <= 1 for a in self.alpha_list):
            raise ConfigError("alphas must lie in (0, 1]")
        if self.n * min(self.alpha_list) < 100:
            raise ConfigError("fewer than 100 draws would survive the smallest alpha")
        if self.resamples < 2:
            raise ConfigError("need at least 2 bootstrap resamples")


@dataclass
class McResult:
    scenario: Scenario
    config: McConfig
    rows: list[TruncatedStats]
    survivors: list[int]

    def csv_lines(self) -> list[str]:
        lines = [",".join(CSV_HEADER + ("se_e_g", "se_rho"))]
        for r in self.rows:
            se = r.std_errors or {}
            lines.append(",".join(r.csv_row() + [fmt(se.get("e_g", math.nan)), fmt(se.get("rho_alpha", math.nan))]))
        return lines


def survivor_count(n: int, alpha: float) -> int:
    """``ceil(n * alpha)``, with a guard against products like ``1e7 * 1e-3`` landing just above an integer."""
    return max(1, min(n, math.ceil(n * alpha * (1.0 - 1e-12))))


def draw(s: Scenario, n: int, seed: int, workers: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """The first ``n`` goal and discrepancy draws of the run with this seed."""
    ug = CounterStream(seed, 0).uniforms_parallel(n, workers=workers)
    ux = CounterStream(seed, 1).uniforms_parallel(n, workers=workers)
    return dist.sample(s.goal, ug), dist.sample(s.discrepancy, ux)


def _band(k: int, n: int) -> int:
    return min(n, k + int(8 * math.sqrt(k)) + 64)


def _record(alpha, m_alpha, mean_g, mean_x, cg, cx, weights, total, std_errors=None) -> TruncatedStats:
    """Moments of centred features ``cg``, ``cx`` under nonnegative weights."""
    dg = weights @ cg / total
    dx = weights @ cx / total
    var_g = weights @ (cg * cg) / total - dg * dg
    var_x = weights @ (cx * cx) / total - dx * dx
    cov = weights @ (cg * cx) / total - dg * dx
    return TruncatedStats.assemble(
        alpha, m_alpha, mean_g + dg, mean_x + dx, var_g, var_x, cov, Method.MONTE_CARLO, std_errors
    )


def _top_k_weights(counts: np.ndarray, k: int) -> np.ndarray:
    """Keep the first ``k`` units of multiplicity in rank order; split the crossing draw."""
    cum = np.cumsum(counts, dtype=np.int64)
    w = counts.astype(np.float64)
    if cum[-1] <= k:
        return w
    cut = int(np.searchsorted(cum, k, side="left"))
    w[cut] -= cum[cut] - k
    w[cut + 1 :] = 0.0
    return w


def _bootstrap(
    seed: int, index: int, alpha: float, m_alpha: float, mean_g: float, mean_x: float,
    cg: np.ndarray, cx: np.ndarray, k: int, resamples: int, workers: int | None,
) -> dict[str, float]:
    band = len(cg)
    words = -(-band // 4)
    stream = CounterStream(seed, 2 + index)

    def one(b: int) -> list[float]:
        counts = _POISSON_TABLE[stream.raw(b * words, words).view(np.uint16)[:band]]
        w = _top_k_weights(counts, k)
        r = _record(alpha, m_alpha, mean_g, mean_x, cg, cx, w, w.sum())
        return [getattr(r, f) for f in STAT_FIELDS]

    nw = min(worker_count(workers), resamples)
    if nw == 1:
        reps = [one(b) for b in range(resamples)]
    else:
        with ThreadPoolExecutor(nw) as pool:
            reps = list(pool.map(one, range(resamples)))
    arr = np.asarray(reps)
    return {f: float(v) for f, v in zip(STAT_FIELDS, arr.std(axis=0, ddof=1))}


def run(s: Scenario, cfg: McConfig) -> McResult:
    cfg.validate()
    n = cfg.n
    g, x = draw(s, n, cfg.seed, cfg.workers)
    m = g + x
    ks = [survivor_count(n, a) for a in cfg.alpha_list]
    reach = max(_band(k, n) for k in ks)
    if reach == n:
        order = np.argsort(-m, kind="stable")
    else:
        top = np.argpartition(-m, reach - 1)[:reach]
        order = top[np.argsort(-m[top], kind="stable")]
    g, x, m = g[order], x[order], m[order]

    rows = []
    for i, (alpha, k) in enumerate(zip(cfg.alpha_list, ks)):
        m_alpha = float(m[k - 1])
        mean_g = float(g[:k].mean())
        mean_x = float(x[:k].mean())
        band = _band(k, n)
        cg = g[:band] - mean_g
        cx = x[:band] - mean_x
        ones = np.zeros(band)
        ones[:k] = 1.0
        se = _bootstrap(cfg.seed, i, alpha, m_alpha, mean_g, mean_x, cg, cx, k, cfg.resamples, cfg.workers)
        rows.append(_record(alpha, m_alpha, mean_g, mean_x, cg, cx, ones, float(k), se))
    return McResult(s, cfg, rows, ks)


# ---------------------------------------------------------------- comparison


def heavy_tailed(s: Scenario) -> bool:
    """Power-law discrepancy with ``beta <= 5``: fourth moments converge slowly or not at all."""
    d = s.discrepancy
    return d.family == Family.POWER_LAW and d["beta"] <= 5


@dataclass
class ComparisonReport:
    alpha: float
    z: dict[str, float]
    flagged: list[str]
    bands: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.flagged

    def compared(self) -> list[str]:
        return [f for f, v in self.z.items() if math.isfinite(v)]

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "z": {k: (v if math.isfinite(v) else None) for k, v in self.z.items()},
            "flagged": list(self.flagged),
            "bands": dict(self.bands),
            "notes": list(self.notes),
            "passed": self.passed,
        }


def compare(analytic: TruncatedStats, empirical: TruncatedStats, heavy_tail: bool = False) -> ComparisonReport:
    """Per-field z-scores of ``empirical`` against ``analytic``.

    Fields missing from either record (NaN) or with a zero standard error are
    reported as NaN and never flagged.
    """
    if not empirical.std_errors:
        raise MissingStdErrors("empirical record carries no standard errors")
    if not math.isclose(analytic.alpha, empirical.alpha, rel_tol=1e-9):
        raise DomainError(f"alpha mismatch: {analytic.alpha} vs {empirical.alpha}")
    z: dict[str, float] = {}
    bands: dict[str, float] = {}
    flagged = []
    for f in STAT_FIELDS:
        se = empirical.std_errors.get(f, math.nan)
        a, e = getattr(analytic, f), getattr(empirical, f)
        band = Z_FLAG_HEAVY if heavy_tail and f in SECOND_MOMENT_FIELDS else Z_FLAG
        bands[f] = band
        if not (math.isfinite(a) and math.isfinite(e) and math.isfinite(se)) or se <= 0:
            z[f] = math.nan
            continue
        z[f] = (e - a) / se
        if abs(z[f]) > band:
            flagged.append(f)
    notes = []
    if heavy_tail:
        notes.append("heavy-tailed discrepancy: second-moment fields use a 6 SE band")
    return ComparisonReport(analytic.alpha, z, flagged, bands, notes)
