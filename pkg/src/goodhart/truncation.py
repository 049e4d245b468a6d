"""Top-alpha selection statistics for an independent goal/discrepancy pair.

With ``M = G + xi`` and selection ``M >= m``, every conditional moment is an
integral over the goal of the weight ``w(g) = p_G(g) P[xi >= m - g]`` times a
function of ``g``.  The discrepancy enters only through its tail mean
``r1(g) = E[xi | xi >= m - g]`` and tail variance ``v(g)``, which the
distributions module evaluates without cancellation.  Moments are integrated
around a first-pass centre so that covariances near zero are not swamped by
rounding in raw second moments.

Where ``m - g`` falls below the discrepancy's support the selection is vacuous
for ``xi``; that stretch of the goal is handled exactly through the goal's
upper partial moments.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import optimize

from . import distributions as dist
from .distributions import DistributionSpec, Family
from .errors import BracketFailure, ConfigError, DomainError, MomentDoesNotExist
from .quadrature import geometric_breaks, integrate
from .records import CSV_HEADER, Method, TruncatedStats
from .streams import worker_count

# Weights this many e-folds below their peak are treated as zero when an
# unbounded goal support is cut to a finite window.
LOG_WINDOW = 80.0
_PROBES = 257
_EPS = float(np.finfo(float).eps)


# ---------------------------------------------------------------- scenario


@dataclass(frozen=True)
class Scenario:
    """Independent goal and discrepancy; ``epsilon`` is ``sqrt(Var xi / Var G)``."""

    goal: DistributionSpec
    discrepancy: DistributionSpec
    epsilon: float | None = None
    nominal_epsilon: float | None = None
    name: str | None = None

    def __post_init__(self) -> None:
        ratio = math.sqrt(dist.variance(self.discrepancy) / dist.variance(self.goal))
        if self.epsilon is None:
            object.__setattr__(self, "epsilon", ratio)
        elif abs(self.epsilon - ratio) > 1e-8 * ratio:
            raise DomainError(f"epsilon {self.epsilon} disagrees with sqrt(Var xi / Var G) = {ratio}")

    @property
    def rho_unconditional(self) -> float:
        return 1.0 / math.sqrt(1.0 + self.epsilon**2)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "goal": self.goal.to_dict(),
            "discrepancy": self.discrepancy.to_dict(),
            "epsilon": self.epsilon,
        }
        if self.nominal_epsilon is not None:
            out["nominal_epsilon"] = self.nominal_epsilon
        if self.name is not None:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any]) -> "Scenario":
        if not isinstance(obj, Mapping) or "goal" not in obj or "discrepancy" not in obj:
            raise ConfigError("a scenario needs 'goal' and 'discrepancy' objects")
        goal, goal_eps = dist.from_dict(obj["goal"])
        if goal_eps is not None:
            raise ConfigError("the goal takes explicit parameters, not epsilon")
        disc_obj = obj["discrepancy"]
        nominal = obj.get("nominal_epsilon")
        if isinstance(disc_obj, Mapping) and "epsilon" in disc_obj:
            disc, nominal = _calibrated_discrepancy(goal, disc_obj)
        else:
            disc, _ = dist.from_dict(disc_obj)
        eps = obj.get("epsilon")
        try:
            return cls(goal, disc, None if eps is None else float(eps),
                       None if nominal is None else float(nominal), obj.get("name"))
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc


def _calibrated_discrepancy(goal: DistributionSpec, obj: Mapping[str, Any]) -> tuple[DistributionSpec, float]:
    fam = Family(obj.get("family"))
    pair = (goal.family, fam)
    allowed = {
        (Family.UNIFORM01, Family.EXPONENTIAL),
        (Family.UNIFORM01, Family.POWER_LAW),
        (Family.UNIFORM01, Family.LOG_NORMAL),
        (Family.NORMAL, Family.NORMAL),
        (Family.POWER_LAW, Family.POWER_LAW),
    }
    if pair not in allowed:
        raise ConfigError(f"no epsilon calibration for goal {goal.family.value} with {fam.value}")
    if goal.family is Family.POWER_LAW:
        disc, eps = dist.from_dict(obj, goal_gamma=goal["beta"])
        disc = dist.power_law(disc["beta"], disc["eta"] * goal["eta"])
    elif goal.family is Family.NORMAL:
        disc, eps = dist.from_dict(obj)
        disc = dist.normal(disc["sigma"] * goal["sigma"])
    else:
        disc, eps = dist.from_dict(obj)
    return disc, float(eps)


def uniform_exponential(epsilon: float) -> Scenario:
    return Scenario(dist.uniform01(), dist.calibrate(Family.EXPONENTIAL, epsilon),
                    nominal_epsilon=epsilon, name="uniform-exp")


def normal_normal(epsilon: float) -> Scenario:
    return Scenario(dist.normal(1.0), dist.calibrate(Family.NORMAL, epsilon),
                    nominal_epsilon=epsilon, name="normal-normal")


def uniform_power(beta: float, epsilon: float) -> Scenario:
    return Scenario(dist.uniform01(), dist.calibrate(Family.POWER_LAW, epsilon, beta=beta),
                    nominal_epsilon=epsilon, name="uniform-power")


def power_power(gamma: float, beta: float, epsilon: float) -> Scenario:
    return Scenario(dist.power_law_goal(gamma), dist.calibrate(Family.POWER_LAW, epsilon, beta=beta, gamma=gamma),
                    nominal_epsilon=epsilon, name="power-power")


def uniform_lognormal(epsilon: float) -> Scenario:
    return Scenario(dist.uniform01(), dist.calibrate(Family.LOG_NORMAL, epsilon),
                    nominal_epsilon=epsilon, name="uniform-lognormal")


# ---------------------------------------------------------------- engine


@dataclass
class _Layout:
    breaks: list[float]
    shift: float
    tail: tuple[float, float, float] | None  # goal partial moments beyond m - L, scaled by exp(-shift)

    @property
    def has_numeric(self) -> bool:
        return len(self.breaks) >= 2


def _log_weight(s: Scenario, m: float, g: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        out = np.asarray(dist.log_pdf(s.goal, g)) + np.asarray(dist.log_survival(s.discrepancy, m - g))
    return np.where(np.isnan(out), -np.inf, out)


def _check_resolution(s: Scenario, m: float) -> None:
    # m - g must resolve the discrepancy's own scale in double precision.
    if abs(m) * _EPS > dist.scale(s.discrepancy):
        raise DomainError(f"threshold m={m:.3g} is too large to resolve the discrepancy scale in double precision")


def _layout(s: Scenario, m: float) -> _Layout:
    _check_resolution(s, m)
    gl, gu = dist.support(s.goal)
    dl, du = dist.support(s.discrepancy)
    gstar = m - dl if math.isfinite(dl) else math.inf
    lo, hi = gl, min(gu, gstar)
    tail = None
    log_tail = -math.inf
    if gstar < gu:
        x0 = max(gl, gstar)
        u = [float(dist.upper_partial_moment(s.goal, x0, n)) for n in range(3)]
        if u[0] > 0:
            tail = tuple(u)
            log_tail = math.log(u[0])
    if not hi > lo:
        shift = log_tail if tail else 0.0
        return _Layout([], shift, _scale_tail(tail, shift))

    sg, sd = dist.scale(s.goal), dist.scale(s.discrepancy)
    width = sg + sd
    if not (math.isfinite(lo) and math.isfinite(hi)):
        lo, hi = _window(s, m, lo, hi, width)
    grid = np.linspace(lo, hi, _PROBES)
    geo = geometric_breaks(lo, hi, sg, sd)
    probe = np.concatenate([grid, geo])
    lw = _log_weight(s, m, probe)
    peak = float(np.max(lw))
    if not math.isfinite(peak) and tail is None:
        raise DomainError(f"threshold m={m} lies beyond the support of M")
    shift = max(peak, log_tail)
    breaks = set(geo)
    breaks.add(float(probe[int(np.argmax(lw))]))
    for k in (m - dl, m - du, gl, gu):
        if math.isfinite(k) and lo < k < hi:
            breaks.add(k)
    return _Layout(sorted(b for b in breaks if lo <= b <= hi), shift, _scale_tail(tail, shift))


def _scale_tail(tail, shift):
    if tail is None:
        return None
    f = math.exp(-shift)
    return tuple(t * f for t in tail)


def _window(s: Scenario, m: float, lo: float, hi: float, width: float) -> tuple[float, float]:
    """Finite window of an unbounded goal range holding all non-negligible weight."""
    anchor = m - dist.mean(s.discrepancy)
    if math.isfinite(hi):
        anchor = min(anchor, hi)
    if math.isfinite(lo):
        anchor = max(anchor, lo)
    steps = width * 2.0 ** np.arange(-8, 70)
    cand = np.concatenate([[anchor], anchor - steps, anchor + steps])
    cand = cand[(cand >= lo) & (cand <= hi)]
    lw = _log_weight(s, m, cand)
    i = int(np.argmax(lw))
    peak, xp = float(lw[i]), float(cand[i])
    if not math.isfinite(peak):
        raise DomainError(f"no selection weight found at m={m}")

    def reach(direction: float, bound: float) -> float:
        if math.isfinite(bound):
            return bound
        for k in range(0, 400):
            x = xp + direction * width * 2.0 ** (k / 4.0)
            if _log_weight(s, m, np.array([x]))[0] < peak - LOG_WINDOW:
                return x
        raise DomainError("selection weight does not decay on an unbounded goal")

    return reach(-1.0, lo), reach(1.0, hi)


def _weight(s: Scenario, m: float, g: np.ndarray, shift: float) -> np.ndarray:
    return np.exp(_log_weight(s, m, g) - shift)


@dataclass
class _Moments:
    log_alpha: float
    e_g: float
    e_xi: float
    var_g: float
    var_xi: float
    cov_gxi: float
    normalization: float


def _unconditional(s: Scenario) -> _Moments:
    return _Moments(0.0, dist.mean(s.goal), dist.mean(s.discrepancy),
                    dist.variance(s.goal), dist.variance(s.discrepancy), 0.0, 1.0)


def log_survival_of_measure(s: Scenario, m: float) -> float:
    """``log P[M >= m]``."""
    if m == -math.inf:
        return 0.0
    lay = _layout(s, m)
    total = lay.tail[0] if lay.tail else 0.0
    if lay.has_numeric:
        res = integrate(lambda g: _weight(s, m, g, lay.shift), lay.breaks)
        total += float(res.value[0])
    if total <= 0:
        return -math.inf
    return min(0.0, math.log(total) + lay.shift)


def survival_of_measure(s: Scenario, m: float) -> float:
    """``P[M >= m]`` by quadrature over the goal of the discrepancy's survival."""
    return math.exp(log_survival_of_measure(s, m))


def _moments(s: Scenario, m: float) -> _Moments:
    if m == -math.inf:
        return _unconditional(s)
    lay = _layout(s, m)
    e1 = dist.mean(s.discrepancy)
    v0 = dist.variance(s.discrepancy)
    t0, t1, t2 = lay.tail if lay.tail else (0.0, 0.0, 0.0)
    d = s.discrepancy

    def pass1(g):
        w = _weight(s, m, g, lay.shift)
        return np.stack([w, w * g])

    if lay.has_numeric:
        i0, i1 = integrate(pass1, lay.breaks).value
    else:
        i0 = i1 = 0.0
    a1 = i0 + t0
    if not a1 > 0:
        raise DomainError(f"P[M >= {m}] underflows to zero")
    mu = (i1 + t1) / a1
    # Centre the discrepancy's tail mean at the goal's first-pass mean.
    x_ref = m - mu
    rbar = float(dist.tail_mean_var(d, x_ref)[0])

    def pass2(g):
        w = _weight(s, m, g, lay.shift)
        _, v = dist.tail_mean_var(d, m - g)
        dg = g - mu
        dr = dist.tail_mean_delta(d, m - g, x_ref, mu - g)
        return np.stack([w, w * dg, w * dg * dg, w * dg * dr, w * v, w * dr, w * dr * dr])

    if lay.has_numeric:
        j = integrate(pass2, lay.breaks).value
    else:
        j = np.zeros(7)
    # Tail contributions: xi is unconstrained there, so r1 = E[xi] and v = Var[xi].
    c1 = t1 - mu * t0
    c2 = t2 - 2 * mu * t1 + mu * mu * t0
    de = e1 - rbar
    a2 = j[0] + t0
    eg = (j[1] + c1) / a2
    egg = (j[2] + c2) / a2
    egr = (j[3] + de * c1) / a2
    ev = (j[4] + v0 * t0) / a2
    er = (j[5] + de * t0) / a2
    err = (j[6] + de * de * t0) / a2
    return _Moments(
        log_alpha=min(0.0, math.log(a1) + lay.shift),
        e_g=mu + eg,
        e_xi=rbar + er,
        var_g=egg - eg * eg,
        var_xi=ev + err - er * er,
        cov_gxi=egr - eg * er,
        normalization=a2 / a1,
    )


def stats_at_threshold(s: Scenario, m: float, alpha: float | None = None) -> TruncatedStats:
    """Full record for selection ``M >= m``."""
    mo = _moments(s, m)
    a = math.exp(mo.log_alpha) if alpha is None else alpha
    return TruncatedStats.assemble(float(a), float(m), float(mo.e_g), float(mo.e_xi), float(mo.var_g),
                                   float(mo.var_xi), float(mo.cov_gxi), Method.QUADRATURE)


def conditional_moment(s: Scenario, m: float, c: int, b: int) -> float:
    """``E[G**c xi**b | M >= m]`` for ``c + b <= 2``."""
    if c < 0 or b < 0 or c + b > 2:
        raise DomainError("conditional moments are provided for c + b <= 2")
    for law, k in ((s.goal, c), (s.discrepancy, b)):
        if law.family is Family.POWER_LAW and k + 1 >= law["beta"]:
            raise MomentDoesNotExist(f"moment of order {k} does not exist for {law}")
    mo = _moments(s, m)
    if (c, b) == (0, 0):
        return float(mo.normalization)
    st = TruncatedStats.assemble(math.exp(mo.log_alpha), m, mo.e_g, mo.e_xi, mo.var_g, mo.var_xi, mo.cov_gxi)
    return float(st.moment(c, b))


# ---------------------------------------------------------------- threshold


def _initial_bracket(s: Scenario, alpha: float) -> tuple[float, float]:
    lo = float(dist.quantile(s.goal, 0.99)) + float(dist.quantile(s.discrepancy, 0.99))
    hi = float(dist.quantile(s.goal, 1e-4)) + float(dist.quantile(s.discrepancy, alpha / 2))
    if not hi > lo:
        hi = lo + dist.scale(s.goal) + dist.scale(s.discrepancy)
    return lo, hi


def solve_m_alpha(s: Scenario, alpha: float, max_expansions: int = 200) -> float:
    """Threshold with ``P[M >= m] = alpha``; ``alpha = 1`` gives ``-inf``."""
    if not 0 < alpha <= 1:
        raise DomainError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha == 1:
        return -math.inf
    target = math.log(alpha)

    def f(m: float) -> float:
        return log_survival_of_measure(s, m) - target

    lo, hi = _initial_bracket(s, alpha)
    width = hi - lo
    flo, fhi = f(lo), f(hi)
    k = 0
    while flo <= 0:
        k += 1
        if k > max_expansions:
            raise BracketFailure(f"no lower bracket for alpha={alpha}")
        lo -= width
        width *= 2
        flo = f(lo)
    width = hi - lo
    while fhi >= 0:
        k += 1
        if k > max_expansions:
            raise BracketFailure(f"no upper bracket for alpha={alpha}")
        lo, flo = hi, fhi
        hi += width
        width *= 2
        fhi = f(hi)
    if fhi == -math.inf:
        # Tighten the upper end until the survival is representable.
        while True:
            mid = 0.5 * (lo + hi)
            fm = f(mid)
            if fm == -math.inf:
                hi = mid
            elif fm > 0:
                lo = mid
            else:
                hi = mid
                break
    if lo > 0 and hi / lo > 64:
        u = optimize.brentq(lambda t: f(math.exp(t)), math.log(lo), math.log(hi), xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
        return math.exp(u)
    scale = max(abs(lo), abs(hi), 1.0)
    return optimize.brentq(f, lo, hi, xtol=2e-16 * scale, rtol=4 * np.finfo(float).eps, maxiter=500)


def truncated_stats(s: Scenario, alpha: float) -> TruncatedStats:
    """Selection statistics at level ``alpha``; ``alpha = 1`` is vacuous selection."""
    m = solve_m_alpha(s, alpha)
    return stats_at_threshold(s, m, alpha=alpha)


# ---------------------------------------------------------------- sweeps


class GridKind(str, enum.Enum):
    ALPHA_LOG = "AlphaLogGrid"
    THRESHOLD = "ThresholdGrid"


@dataclass(frozen=True)
class AlphaLogGrid:
    alpha_max: float
    alpha_min: float
    points: int

    def values(self) -> np.ndarray:
        if not (0 < self.alpha_min < self.alpha_max <= 1) or self.points < 2:
            raise ConfigError("alpha grid needs 0 < alpha_min < alpha_max <= 1 and at least 2 points")
        v = np.exp2(np.linspace(math.log2(self.alpha_max), math.log2(self.alpha_min), self.points))
        v[0], v[-1] = self.alpha_max, self.alpha_min
        return v


@dataclass(frozen=True)
class ThresholdGrid:
    m_min: float
    m_max: float
    points: int

    def values(self) -> np.ndarray:
        if not (self.m_max > self.m_min) or self.points < 2:
            raise ConfigError("threshold grid needs m_min < m_max and at least 2 points")
        return np.linspace(self.m_min, self.m_max, self.points)


@dataclass
class SweepTable:
    scenario: Scenario
    rows: list[TruncatedStats]
    grid_kind: GridKind = GridKind.ALPHA_LOG

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])

    def check_order(self) -> bool:
        """``m_alpha`` strictly increases as ``alpha`` decreases."""
        m = self.column("m_alpha")
        return bool(np.all(np.diff(m) > 0))

    def csv_lines(self) -> list[str]:
        lines = [",".join(CSV_HEADER)]
        lines += [",".join(r.csv_row()) for r in self.rows]
        return lines


def _parallel_map(fn, items: Sequence, workers: int | None = None) -> list:
    nw = min(worker_count(workers), max(1, len(items)))
    if nw == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(nw) as pool:
        return list(pool.map(fn, items))


def sweep(s: Scenario, grid: AlphaLogGrid | ThresholdGrid, workers: int | None = None) -> SweepTable:
    """Rows ordered by decreasing alpha (increasing threshold)."""
    if isinstance(grid, AlphaLogGrid):
        rows = _parallel_map(lambda a: truncated_stats(s, float(a)), list(grid.values()), workers)
        return SweepTable(s, rows, GridKind.ALPHA_LOG)
    rows = _parallel_map(lambda m: stats_at_threshold(s, float(m)), list(grid.values()), workers)
    return SweepTable(s, rows, GridKind.THRESHOLD)


@dataclass(frozen=True)
class Extremum:
    kind: str  # "max" or "min"
    alpha: float
    e_g: float
    index: int


def detect_double_descent(t: SweepTable, plateau: float = 1e-9) -> list[Extremum]:
    """Interior local extrema of ``E_alpha[G]`` along the rows.

    A turn only counts once the curve has moved more than ``plateau`` away from
    the running extreme, so flat stretches and rounding noise are ignored.
    """
    if len(t.rows) < 3:
        raise DomainError("need at least 3 rows")
    e = t.column("e_g")
    alphas = t.column("alpha")
    out: list[Extremum] = []
    direction = 0
    cand = 0
    for i in range(1, len(e)):
        if direction == 0:
            if e[i] > e[cand] + plateau:
                direction, cand = 1, i
            elif e[i] < e[cand] - plateau:
                direction, cand = -1, i
        elif direction == 1:
            if e[i] >= e[cand]:
                cand = i
            elif e[i] < e[cand] - plateau:
                if 0 < cand < len(e) - 1:
                    out.append(Extremum("max", float(alphas[cand]), float(e[cand]), cand))
                direction, cand = -1, i
        else:
            if e[i] <= e[cand]:
                cand = i
            elif e[i] > e[cand] + plateau:
                if 0 < cand < len(e) - 1:
                    out.append(Extremum("min", float(alphas[cand]), float(e[cand]), cand))
                direction, cand = 1, i
    return out
