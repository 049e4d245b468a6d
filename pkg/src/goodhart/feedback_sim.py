"""Recommender and user feedback loop scored under two addiction coefficients.

A user with intrinsic preference ``theta`` drifts towards what they are shown:
after ``t`` steps their preference is ``(a*theta + x_1 + ... + x_t)/(a + t)``.
The recommender nudges the content ``x`` by ``omega/t`` towards the current
preference each step and is scored by ``sum_t 1/(delta + (theta_t - x_t)**2)``.
Scoring with a small addiction coefficient (goal) and a large one (measure)
gives a proxy whose optimum can be far from the goal's.

Step order, for t = 1..T with x_1 = 0: fold x_t into the running sum, form
theta_t, add the score term, then y_t = +1 if x_t <= theta_t else -1 and
x_{t+1} = x_t + omega * y_t / t.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special, stats

from .errors import ConfigError
from .streams import CounterStream


@dataclass(frozen=True)
class SimParams:
    theta: float
    addiction: float
    horizon: int
    delta: float
    omega: float

    def __post_init__(self) -> None:
        if self.horizon < 1:
            raise ConfigError("horizon must be at least 1")
        if not self.delta > 0:
            raise ConfigError("delta must be positive")
        if not self.addiction > 0:
            raise ConfigError("addiction must be positive")
        if not self.omega >= 0:
            raise ConfigError("omega must be nonnegative")


def trajectory(p: SimParams) -> tuple[np.ndarray, np.ndarray, float]:
    """Content ``x_t``, preference ``theta_t`` for t = 1..T, and the score."""
    xs = np.empty(p.horizon)
    ths = np.empty(p.horizon)
    x = 0.0
    total = 0.0
    score = 0.0
    for t in range(1, p.horizon + 1):
        total += x
        th = (p.addiction * p.theta + total) / (p.addiction + t)
        xs[t - 1], ths[t - 1] = x, th
        score += 1.0 / (p.delta + (th - x) ** 2)
        y = 1.0 if x <= th else -1.0
        x += p.omega * y / t
    return xs, ths, score


def simulate_score(p: SimParams) -> float:
    return trajectory(p)[2]


def scores(omega: np.ndarray, theta: float, addiction: float, horizon: int, delta: float) -> np.ndarray:
    """``simulate_score`` for many step sizes at once (same arithmetic, elementwise)."""
    omega = np.asarray(omega, dtype=np.float64)
    x = np.zeros_like(omega)
    total = np.zeros_like(omega)
    score = np.zeros_like(omega)
    for t in range(1, horizon + 1):
        total += x
        th = (addiction * theta + total) / (addiction + t)
        score += 1.0 / (delta + (th - x) ** 2)
        y = np.where(x <= th, 1.0, -1.0)
        x = x + omega * y / t
    return score


@dataclass(frozen=True)
class ExperimentConfig:
    theta: float = 0.2
    addiction_measure: float = 50.0
    addiction_goal: float = 5.0
    horizon: int = 100
    delta: float = 1e-5
    n_draws: int = 100_000
    omega_lognormal: tuple[float, float] = (0.0, 3.0)
    seed: int = 0
    bins: int = 50

    def __post_init__(self) -> None:
        object.__setattr__(self, "omega_lognormal", tuple(float(v) for v in self.omega_lognormal))
        if self.n_draws < 100:
            raise ConfigError("n_draws must be at least 100")
        if self.horizon < 1 or not self.delta > 0:
            raise ConfigError("horizon must be >= 1 and delta > 0")
        if not (self.addiction_measure > 0 and self.addiction_goal > 0):
            raise ConfigError("addiction coefficients must be positive")
        if not self.omega_lognormal[1] > 0:
            raise ConfigError("lognormal sigma must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["omega_lognormal"] = list(self.omega_lognormal)
        return d


@dataclass(frozen=True)
class Best:
    omega: float
    g: float
    m: float


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    omega: np.ndarray
    m_value: np.ndarray
    g_value: np.ndarray
    correlation: float
    best_by_goal: Best
    best_by_measure: Best
    histogram_counts: np.ndarray
    histogram_edges: np.ndarray
    skew: float
    kurtosis: float
    extra: dict = field(default_factory=dict)

    @property
    def goodhart_ratio(self) -> float:
        """Goal at the measure's optimum over the best goal."""
        return self.best_by_measure.g / self.best_by_goal.g

    def summary(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "correlation": self.correlation,
            "best_by_goal": asdict(self.best_by_goal),
            "best_by_measure": asdict(self.best_by_measure),
            "goodhart_ratio": self.goodhart_ratio,
            "histogram": {
                "counts": self.histogram_counts.tolist(),
                "edges": self.histogram_edges.tolist(),
            },
            "skew": self.skew,
            "kurtosis": self.kurtosis,
        }


def draw_omegas(seed: int, n: int, mu: float, sigma: float) -> np.ndarray:
    u = CounterStream(seed, 0).uniforms(0, n)
    return np.exp(mu + sigma * special.ndtri(u))


def run_experiment(c: ExperimentConfig) -> ExperimentResult:
    mu, sigma = c.omega_lognormal
    omega = draw_omegas(c.seed, c.n_draws, mu, sigma)
    m = scores(omega, c.theta, c.addiction_measure, c.horizon, c.delta)
    if c.addiction_measure == c.addiction_goal:
        g = m.copy()
    else:
        g = scores(omega, c.theta, c.addiction_goal, c.horizon, c.delta)
    corr = float(np.corrcoef(m, g)[0, 1]) if np.std(m) > 0 and np.std(g) > 0 else math.nan
    ig = int(np.argmax(g))
    im = int(np.argmax(m))
    diff = m - g
    counts, edges = np.histogram(diff, bins=c.bins)
    return ExperimentResult(
        config=c,
        omega=omega,
        m_value=m,
        g_value=g,
        correlation=corr,
        best_by_goal=Best(float(omega[ig]), float(g[ig]), float(m[ig])),
        best_by_measure=Best(float(omega[im]), float(g[im]), float(m[im])),
        histogram_counts=counts,
        histogram_edges=edges,
        skew=float(stats.skew(diff)),
        kurtosis=float(stats.kurtosis(diff, fisher=False)),
    )
