"""A goal-dependent discrepancy under which the selected goal mean diverges to -inf.

The goal has density ``e**g`` on ``g <= 0``.  Given ``G = g`` the discrepancy
is an equal-weight mixture of a point mass at ``x_g < 0`` and a power law with
index ``beta_g = 4 + 1/(1-g)`` and scale ``eta_g``; the two free constants are
fitted so that ``E[xi | g] = 0`` and ``Var[xi | g] = epsilon**2`` for every g.
Lower goals get heavier tails, which is what drags ``E[G | M >= m]`` down.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import DomainError
from .quadrature import integrate

G_FLOOR = -50.0 * math.log(10.0)  # e**G_FLOOR = 1e-50: the discarded goal mass
MIX_POINT = 0.5


@dataclass(frozen=True)
class WorstCaseParams:
    g: float
    epsilon: float
    beta_g: float
    eta_g: float
    x_g: float
    mix_point: float = MIX_POINT

    def conditional_mean(self) -> float:
        k1 = (self.beta_g - 1) / (self.beta_g - 2)
        return self.mix_point * self.x_g + (1 - self.mix_point) * k1 * self.eta_g

    def conditional_variance(self) -> float:
        k2 = (self.beta_g - 1) / (self.beta_g - 3)
        second = self.mix_point * self.x_g**2 + (1 - self.mix_point) * k2 * self.eta_g**2
        return second - self.conditional_mean() ** 2


def _beta(g):
    return 4.0 + 1.0 / (1.0 - g)


def _eta(beta, epsilon):
    k1 = (beta - 1) / (beta - 2)
    k2 = (beta - 1) / (beta - 3)
    return epsilon * np.sqrt(2.0 / (k1 * k1 + k2))


def params_at(g: float, epsilon: float) -> WorstCaseParams:
    if not g <= 0:
        raise DomainError(f"g must be <= 0, got {g}")
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    beta = float(_beta(g))
    eta = float(_eta(beta, epsilon))
    x_g = -(beta - 1) * eta / (beta - 2)
    return WorstCaseParams(float(g), float(epsilon), beta, eta, x_g)


def _survival(m: float, g: np.ndarray, epsilon: float, log_shift: float = 0.0) -> np.ndarray:
    """``P[xi >= m - g | g]`` times ``exp(-log_shift)``, vectorised over g."""
    beta = _beta(g)
    eta = _eta(beta, epsilon)
    x_g = -(beta - 1) * eta / (beta - 2)
    gap = m - g
    with np.errstate(divide="ignore"):
        log_tail = (beta - 1) * (np.log(eta) - np.log(np.maximum(gap, eta)))
    tail = MIX_POINT * np.exp(log_tail - log_shift)
    point = np.where(gap <= x_g, MIX_POINT * math.exp(-log_shift), 0.0)
    return tail + point


def conditional_survival(m: float, g: float, epsilon: float) -> float:
    """``P[xi >= m - g | G = g]``; ``1/2 (eta_g/(m-g))**(beta_g-1)`` once ``m - g >= eta_g``."""
    if not g <= 0:
        raise DomainError(f"g must be <= 0, got {g}")
    return float(_survival(m, np.array([float(g)]), epsilon)[0])


def _kinks(m: float, epsilon: float) -> list[float]:
    """Goal levels where ``m - g`` crosses ``eta_g`` or ``x_g``."""
    out = []
    for fn in (
        lambda g: m - g - _eta(_beta(g), epsilon),
        lambda g: m - g + (_beta(g) - 1) * _eta(_beta(g), epsilon) / (_beta(g) - 2),
    ):
        grid = np.linspace(G_FLOOR, 0.0, 401)
        vals = np.array([fn(x) for x in grid])
        for i in np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]:
            out.append(optimize.brentq(fn, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15))
    return out


def conditional_goal_given_threshold(m: float, epsilon: float) -> float:
    """``E[G | M >= m]``, integrating over ``g`` in ``[-50 ln 10, 0]``.

    The discarded goal mass below the floor is ``1e-50``; since the survival
    probability is at most 1 and at least its value at ``g = 0``, the neglected
    part is far below double precision for any threshold where the quadrature
    is meaningful.  ``m = -inf`` is the unconditional mean ``-1``.
    """
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    if m == -math.inf:
        return -1.0
    if math.isnan(m) or math.isinf(m):
        raise DomainError(f"threshold must be finite or -inf, got {m}")
    # Rescale by the survival at g = 0 so the integrands stay O(1) for large m.
    s0 = float(_survival(m, np.array([0.0]), epsilon)[0])
    shift = math.log(s0) if s0 > 0 else 0.0

    def f(g):
        w = _survival(m, g, epsilon, shift) * np.exp(g)
        return np.vstack([w * g, w])

    pts = [G_FLOOR, 0.0, *[k for k in _kinks(m, epsilon) if G_FLOOR < k < 0]]
    pts += list(-np.geomspace(1e-3, -G_FLOOR, 24)[:-1])
    res = integrate(f, sorted(pts))
    return float(res.value[0] / res.value[1])


def threshold_curve(m_values, epsilon: float) -> np.ndarray:
    return np.array([conditional_goal_given_threshold(float(m), epsilon) for m in m_values])


@dataclass(frozen=True)
class SqrtLogFit:
    c0: float
    c1: float
    r2: float


def fit_sqrt_log(m_values, values) -> SqrtLogFit:
    """Least squares ``values ~ c0 - c1 sqrt(ln m)``."""
    m = np.asarray(m_values, dtype=float)
    y = np.asarray(values, dtype=float)
    if np.any(m <= 1):
        raise DomainError("fit needs m > 1")
    x = np.sqrt(np.log(m))
    a = np.vstack([np.ones_like(x), -x]).T
    coef, *_ = np.linalg.lstsq(a, y, rcond=None)
    resid = y - a @ coef
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / ss_tot if ss_tot > 0 else 1.0
    return SqrtLogFit(float(coef[0]), float(coef[1]), r2)
