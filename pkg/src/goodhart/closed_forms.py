"""Exact and leading-order formulas for the standard goal/discrepancy pairs.

Exact entries double as independent oracles for the quadrature engine; the
asymptotic entries are compared with it only through ratio convergence.
Noise levels ``epsilon`` follow the conventional calibration of
:func:`goodhart.distributions.calibrate`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from . import distributions as dist
from .distributions import SQRT12, TAU, _normal_tail
from .errors import DomainError
from .quadrature import geometric_breaks, integrate
from .records import Method, TruncatedStats, partial_stats


class Kind(str, enum.Enum):
    EXACT = "Exact"
    LEADING_ORDER = "LeadingOrder"
    LIMIT = "Limit"


@dataclass(frozen=True)
class AsymptoticPrediction:
    value: float
    validity: str
    kind: Kind
    details: dict = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------- correlation


def epsilon_from_correlation(rho: float) -> float:
    """Noise-to-signal ratio giving unconditional correlation ``rho``."""
    if not 0 < rho < 1:
        raise DomainError(f"rho must lie in (0, 1), got {rho}")
    return math.sqrt(1.0 / rho**2 - 1.0)


def correlation_from_epsilon(epsilon: float) -> float:
    return 1.0 / math.sqrt(1.0 + epsilon**2)


# ---------------------------------------------------------------- uniform goal, exponential discrepancy


def _rate(epsilon: float) -> float:
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    return 1.0 / (epsilon * SQRT12)


def uniform_exp_stats(epsilon: float, m: float) -> TruncatedStats:
    """``alpha`` and ``E[G | M >= m]`` for ``m >= 0``; other fields are NaN.

    With ``h = min(m, 1)``:
    ``alpha = (1-h) + (exp(-lam (m-h)) - exp(-lam m)) / lam`` and the goal mean
    is the ratio of the two closed-form integrals, both rescaled by
    ``exp(-lam m)`` so nothing overflows for large ``lam m``.
    """
    if not m >= 0:
        raise DomainError(f"m must be nonnegative, got {m}")
    lam = _rate(epsilon)
    h = min(m, 1.0)
    decay = math.exp(-lam * (m - h))
    one_minus = -math.expm1(-lam * h)  # 1 - exp(-lam h)
    alpha = (1.0 - h) + decay * one_minus / lam
    if h == 1.0:
        e_g = uniform_exp_plateau_e_g(epsilon)
    else:
        # Here m = h < 1, so decay == 1.
        tail = lam * h + math.expm1(-lam * h)  # lam h - 1 + exp(-lam h)
        num = lam * lam * (1.0 - h * h) + 2.0 * tail
        den = lam * (1.0 - h) + one_minus
        e_g = num / (2.0 * lam * den)
    return partial_stats(alpha, m, e_g, Method.CLOSED_FORM)


def uniform_exp_plateau_e_g(epsilon: float) -> float:
    """Goal mean once ``m >= 1``: ``(1 - 1/lam + exp(-lam)/lam) / (1 - exp(-lam))``."""
    lam = _rate(epsilon)
    return (1.0 - 1.0 / lam + math.exp(-lam) / lam) / (-math.expm1(-lam))


def uniform_exp_plateau_threshold(epsilon: float) -> float:
    """Level below which the truncated correlation is exactly zero."""
    if math.isinf(epsilon):
        return 1.0
    x = epsilon * SQRT12
    return x * -math.expm1(-1.0 / x)


# ---------------------------------------------------------------- normal goal, normal discrepancy


def normal_normal_stats(epsilon: float, m: float) -> TruncatedStats:
    """Exact record for ``G ~ N(0,1)``, ``xi ~ N(0, epsilon**2)`` selected at ``M >= m``.

    ``(G, M)`` is jointly Gaussian, so ``G = b M + e`` with ``b = 1/(1+eps^2)``
    and ``e`` independent of ``M``; only the truncated moments of ``M`` are needed.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    s2 = 1.0 + epsilon**2
    s = math.sqrt(s2)
    b = 1.0 / s2
    resid = epsilon**2 / s2
    if m == -math.inf:
        alpha, em, vm = 1.0, 0.0, s2
    else:
        z = m / s
        h, vz = _normal_tail(np.array([z]))
        alpha = float(special.ndtr(-z))
        em, vm = s * float(h[0]), s2 * float(vz[0])
    e_g = b * em
    var_g = b * b * vm + resid
    cov_gm = b * vm
    e_xi = em - e_g
    cov_gxi = cov_gm - var_g
    var_xi = vm - 2.0 * cov_gm + var_g
    return TruncatedStats.assemble(alpha, m, e_g, e_xi, var_g, var_xi, cov_gxi, Method.CLOSED_FORM)


def _normal_radicand(alpha: float) -> float:
    if not 0 < alpha < 1:
        raise DomainError("alpha must lie in (0, 1)")
    la = math.log(1.0 / alpha)
    inner = math.log(2.0 * la)  # ln ln(1/alpha^2)
    return 2.0 * la - inner - math.log(TAU)


def normal_m_alpha_expansion(epsilon: float, alpha: float) -> float:
    """Leading-order threshold ``sigma_M sqrt(2 ln(1/a) - ln ln(1/a^2) - ln tau)``."""
    r = _normal_radicand(alpha)
    if r <= 0:
        raise DomainError(f"expansion radicand is {r} <= 0 at alpha={alpha}")
    return math.sqrt(1.0 + epsilon**2) * math.sqrt(r)


def normal_rho_asymptotic(epsilon: float, alpha: float) -> AsymptoticPrediction:
    """Leading-order truncated correlation for the normal pair.

    ``details['in_regime']`` is False while ``alpha > exp(-1/(2 eps^2))``: the
    expansion needs ``epsilon * m_alpha >> 1`` and is far off before that.
    """
    r = _normal_radicand(alpha)
    if r <= 0:
        raise DomainError(f"prediction radicand is {r} <= 0 at alpha={alpha}")
    onset = -1.0 / (2.0 * epsilon**2)
    in_regime = math.log(alpha) < onset
    return AsymptoticPrediction(
        value=1.0 / (epsilon * math.sqrt(r)),
        validity="alpha -> 0 (needs alpha << exp(-1/(2 eps^2)))",
        kind=Kind.LEADING_ORDER,
        details={
            "m_alpha_expansion": math.sqrt(1.0 + epsilon**2) * math.sqrt(r),
            "in_regime": in_regime,
            "log_alpha_onset": onset,
        },
    )


# ---------------------------------------------------------------- uniform goal, power-law discrepancy


def _check_beta(beta: float) -> None:
    if not beta > 3:
        raise DomainError(f"beta must exceed 3, got {beta}")
    if abs(beta - 4.0) <= 1e-6:
        raise DomainError("beta = 4 is excluded (closed forms divide by beta - 4)")


def _power_integral(c: int, s: float, m: float, h: float) -> float:
    """``integral_0^h g**c (m - g)**(-s) dg`` for ``m > h``."""
    if h <= 0:
        return 0.0
    if h / m <= 0.125:
        # Gauss series in h/m, convergent and cancellation-free far from the seam.
        return m ** (-s) * h ** (c + 1) * float(special.hyp2f1(s, c + 1, c + 2, h / m)) / (c + 1)
    a = m - h
    total = 0.0
    for j in range(c + 1):
        k = j - s + 1.0
        # (m**k - a**k) / k, written to keep relative accuracy when a is close to m.
        diff = m**k * -math.expm1(k * math.log(a / m)) / k
        total += math.comb(c, j) * m ** (c - j) * (-1.0) ** j * diff
    return total


def _uniform_power_record(beta: float, eta: float, m: float) -> TruncatedStats:
    h = min(1.0, m - eta)
    k1 = (beta - 1) / (beta - 2)
    k2 = (beta - 1) / (beta - 3)
    c = eta ** (beta - 1)
    flat = 1.0 - h  # goal mass where the discrepancy is unconstrained
    a0 = c * _power_integral(0, beta - 1, m, h) + flat
    a_g = c * _power_integral(1, beta - 1, m, h) + (1.0 - h * h) / 2.0
    a_g2 = c * _power_integral(2, beta - 1, m, h) + (1.0 - h**3) / 3.0
    a_x = k1 * c * _power_integral(0, beta - 2, m, h) + k1 * eta * flat
    a_x2 = k2 * c * _power_integral(0, beta - 3, m, h) + k2 * eta * eta * flat
    a_gx = k1 * c * _power_integral(1, beta - 2, m, h) + k1 * eta * (1.0 - h * h) / 2.0
    e_g, e_g2, e_x, e_x2, e_gx = (v / a0 for v in (a_g, a_g2, a_x, a_x2, a_gx))
    return TruncatedStats.assemble(
        a0, m, e_g, e_x, e_g2 - e_g * e_g, e_x2 - e_x * e_x, e_gx - e_g * e_x, Method.CLOSED_FORM
    )


def uniform_power_stats_high(beta: float, eta: float, m: float) -> TruncatedStats:
    """All conditional moments and ``alpha`` for ``m >= 1 + eta``."""
    _check_beta(beta)
    if not m >= 1 + eta:
        raise DomainError(f"high regime needs m >= 1 + eta = {1 + eta}, got {m}")
    return _uniform_power_record(beta, eta, m)


def uniform_power_stats_mid(beta: float, eta: float, m: float) -> TruncatedStats:
    """All conditional moments and ``alpha`` for ``eta <= m <= 1 + eta``."""
    _check_beta(beta)
    if not eta <= m <= 1 + eta:
        raise DomainError(f"mid regime needs {eta} <= m <= {1 + eta}, got {m}")
    return _uniform_power_record(beta, eta, m)


def uniform_power_e_g_asymptotic(beta: float, m: float) -> float:
    """Large-threshold goal mean ``1/2 + (beta-1)/(12 m)``."""
    return 0.5 + (beta - 1) / (12.0 * m)


def uniform_power_rho_asymptotic(beta: float, epsilon: float, alpha: float) -> AsymptoticPrediction:
    """Leading-order truncated correlation ``-alpha**(1/(beta-1)) / (12 (beta-2) epsilon)``.

    Follows from ``rho ~ -sqrt((beta-3)/(12 (beta-1))) / m_alpha`` and
    ``m_alpha ~ eta alpha**(-1/(beta-1))`` at the calibrated scale ``eta``.
    ``details['sqrt12_variant']`` holds the same law with ``sqrt(12)`` in place
    of 12, which the quadrature does not follow.
    """
    _check_beta(beta)
    lead = -(alpha ** (1.0 / (beta - 1))) / ((beta - 2) * epsilon)
    return AsymptoticPrediction(
        value=lead / 12.0,
        validity="alpha -> 0 with m_alpha >> 1",
        kind=Kind.LEADING_ORDER,
        details={
            "rho_times_m": -math.sqrt((beta - 3) / (12.0 * (beta - 1))),
            "sqrt12_variant": lead / SQRT12,
        },
    )


@dataclass(frozen=True)
class TurningPoint:
    alpha: float
    m: float
    rho_limit: float
    alpha_over_epsilon_limit: float


def uniform_power_turning_point(beta: float, epsilon: float) -> TurningPoint:
    """Selection level where ``m_alpha = 1 + eta`` and the small-epsilon limit of rho there."""
    _check_beta(beta)
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    eta = dist.calibrate(dist.Family.POWER_LAW, epsilon, beta=beta)["eta"]
    alpha = eta * -math.expm1((beta - 2) * math.log(eta / (1.0 + eta))) / (beta - 2)
    rho_limit = max(-math.sqrt((beta - 3) / (2 * (beta - 2))), -1.0 / (beta - 2))
    return TurningPoint(alpha, 1.0 + eta, rho_limit, math.sqrt(12.0 * (beta - 3) / (beta - 1)))


def conditional_measure_given_goal(beta: float, m: float, g: float, eta: float | None = None) -> float:
    """``E[M | M >= m, G = g] = m + (m - g)/(beta - 2)`` in the pure power-law tail."""
    if not beta > 2:
        raise DomainError("beta must exceed 2")
    if eta is not None and (m - g < eta or m < eta + 1):
        raise DomainError("needs m - g >= eta and m >= eta + 1")
    if m - g < 0:
        raise DomainError("needs m >= g")
    return m + (m - g) / (beta - 2)


# ---------------------------------------------------------------- power-law goal and discrepancy


def power_power_integral(m: float, kappa: float, nu: float, eta: float) -> float:
    """``I(m, kappa, nu) = integral_1^(m-eta) (m-g)**(-kappa) g**(-nu) dg``."""
    if m * np.finfo(float).eps > eta:
        raise DomainError(f"m={m:.3g} is too large to resolve eta={eta:.3g} in double precision")
    hi = m - eta
    if not hi > 1:
        return 0.0
    # Integrate in units of the peak at the upper end to keep values O(1).
    lscale = -kappa * math.log(eta)

    def f(g):
        return np.exp(-kappa * np.log(m - g) - nu * np.log(g) - lscale)

    res = integrate(f, geometric_breaks(1.0, hi, 1.0, eta))
    return float(res.value[0]) * math.exp(lscale)


def power_power_moment(beta: float, eta: float, gamma: float, m: float, c: int, b: int) -> float:
    """``E[G**c xi**b | M >= m]`` for a power-law goal (scale 1) and discrepancy."""
    _check_beta(beta)
    if not gamma > 3:
        raise DomainError("gamma must exceed 3")
    if not (b < beta - 1 and c < gamma - 1):
        raise DomainError("moment does not exist")
    if not m > 1 + eta:
        raise DomainError(f"needs m > 1 + eta = {1 + eta}")
    xi = dist.power_law(beta, eta)

    def scaled(cc: int, bb: int) -> float:
        inner = (gamma - 1) * (beta - 1) / (beta - 1 - bb) * eta ** (beta - 1) * power_power_integral(
            m, beta - 1 - bb, gamma - cc, eta
        )
        rest = dist.raw_moment(xi, bb) * (gamma - 1) / (gamma - 1 - cc) * (m - eta) ** (1 + cc - gamma)
        return inner + rest

    return scaled(c, b) / scaled(0, 0)


def power_power_alpha(beta: float, eta: float, gamma: float, m: float) -> float:
    _check_beta(beta)
    if not m > 1 + eta:
        raise DomainError(f"needs m > 1 + eta = {1 + eta}")
    inner = (gamma - 1) * eta ** (beta - 1) * power_power_integral(m, beta - 1, gamma, eta)
    return inner + (m - eta) ** (1 - gamma)


def power_power_stats(beta: float, eta: float, gamma: float, m: float) -> TruncatedStats:
    mom = {cb: power_power_moment(beta, eta, gamma, m, *cb) for cb in ((1, 0), (2, 0), (0, 1), (0, 2), (1, 1))}
    e_g, e_x = mom[(1, 0)], mom[(0, 1)]
    return TruncatedStats.assemble(
        power_power_alpha(beta, eta, gamma, m), m, e_g, e_x,
        mom[(2, 0)] - e_g * e_g, mom[(0, 2)] - e_x * e_x, mom[(1, 1)] - e_g * e_x, Method.CLOSED_FORM,
    )


def power_power_constants(beta: float, gamma: float) -> tuple[float, float]:
    """The constants ``(C, D)`` of the power-law pair's correlation asymptote."""
    b, g = beta, gamma
    root_c = math.sqrt((g - 3) * (b - 3) / ((g - 1) * (b - 1)))
    c = (b - 2) * ((g - 1) / (g - 2) * (b - 1) / (b - 2) - (g - 1) / (g - 3)) * root_c
    d = (1 + (b - 1) * (g + b - 3)) / (g - 2) * math.sqrt((g - 1) * (b - 3) / ((g - 3) * (b - 1)))
    return c, d


_PP_BOUNDARIES = (0.0, 1.0, 2.0, 3.0)


def power_power_rho_asymptotic(beta: float, gamma: float, epsilon: float, alpha: float) -> AsymptoticPrediction:
    """Three-regime leading behaviour of rho for the power-law pair."""
    _check_beta(beta)
    if not gamma > 3:
        raise DomainError("gamma must exceed 3")
    d = gamma - beta
    for bnd in _PP_BOUNDARIES:
        if abs(d - bnd) <= 1e-9:
            raise DomainError(f"gamma - beta = {bnd} is a regime boundary; no prediction there")
    c_const, d_const = power_power_constants(beta, gamma)
    if d < 0:
        return AsymptoticPrediction(1.0, "alpha -> 0, gamma < beta", Kind.LIMIT)
    if d < 2:
        val = -c_const * epsilon ** (-(gamma - 1) / 2) * alpha ** (d / (2 * (beta - 1)))
        return AsymptoticPrediction(val, "alpha -> 0, 0 < gamma - beta < 2", Kind.LEADING_ORDER, {"C": c_const})
    val = -d_const * alpha ** (1.0 / (beta - 1)) / epsilon
    return AsymptoticPrediction(val, "alpha -> 0, gamma - beta > 2", Kind.LEADING_ORDER, {"D": d_const})


def power_power_strong_rho_leading(beta: float, gamma: float, epsilon: float, alpha: float) -> AsymptoticPrediction:
    """Leading order for ``gamma - beta > 2`` obtained from the tail of the exact moments.

    ``Cov(G, M)`` tends to ``-Var(G)/(beta-2)`` while ``Var(M)`` grows like
    ``m**2 (beta-1)/((beta-2)**2 (beta-3))``, so
    ``rho ~ -sqrt(Var(G) (beta-3)/(beta-1)) / m_alpha`` and, with
    ``m_alpha ~ eta alpha**(-1/(beta-1))``, ``rho ~ -alpha**(1/(beta-1)) / ((beta-2) epsilon)``.
    """
    _check_beta(beta)
    if not gamma - beta > 2:
        raise DomainError("needs gamma - beta > 2")
    var_g = (gamma - 1) / ((gamma - 2) ** 2 * (gamma - 3))
    return AsymptoticPrediction(
        -(alpha ** (1.0 / (beta - 1))) / ((beta - 2) * epsilon),
        "alpha -> 0, gamma - beta > 2",
        Kind.LEADING_ORDER,
        {"rho_times_m": -math.sqrt(var_g * (beta - 3) / (beta - 1))},
    )
