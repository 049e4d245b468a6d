"""Scalar probability laws used as goals and discrepancies.

Every function is vectorised over ``x`` (or ``p``) and returns a Python float
for scalar input.  Tails are evaluated on the log scale where the family has
one, so survival values far below the double-precision underflow of a naive
``1 - cdf`` remain accurate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np
from scipy import special

from .errors import ConfigError, DomainError, MomentDoesNotExist

TAU = 2.0 * math.pi
SQRT12 = math.sqrt(12.0)
_LOG_SQRT_TAU = 0.5 * math.log(TAU)
_BETA4_GUARD = 1e-6


class Family(str, enum.Enum):
    UNIFORM01 = "uniform01"
    EXPONENTIAL = "exponential"
    NORMAL = "normal"
    POWER_LAW = "power_law"
    LOG_NORMAL = "log_normal"
    NEG_EXP_GOAL = "neg_exp_goal"


# Name of the single scale parameter each family accepts in config files.
_SCALE_KEY = {
    Family.EXPONENTIAL: "rate",
    Family.NORMAL: "sigma",
    Family.POWER_LAW: "eta",
    Family.LOG_NORMAL: "eta",
}
_PARAM_NAMES = {
    Family.UNIFORM01: (),
    Family.EXPONENTIAL: ("rate",),
    Family.NORMAL: ("sigma",),
    Family.POWER_LAW: ("beta", "eta"),
    Family.LOG_NORMAL: ("eta",),
    Family.NEG_EXP_GOAL: (),
}


@dataclass(frozen=True)
class DistributionSpec:
    """A family tag plus its real parameters, validated on construction."""

    family: Family
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self) -> None:
        fam = Family(self.family)
        object.__setattr__(self, "family", fam)
        names = tuple(k for k, _ in self.params)
        if set(names) != set(_PARAM_NAMES[fam]):
            raise DomainError(f"{fam.value} expects parameters {_PARAM_NAMES[fam]}, got {names}")
        ordered = tuple((k, float(dict(self.params)[k])) for k in _PARAM_NAMES[fam])
        object.__setattr__(self, "params", ordered)
        for k, v in ordered:
            if not math.isfinite(v) or v <= 0:
                raise DomainError(f"{fam.value}: parameter {k} must be a positive finite number, got {v}")
        if fam is Family.POWER_LAW:
            beta = dict(ordered)["beta"]
            if beta <= 3:
                raise DomainError(f"power_law needs beta > 3 for a finite variance, got {beta}")
            if abs(beta - 4.0) <= _BETA4_GUARD:
                raise DomainError("power_law with |beta - 4| <= 1e-6 is rejected (closed forms divide by beta - 4)")

    def __getitem__(self, name: str) -> float:
        return dict(self.params)[name]

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"family": self.family.value}
        out.update(self.params)
        return out

    def __repr__(self) -> str:
        inner = ", ".join(f"{k}={v:.17g}" for k, v in self.params)
        return f"{self.family.value}({inner})"


def uniform01() -> DistributionSpec:
    return DistributionSpec(Family.UNIFORM01)


def exponential(rate: float) -> DistributionSpec:
    return DistributionSpec(Family.EXPONENTIAL, (("rate", rate),))


def normal(sigma: float) -> DistributionSpec:
    return DistributionSpec(Family.NORMAL, (("sigma", sigma),))


def power_law(beta: float, eta: float) -> DistributionSpec:
    return DistributionSpec(Family.POWER_LAW, (("beta", beta), ("eta", eta)))


def log_normal(eta: float) -> DistributionSpec:
    return DistributionSpec(Family.LOG_NORMAL, (("eta", eta),))


def neg_exp_goal() -> DistributionSpec:
    return DistributionSpec(Family.NEG_EXP_GOAL)


# ---------------------------------------------------------------- helpers


def _arr(x) -> tuple[np.ndarray, bool]:
    a = np.asarray(x, dtype=np.float64)
    return a, a.ndim == 0


def _ret(a: np.ndarray, scalar: bool):
    return float(a) if scalar else a


def _normal_tail(z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hazard ``phi(z)/Q(z)`` and variance of a standard normal given ``Z >= z``."""
    z = np.asarray(z, dtype=np.float64)
    h = np.empty_like(z)
    v = np.empty_like(z)
    small = z <= 5.0
    if np.any(small):
        zs = z[small]
        with np.errstate(over="ignore", invalid="ignore"):
            hs = math.sqrt(2.0 / math.pi) / special.erfcx(zs / math.sqrt(2.0))
            zh = np.where(np.isfinite(zs), zs * hs, 0.0)
        h[small] = hs
        v[small] = 1.0 + zh - hs * hs
    big = ~small
    if np.any(big):
        # Laplace continued fraction for the Mills ratio, keeping the last two
        # tails so that h - z and the variance avoid cancellation.
        zb = z[big]
        t = np.zeros_like(zb)
        for k in range(160, 1, -1):
            t = k / (zb + t)
        t2 = t
        t1 = 1.0 / (zb + t2)
        h[big] = zb + t1
        v[big] = (t2 * (zb + t2) - 1.0) * t1 * t1
    return h, v


def _log_q(z):
    return special.log_ndtr(-np.asarray(z, dtype=np.float64))


# ---------------------------------------------------------------- densities


def support(d: DistributionSpec) -> tuple[float, float]:
    fam = d.family
    if fam is Family.UNIFORM01:
        return 0.0, 1.0
    if fam is Family.EXPONENTIAL or fam is Family.LOG_NORMAL:
        return 0.0, math.inf
    if fam is Family.NORMAL:
        return -math.inf, math.inf
    if fam is Family.POWER_LAW:
        return d["eta"], math.inf
    return -math.inf, 0.0


def scale(d: DistributionSpec) -> float:
    """Characteristic length of the law, used to seed interval splitting."""
    fam = d.family
    if fam is Family.EXPONENTIAL:
        return 1.0 / d["rate"]
    if fam is Family.NORMAL:
        return d["sigma"]
    if fam is Family.POWER_LAW:
        return d["eta"]
    return 1.0


def log_pdf(d: DistributionSpec, x):
    a, sc = _arr(x)
    fam = d.family
    with np.errstate(divide="ignore", invalid="ignore"):
        if fam is Family.UNIFORM01:
            out = np.where((a >= 0) & (a <= 1), 0.0, -np.inf)
        elif fam is Family.EXPONENTIAL:
            lam = d["rate"]
            out = np.where(a >= 0, math.log(lam) - lam * a, -np.inf)
        elif fam is Family.NORMAL:
            s = d["sigma"]
            out = -0.5 * (a / s) ** 2 - math.log(s) - _LOG_SQRT_TAU
        elif fam is Family.POWER_LAW:
            beta, eta = d["beta"], d["eta"]
            val = math.log(beta - 1) + (beta - 1) * math.log(eta) - beta * np.log(np.maximum(a, eta))
            out = np.where(a >= eta, val, -np.inf)
        elif fam is Family.LOG_NORMAL:
            eta = d["eta"]
            la = np.log(np.where(a > 0, a, 1.0))
            val = -0.5 * (la / eta) ** 2 - la - math.log(eta) - _LOG_SQRT_TAU
            out = np.where(a > 0, val, -np.inf)
        else:
            out = np.where(a <= 0, a, -np.inf)
    return _ret(np.asarray(out, dtype=np.float64), sc)


def pdf(d: DistributionSpec, x):
    """Density at ``x``; zero outside the support."""
    a, sc = _arr(x)
    return _ret(np.exp(np.asarray(log_pdf(d, a))), sc)


def log_survival(d: DistributionSpec, x):
    """``log P[X >= x]``, accurate deep into the tail."""
    a, sc = _arr(x)
    fam = d.family
    with np.errstate(divide="ignore", invalid="ignore"):
        if fam is Family.UNIFORM01:
            out = np.log(np.clip(1.0 - a, 0.0, 1.0))
        elif fam is Family.EXPONENTIAL:
            out = -d["rate"] * np.maximum(a, 0.0)
        elif fam is Family.NORMAL:
            out = _log_q(a / d["sigma"])
        elif fam is Family.POWER_LAW:
            beta, eta = d["beta"], d["eta"]
            out = np.where(a > eta, (beta - 1) * (math.log(eta) - np.log(np.maximum(a, eta))), 0.0)
        elif fam is Family.LOG_NORMAL:
            eta = d["eta"]
            out = np.where(a > 0, _log_q(np.log(np.where(a > 0, a, 1.0)) / eta), 0.0)
        else:
            neg = np.minimum(a, 0.0)
            out = np.where(a < 0, np.log(-np.expm1(neg)), -np.inf)
    return _ret(np.asarray(out, dtype=np.float64), sc)


def survival(d: DistributionSpec, x):
    """``P[X >= x]``."""
    a, sc = _arr(x)
    return _ret(np.exp(np.asarray(log_survival(d, a))), sc)


def raw_moment(d: DistributionSpec, n: int) -> float:
    return float(upper_partial_moment(d, -math.inf, n))


def upper_partial_moment(d: DistributionSpec, x, n: int):
    """``integral_x^inf t**n p(t) dt`` for ``n`` in {0, 1, 2}.

    Below the support this is the raw moment ``E[X**n]``.
    """
    if n not in (0, 1, 2):
        raise DomainError(f"partial moments are provided for n in {{0, 1, 2}}, got {n}")
    a, sc = _arr(x)
    fam = d.family
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if fam is Family.UNIFORM01:
            c = np.clip(a, 0.0, 1.0)
            out = (1.0 - c ** (n + 1)) / (n + 1)
        elif fam is Family.EXPONENTIAL:
            lam = d["rate"]
            y = np.maximum(a, 0.0)
            e = np.exp(-lam * y)
            poly = (1.0, y + 1.0 / lam, y * y + 2.0 * y / lam + 2.0 / lam**2)[n]
            out = poly * e
        elif fam is Family.NORMAL:
            s = d["sigma"]
            z = a / s
            q = special.ndtr(-z)
            phi = np.exp(-0.5 * z * z) / math.sqrt(TAU)
            if n == 0:
                out = q
            elif n == 1:
                out = s * phi
            else:
                zphi = np.where(np.isfinite(z), z * phi, 0.0)
                out = s * s * (zphi + q)
        elif fam is Family.POWER_LAW:
            beta, eta = d["beta"], d["eta"]
            if n + 1 >= beta:
                raise MomentDoesNotExist(f"power_law moment of order {n} needs beta > {n + 1}")
            y = np.maximum(a, eta)
            out = (beta - 1) / (beta - 1 - n) * eta ** (beta - 1) * y ** (n + 1 - beta)
        elif fam is Family.LOG_NORMAL:
            eta = d["eta"]
            la = np.log(np.where(a > 0, a, 1.0))
            tail = special.ndtr(-(la - n * eta * eta) / eta)
            out = math.exp(0.5 * n * n * eta * eta) * np.where(a > 0, tail, 1.0)
        else:
            y = np.minimum(a, 0.0)
            e = np.exp(y)
            fin = np.isfinite(y)
            if n == 0:
                out = -np.expm1(y)
            elif n == 1:
                out = np.where(fin, -1.0 - (y - 1.0) * e, -1.0)
            else:
                out = np.where(fin, 2.0 - (y * y - 2.0 * y + 2.0) * e, 2.0)
    return _ret(np.asarray(out, dtype=np.float64) + 0.0, sc)


def tail_mean_var(d: DistributionSpec, x):
    """Mean and variance of ``X`` given ``X >= x``, evaluated without cancellation."""
    a, sc = _arr(x)
    fam = d.family
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        if fam is Family.EXPONENTIAL:
            lam = d["rate"]
            r1 = np.maximum(a, 0.0) + 1.0 / lam
            v = np.full_like(a, 1.0 / lam**2)
        elif fam is Family.POWER_LAW:
            beta, eta = d["beta"], d["eta"]
            y = np.maximum(a, eta)
            r1 = (beta - 1) / (beta - 2) * y
            v = y * y * (beta - 1) / ((beta - 2) ** 2 * (beta - 3))
        elif fam is Family.NORMAL:
            s = d["sigma"]
            h, vs = _normal_tail(a / s)
            r1, v = s * h, s * s * vs
        elif fam is Family.LOG_NORMAL:
            eta = d["eta"]
            pos = a > 0
            z = np.where(pos, np.log(np.where(pos, a, 1.0)) / eta, -np.inf)
            lq0 = _log_q(z)
            lq1 = _log_q(z - eta)
            lq2 = _log_q(z - 2 * eta)
            r1 = np.exp(0.5 * eta * eta + lq1 - lq0)
            v = r1 * r1 * np.expm1(eta * eta + lq2 + lq0 - 2.0 * lq1)
        elif fam is Family.UNIFORM01:
            c = np.clip(a, 0.0, 1.0)
            r1 = 0.5 * (c + 1.0)
            v = (1.0 - c) ** 2 / 12.0
        else:
            m0 = np.asarray(upper_partial_moment(d, a, 0))
            r1 = np.asarray(upper_partial_moment(d, a, 1)) / m0
            v = np.asarray(upper_partial_moment(d, a, 2)) / m0 - r1 * r1
    r1 = np.asarray(r1, dtype=np.float64)
    v = np.maximum(np.asarray(v, dtype=np.float64), 0.0)
    return (_ret(r1, sc), _ret(v, sc))


def tail_mean_delta(d: DistributionSpec, x, x_ref: float, dx):
    """``r1(x) - r1(x_ref)`` where ``r1(t) = E[X | X >= t]`` and ``dx = x - x_ref``.

    ``dx`` is supplied separately because ``x`` is typically ``m - g`` with a
    large ``m``; for the linear tails the difference then keeps full accuracy.
    """
    a, sc = _arr(x)
    dxa = np.broadcast_to(np.asarray(dx, dtype=np.float64), a.shape)
    fam = d.family
    if fam is Family.EXPONENTIAL:
        direct = np.maximum(a, 0.0) - max(x_ref, 0.0)
        out = np.where((a >= 0) & (x_ref >= 0), dxa, direct)
    elif fam is Family.POWER_LAW:
        beta, eta = d["beta"], d["eta"]
        k1 = (beta - 1) / (beta - 2)
        direct = k1 * (np.maximum(a, eta) - max(x_ref, eta))
        out = np.where((a >= eta) & (x_ref >= eta), k1 * dxa, direct)
    elif fam is Family.UNIFORM01:
        out = 0.5 * (np.clip(a, 0.0, 1.0) - min(max(x_ref, 0.0), 1.0))
    else:
        r, _ = tail_mean_var(d, a)
        r0, _ = tail_mean_var(d, x_ref)
        out = np.asarray(r) - r0
    return _ret(np.asarray(out, dtype=np.float64), sc)


def mean(d: DistributionSpec) -> float:
    fam = d.family
    if fam is Family.UNIFORM01:
        return 0.5
    if fam is Family.EXPONENTIAL:
        return 1.0 / d["rate"]
    if fam is Family.NORMAL:
        return 0.0
    if fam is Family.POWER_LAW:
        return (d["beta"] - 1) / (d["beta"] - 2) * d["eta"]
    if fam is Family.LOG_NORMAL:
        return math.exp(0.5 * d["eta"] ** 2)
    return -1.0


def variance(d: DistributionSpec) -> float:
    fam = d.family
    if fam is Family.UNIFORM01:
        return 1.0 / 12.0
    if fam is Family.EXPONENTIAL:
        return 1.0 / d["rate"] ** 2
    if fam is Family.NORMAL:
        return d["sigma"] ** 2
    if fam is Family.POWER_LAW:
        b, e = d["beta"], d["eta"]
        return (b - 1) * e * e / ((b - 2) ** 2 * (b - 3))
    if fam is Family.LOG_NORMAL:
        s2 = d["eta"] ** 2
        return math.expm1(s2) * math.exp(s2)
    return 1.0


def quantile(d: DistributionSpec, p):
    """The ``x`` with ``survival(x) == p`` for ``p`` in (0, 1]."""
    a, sc = _arr(p)
    if np.any(~((a > 0) & (a <= 1))):
        raise DomainError("quantile needs p in (0, 1]")
    fam = d.family
    with np.errstate(divide="ignore"):
        if fam is Family.UNIFORM01:
            out = 1.0 - a
        elif fam is Family.EXPONENTIAL:
            out = -np.log(a) / d["rate"]
        elif fam is Family.NORMAL:
            out = -d["sigma"] * special.ndtri(a)
        elif fam is Family.POWER_LAW:
            out = d["eta"] * a ** (-1.0 / (d["beta"] - 1))
        elif fam is Family.LOG_NORMAL:
            out = np.exp(-d["eta"] * special.ndtri(a))
        else:
            out = np.log1p(-a)
    return _ret(np.asarray(out, dtype=np.float64) + 0.0, sc)


def sample(d: DistributionSpec, u):
    """Inverse-survival transform of uniforms ``u`` in (0, 1]."""
    return quantile(d, u)


def sample_stream(d: DistributionSpec, stream, start: int, count: int) -> np.ndarray:
    """Draws ``start .. start+count-1`` of a counter-based stream."""
    return np.asarray(quantile(d, stream.uniforms(start, count)))


# ---------------------------------------------------------------- calibration


def calibrate(family, epsilon: float, beta: float | None = None, gamma: float | None = None) -> DistributionSpec:
    """Discrepancy law at noise level ``epsilon`` in the conventional parameterisation.

    * exponential: ``rate = 1/(epsilon*sqrt(12))`` (uniform goal)
    * power_law: ``eta = (beta-2) sqrt((beta-3)/(beta-1)) epsilon sqrt(12)`` against
      a uniform goal, or, when ``gamma`` is given, the scale matching
      ``Var(xi) = epsilon**2 Var(G)`` for a power-law goal of decay ``gamma``
    * log_normal: ``eta**2 = ln((1 + sqrt(1 + 4 epsilon**2))/2)``
    * normal: ``sigma = epsilon`` (standard normal goal)
    """
    fam = Family(family)
    if not (epsilon > 0 and math.isfinite(epsilon)):
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    if fam is Family.EXPONENTIAL:
        return exponential(1.0 / (epsilon * SQRT12))
    if fam is Family.NORMAL:
        return normal(epsilon)
    if fam is Family.LOG_NORMAL:
        return log_normal(math.sqrt(math.log((1.0 + math.sqrt(1.0 + 4.0 * epsilon**2)) / 2.0)))
    if fam is Family.POWER_LAW:
        if beta is None or beta <= 3:
            raise DomainError(f"power_law calibration needs beta > 3, got {beta}")
        if gamma is None:
            eta = (beta - 2) * math.sqrt((beta - 3) / (beta - 1)) * epsilon * SQRT12
        else:
            if gamma <= 3:
                raise DomainError(f"a power-law goal needs gamma > 3, got {gamma}")
            eta = epsilon * (beta - 2) / (gamma - 2) * math.sqrt((gamma - 1) * (beta - 3) / ((gamma - 3) * (beta - 1)))
        return power_law(beta, eta)
    raise DomainError(f"no calibrated form for family {fam.value}")


def power_law_goal(gamma: float) -> DistributionSpec:
    """Goal with density ``(gamma-1) g**-gamma`` on ``g >= 1``."""
    return power_law(gamma, 1.0)


# ---------------------------------------------------------------- config I/O


def from_dict(obj: Mapping[str, Any], goal_gamma: float | None = None) -> tuple[DistributionSpec, float | None]:
    """Parse a config object; returns the law and the calibration epsilon, if any.

    ``goal_gamma`` selects the power-law-goal calibration for ``power_law``.
    """
    if not isinstance(obj, Mapping) or "family" not in obj:
        raise ConfigError("a distribution needs a 'family' field")
    try:
        fam = Family(obj["family"])
    except ValueError as exc:
        raise ConfigError(f"unknown family {obj['family']!r}") from exc
    keys = set(obj) - {"family"}
    allowed = set(_PARAM_NAMES[fam]) | ({"epsilon"} if fam in _SCALE_KEY else set())
    extra = keys - allowed
    if extra:
        raise ConfigError(f"{fam.value}: unexpected fields {sorted(extra)}")
    scale_key = _SCALE_KEY.get(fam)
    if scale_key is None:
        return DistributionSpec(fam), None
    has_scale, has_eps = scale_key in obj, "epsilon" in obj
    if has_scale == has_eps:
        raise ConfigError(f"{fam.value}: give exactly one of '{scale_key}' or 'epsilon'")
    try:
        if has_eps:
            eps = float(obj["epsilon"])
            return calibrate(fam, eps, beta=_opt(obj, "beta"), gamma=goal_gamma), eps
        params = tuple((k, float(obj[k])) for k in _PARAM_NAMES[fam])
        return DistributionSpec(fam, params), None
    except KeyError as exc:
        raise ConfigError(f"{fam.value}: missing field {exc.args[0]!r}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{fam.value}: {exc}") from exc


def _opt(obj: Mapping[str, Any], key: str) -> float | None:
    return float(obj[key]) if key in obj else None
