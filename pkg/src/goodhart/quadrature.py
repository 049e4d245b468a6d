"""Globally adaptive Gauss-Kronrod (7/15) integration of vector-valued integrands.

All components share one subdivision, so ratios of components (conditional
moments) are formed from integrals taken on identical nodes.  Each component
must individually satisfy ``err <= max(abs_tol, rel_tol * integral |f|)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import QuadratureFailure

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])

NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
KRONROD = np.concatenate([_WGK[:-1], _WGK[::-1]])
GAUSS = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod abscissae.
for _i, _w in zip((1, 3, 5), _WG[:3]):
    GAUSS[_i] = _w
    GAUSS[14 - _i] = _w
GAUSS[7] = _WG[3]

_EPS = np.finfo(float).eps
_UFLOW = np.finfo(float).tiny

REL_TOL = 1e-10
ABS_TOL = 1e-14
MAX_DEPTH = 60


@dataclass
class QuadResult:
    value: np.ndarray
    error: np.ndarray
    l1: np.ndarray
    intervals: int


def _rule(f, a: np.ndarray, b: np.ndarray):
    centre = 0.5 * (a + b)
    half = 0.5 * (b - a)
    x = centre[:, None] + half[:, None] * NODES[None, :]
    vals = np.asarray(f(x.ravel()), dtype=np.float64)
    if vals.ndim == 1:
        vals = vals[None, :]
    vals = vals.reshape(vals.shape[0], len(a), 15)
    k = (vals * KRONROD).sum(axis=2) * half
    g = (vals * GAUSS).sum(axis=2) * half
    absv = np.abs(vals)
    resabs = (absv * KRONROD).sum(axis=2) * np.abs(half)
    mean = (vals * KRONROD).sum(axis=2) * 0.5
    resasc = (np.abs(vals - mean[:, :, None]) * KRONROD).sum(axis=2) * np.abs(half)
    err = np.abs(k - g)
    with np.errstate(divide="ignore", invalid="ignore"):
        scaled = resasc * np.minimum(1.0, (200.0 * err / resasc) ** 1.5)
    err = np.where((resasc != 0) & (err != 0), scaled, err)
    floor = 50.0 * _EPS * resabs
    err = np.where(resabs > _UFLOW / (50.0 * _EPS), np.maximum(err, floor), err)
    if not np.all(np.isfinite(k)):
        raise QuadratureFailure("integrand produced a non-finite value")
    return k, err, resabs


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    breakpoints: Sequence[float],
    rel_tol: float = REL_TOL,
    abs_tol: float = ABS_TOL,
    max_depth: int = MAX_DEPTH,
    max_intervals: int = 200_000,
) -> QuadResult:
    """Integrate ``f`` over ``[breakpoints[0], breakpoints[-1]]``.

    ``f`` maps a 1-D array of abscissae to an array of shape ``(ncomp, n)``
    (or ``(n,)`` for a scalar integrand).  Breakpoints mark kinks or scale
    changes and are never straddled by a panel.
    """
    pts = np.unique(np.asarray([p for p in breakpoints if math.isfinite(p)], dtype=np.float64))
    if len(pts) < 2:
        return QuadResult(np.zeros(1), np.zeros(1), np.zeros(1), 0)
    a = pts[:-1].copy()
    b = pts[1:].copy()
    depth = np.zeros(len(a), dtype=np.int64)
    k, err, rabs = _rule(f, a, b)

    while True:
        total = k.sum(axis=1)
        l1 = rabs.sum(axis=1)
        tol = np.maximum(abs_tol, rel_tol * l1)
        if np.all(err.sum(axis=1) <= tol):
            return QuadResult(total, err.sum(axis=1), l1, len(a))
        score = (err / tol[:, None]).max(axis=0)
        order = np.argsort(-score, kind="stable")
        splittable = depth[order] < max_depth
        remaining = np.cumsum(score[order][::-1])[::-1]
        # Split the worst panels until what is left fits in half the budget.
        want = remaining > 0.5
        pick = order[want & splittable]
        if len(pick) == 0:
            raise QuadratureFailure(
                f"tolerance not met at depth {max_depth}: error {err.sum(axis=1)} vs tolerance {tol}"
            )
        if len(a) + len(pick) > max_intervals:
            raise QuadratureFailure(f"interval budget {max_intervals} exhausted")
        mid = 0.5 * (a[pick] + b[pick])
        na = np.concatenate([a[pick], mid])
        nb = np.concatenate([mid, b[pick]])
        nd = np.concatenate([depth[pick], depth[pick]]) + 1
        nk, ne, nr = _rule(f, na, nb)
        keep = np.ones(len(a), dtype=bool)
        keep[pick] = False
        a = np.concatenate([a[keep], na])
        b = np.concatenate([b[keep], nb])
        depth = np.concatenate([depth[keep], nd])
        k = np.concatenate([k[:, keep], nk], axis=1)
        err = np.concatenate([err[:, keep], ne], axis=1)
        rabs = np.concatenate([rabs[:, keep], nr], axis=1)


def geometric_breaks(a: float, b: float, h_lo: float, h_hi: float, ratio: float = 4.0) -> list[float]:
    """Breakpoints clustering geometrically towards both ends of ``[a, b]``.

    Panels grow from width ``h_lo`` at ``a`` and ``h_hi`` at ``b`` by ``ratio``
    until they meet, so features at very different scales near either end are
    resolved without deep bisection.
    """
    if not (b > a):
        return [a, b]
    mid = 0.5 * (a + b)
    pts = [a, b, mid]
    h = h_lo
    while h > 0 and a + h < mid:
        pts.append(a + h)
        h *= ratio
    h = h_hi
    while h > 0 and b - h > mid:
        pts.append(b - h)
        h *= ratio
    return sorted(set(pts))


def integrate_scalar(f, a: float, b: float, rel_tol: float = REL_TOL, abs_tol: float = ABS_TOL, breaks=()) -> float:
    pts = [a, b, *[p for p in breaks if a < p < b]]
    return float(integrate(f, pts, rel_tol=rel_tol, abs_tol=abs_tol).value[0])
