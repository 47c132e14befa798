"""Orlicz gauges and Luxembourg norms of dyadic step functions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .dyadic import DyadicFunction, LOG_OFFSET

GAUGE_TAGS = ("identity", "L_logL_half", "L_logL_loglogL", "L_loglogL_logloglogL", "exp_L2", "custom")

# grid used for the convexity / monotonicity checks
_CHECK_GRID = np.concatenate(([0.0], np.geomspace(1e-6, 1e6, 2401)))


def _lp(t):
    return LOG_OFFSET + np.log(np.maximum(t, 1.0))


def _psi_identity(t):
    return t


def _psi_logl_half(t):
    return t * np.sqrt(_lp(t))


def _psi_logl_loglogl(t):
    lp = _lp(t)
    return t * lp * np.log(lp)


def _psi_loglogl_logloglogl(t):
    ll = np.log(_lp(t))
    return t * ll * np.log(ll)


def _psi_exp_l2(t):
    return np.expm1(t * t)


def _log_psi_exp_l2(t):
    # log(e^{x} - 1) = x + log(1 - e^{-x}); -inf at 0
    x = t * t
    with np.errstate(divide="ignore"):
        return np.where(x > 0, x + np.log(-np.expm1(-np.maximum(x, 1e-300))), -np.inf)


_BUILTIN = {
    "identity": _psi_identity,
    "L_logL_half": _psi_logl_half,
    "L_logL_loglogL": _psi_logl_loglogl,
    "L_loglogL_logloglogL": _psi_loglogl_logloglogl,
    "exp_L2": _psi_exp_l2,
}


@dataclass(frozen=True)
class OrliczGauge:
    """Convex non-decreasing ``psi`` with ``psi(0) = 0``, unbounded.

    Custom evaluators that fail the grid convexity check are replaced by
    their convex minorant on the check grid (linear interpolation between
    hull vertices, linear extrapolation beyond the grid).
    """

    tag: str
    evaluator: Callable = field(compare=False, default=None)

    def __post_init__(self):
        if self.tag not in GAUGE_TAGS:
            raise ValueError(f"unknown gauge tag {self.tag!r}")
        if self.tag == "custom":
            if self.evaluator is None:
                raise ValueError("custom gauge needs an evaluator")
            if not self.is_convex():
                object.__setattr__(self, "evaluator", _convex_minorant(self.evaluator))
        else:
            object.__setattr__(self, "evaluator", _BUILTIN[self.tag])

    def __call__(self, t):
        return self.evaluator(np.asarray(t, dtype=float))

    def _grid(self) -> np.ndarray:
        # exp(t^2) overflows past t ~ 26
        return _CHECK_GRID[_CHECK_GRID <= 20.0] if self.tag == "exp_L2" else _CHECK_GRID

    def check(self) -> dict:
        y = self(self._grid())
        return {
            "zero_at_zero": bool(abs(y[0]) < 1e-300),
            "non_decreasing": bool(np.all(np.diff(y) >= -1e-12 * np.abs(y[1:]))),
            "convex": self.is_convex(),
            "unbounded": bool(y[-1] > 1e3 * max(y[1], 1e-300)),
        }

    def is_convex(self) -> bool:
        t = self._grid()
        y = np.asarray(self.evaluator(t), dtype=float)
        slopes = np.diff(y) / np.diff(t)
        return bool(np.all(np.diff(slopes) >= -1e-9 * np.abs(slopes[1:]) - 1e-12))

    def mean_exceeds_one(self, a: np.ndarray, C: float) -> bool:
        """Whether ``mean(psi(a / C)) >= 1``, overflow-safe for ``exp_L2``."""
        t = a / C
        if self.tag == "exp_L2":
            return bool(logsumexp(_log_psi_exp_l2(t)) - math.log(t.size) >= 0.0)
        return bool(np.mean(self(t)) >= 1.0)


def _convex_minorant(psi: Callable) -> Callable:
    t = _CHECK_GRID
    y = np.asarray(psi(t), dtype=float)
    hull = [0]
    for i in range(1, t.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b if it lies above the chord a -> i
            if (y[b] - y[a]) * (t[i] - t[a]) >= (y[i] - y[a]) * (t[b] - t[a]):
                hull.pop()
            else:
                break
        hull.append(i)
    ht, hy = t[hull], y[hull]
    slope = (hy[-1] - hy[-2]) / (ht[-1] - ht[-2])

    def minorant(s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= ht[-1], np.interp(s, ht, hy), hy[-1] + slope * (s - ht[-1]))

    return minorant


def gauge(tag: str, evaluator: Callable | None = None) -> OrliczGauge:
    return OrliczGauge(tag, evaluator)


def luxembourg_norm(f: DyadicFunction | np.ndarray, psi: OrliczGauge | str,
                    rtol: float = 1e-10, max_iter: int = 200) -> float:
    """``inf{C : mean psi(|f|/C) < 1}`` by bracketing and bisection.

    ``C -> mean psi(|f|/C)`` is non-increasing, so the crossing is unique.
    """
    if isinstance(psi, str):
        psi = gauge(psi)
    a = np.abs(f.values if isinstance(f, DyadicFunction) else np.asarray(f, dtype=float))
    if not np.any(a):
        return 0.0
    C = float(np.mean(a))
    hi = C
    while psi.mean_exceeds_one(a, hi):
        hi *= 2.0
    lo = hi / 2.0
    while not psi.mean_exceeds_one(a, lo):
        hi = lo
        lo /= 2.0
    for _ in range(max_iter):
        if hi - lo <= rtol * hi:
            break
        mid = 0.5 * (lo + hi)
        if psi.mean_exceeds_one(a, mid):
            lo = mid
        else:
            hi = mid
    return hi
