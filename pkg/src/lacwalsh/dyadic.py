"""Dyadic step functions on [0, 1] and exact Walsh-Paley analysis.

A function at resolution ``K`` is stored as its ``2**K`` cell values.  Walsh
functions ``W_n`` with ``n < 2**K`` are constant on those cells, so every
transform, partial sum and maximal function below is exact up to floating
point rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

MAX_RESOLUTION = 24


def _check_resolution(K: int) -> int:
    if not isinstance(K, (int, np.integer)) or K < 0 or K > MAX_RESOLUTION:
        raise ValueError(f"resolution must be an integer in [0, {MAX_RESOLUTION}], got {K!r}")
    return int(K)


def bit_reverse(K: int) -> np.ndarray:
    """Index array ``r`` with ``r[i]`` the K-bit reversal of ``i``."""
    idx = np.arange(1 << K, dtype=np.int64)
    out = np.zeros_like(idx)
    for b in range(K):
        out |= ((idx >> b) & 1) << (K - 1 - b)
    return out


def parity(x: np.ndarray) -> np.ndarray:
    return (np.bitwise_count(np.asarray(x, dtype=np.int64)) & 1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class DyadicFunction:
    """Real function constant on the cells ``[i 2^-K, (i+1) 2^-K)``."""

    K: int
    values: np.ndarray

    def __post_init__(self):
        K = _check_resolution(self.K)
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size != 1 << K:
            raise ValueError(f"expected {1 << K} values at resolution {K}, got {vals.size}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, K: int) -> "DyadicFunction":
        return cls(K, np.zeros(1 << K))

    @classmethod
    def constant(cls, K: int, c: float) -> "DyadicFunction":
        return cls(K, np.full(1 << K, float(c)))

    @classmethod
    def indicator(cls, K: int, cells) -> "DyadicFunction":
        """Indicator of a union of cells, given as an index array or boolean mask."""
        v = np.zeros(1 << K)
        v[np.asarray(cells)] = 1.0
        return cls(K, v)

    @classmethod
    def interval_indicator(cls, K: int, start: float, stop: float) -> "DyadicFunction":
        """Indicator of ``[start, stop)``; both endpoints must lie on the cell grid."""
        a, b = start * (1 << K), stop * (1 << K)
        if abs(a - round(a)) > 1e-12 or abs(b - round(b)) > 1e-12:
            raise ValueError("interval endpoints must be multiples of 2^-K")
        v = np.zeros(1 << K)
        v[int(round(a)):int(round(b))] = 1.0
        return cls(K, v)

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def cell(self) -> float:
        return 1.0 / self.values.size

    def integral(self) -> float:
        return float(self.values.mean())

    def l1(self) -> float:
        return float(np.abs(self.values).mean())

    def l2(self) -> float:
        return float(math.sqrt(np.mean(self.values ** 2)))

    def linf(self) -> float:
        return float(np.abs(self.values).max()) if self.values.size else 0.0

    def lp(self, p: float) -> float:
        return float(np.mean(np.abs(self.values) ** p) ** (1.0 / p))

    def inner(self, other: "DyadicFunction") -> float:
        _same_resolution(self, other)
        return float(np.dot(self.values, other.values) / self.values.size)

    def measure(self) -> float:
        """Measure of the support; equals |F| for an indicator."""
        return float(np.count_nonzero(self.values) / self.values.size)

    def is_indicator(self) -> bool:
        return bool(np.all((self.values == 0.0) | (self.values == 1.0)))

    def is_zero(self) -> bool:
        return not np.any(self.values)

    def refine(self, K2: int) -> "DyadicFunction":
        """Same function sampled at a finer resolution."""
        if K2 < self.K:
            raise ValueError("can only refine to a finer resolution")
        return DyadicFunction(K2, np.repeat(self.values, 1 << (K2 - self.K)))

    def restrict(self, scale: int, index: int) -> "DyadicFunction":
        """Restriction to the dyadic interval ``I(scale, index)``, rescaled to [0, 1]."""
        L = self.K - scale
        if L < 0:
            raise ValueError("interval finer than the resolution")
        return DyadicFunction(L, self.values[index << L:(index + 1) << L])

    def __add__(self, other):
        _same_resolution(self, other)
        return DyadicFunction(self.K, self.values + other.values)

    def __sub__(self, other):
        _same_resolution(self, other)
        return DyadicFunction(self.K, self.values - other.values)

    def __mul__(self, other):
        if isinstance(other, DyadicFunction):
            _same_resolution(self, other)
            return DyadicFunction(self.K, self.values * other.values)
        return DyadicFunction(self.K, self.values * float(other))

    __rmul__ = __mul__

    def __eq__(self, other):
        if not isinstance(other, DyadicFunction):
            return NotImplemented
        return self.K == other.K and bool(np.array_equal(self.values, other.values))

    __hash__ = None

    def __neg__(self):
        return DyadicFunction(self.K, -self.values)

    def __abs__(self):
        return DyadicFunction(self.K, np.abs(self.values))

    def to_json(self) -> dict:
        return {"K": self.K, "values": [float(v) for v in self.values]}

    @classmethod
    def from_json(cls, obj: dict) -> "DyadicFunction":
        if not isinstance(obj, dict) or set(obj) != {"K", "values"}:
            raise ValueError('dyadic function JSON must be {"K": int, "values": [floats]}')
        return cls(int(obj["K"]), np.asarray(obj["values"], dtype=float))

    @classmethod
    def from_csv_lines(cls, lines: Iterable[str]) -> "DyadicFunction":
        vals = [float(s) for s in (ln.strip() for ln in lines) if s]
        n = len(vals)
        if n == 0 or n & (n - 1):
            raise ValueError(f"CSV must hold a power-of-two number of values, got {n}")
        return cls(n.bit_length() - 1, np.asarray(vals))


def _same_resolution(a: DyadicFunction, b: DyadicFunction) -> None:
    if a.K != b.K:
        raise ValueError(f"resolution mismatch: {a.K} vs {b.K}")


@dataclass(frozen=True)
class LacunarySequence:
    """Strictly increasing positive integers with ``min n_{j+1}/n_j > 1``."""

    terms: tuple

    def __post_init__(self):
        t = tuple(int(x) for x in self.terms)
        if not t:
            raise ValueError("lacunary sequence must be non-empty")
        if t[0] <= 0:
            raise ValueError("terms must be positive")
        if any(b <= a for a, b in zip(t, t[1:])):
            raise ValueError("terms must be strictly increasing")
        object.__setattr__(self, "terms", t)
        if self.ratio <= 1.0:
            raise ValueError("lacunarity ratio must exceed 1")

    @property
    def ratio(self) -> float:
        t = self.terms
        if len(t) == 1:
            return math.inf
        return min(b / a for a, b in zip(t, t[1:]))

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    @property
    def max_term(self) -> int:
        return self.terms[-1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.terms, dtype=np.int64)

    @classmethod
    def geometric(cls, ratio: float, bound: int, start: int = 1) -> "LacunarySequence":
        """``n_1 = start``, ``n_{j+1} = ceil(ratio * n_j)``, all terms ``< bound``.

        Ratio 2 from 1 gives the powers of two.
        """
        if ratio <= 1:
            raise ValueError("ratio must exceed 1")
        terms = []
        n = int(start)
        while n < bound:
            terms.append(n)
            n = max(n + 1, int(math.ceil(ratio * n - 1e-9)))
        return cls(tuple(terms))

    @classmethod
    def default(cls, K: int) -> "LacunarySequence":
        """Powers of two up to ``2**(K-1)``."""
        return cls(tuple(1 << j for j in range(max(K, 1))))

    def check_resolution(self, K: int, inclusive: bool = False) -> None:
        lim = 1 << K
        if self.max_term > lim or (not inclusive and self.max_term == lim):
            op = "<=" if inclusive else "<"
            raise ValueError(f"lacunary terms must be {op} 2^K = {lim}; max term is {self.max_term}")


# --- Walsh system -----------------------------------------------------------

def walsh_eval(n: int, cell_index, K: int):
    """Value of ``W_n`` on cell ``cell_index`` at resolution ``K``.

    ``W_n`` is the product of the Rademacher functions ``r_k`` over the set
    bits ``k`` of ``n``; ``r_k`` on cell ``i`` is ``(-1)`` to the bit of ``i``
    at position ``K-1-k``.  Accepts scalar or array cell indices.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    if n >= 1 << K:
        raise ValueError(f"W_{n} is not constant on cells of resolution {K}")
    idx = np.asarray(cell_index, dtype=np.int64)
    if np.any(idx < 0) or np.any(idx >= 1 << K):
        raise ValueError("cell index out of range")
    rev = np.zeros_like(idx)
    for b in range(K):
        rev |= ((idx >> b) & 1) << (K - 1 - b)
    out = 1 - 2 * parity(n & rev)
    return int(out) if out.ndim == 0 else out


def walsh_function(n: int, K: int) -> DyadicFunction:
    return DyadicFunction(K, walsh_eval(n, np.arange(1 << K), K).astype(float))


def _hadamard_last_axis(x: np.ndarray) -> np.ndarray:
    x = np.array(x, dtype=float)
    L = x.shape[-1]
    lead = x.shape[:-1]
    h = 1
    while h < L:
        y = x.reshape(lead + (L // (2 * h), 2, h))
        a = y[..., 0, :].copy()
        b = y[..., 1, :]
        y[..., 0, :] += b
        y[..., 1, :] = a - b
        h *= 2
    return x


def paley_transform(x: np.ndarray) -> np.ndarray:
    """Walsh-Paley coefficients along the last axis (length a power of two).

    ``out[..., k] = mean_i x[..., i] W_k(i)``.
    """
    x = np.asarray(x, dtype=float)
    L = x.shape[-1]
    K = L.bit_length() - 1
    return _hadamard_last_axis(x[..., bit_reverse(K)]) / L


def inverse_paley_transform(c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    K = c.shape[-1].bit_length() - 1
    y = _hadamard_last_axis(c)
    out = np.empty_like(y)
    out[..., bit_reverse(K)] = y
    return out


def walsh_transform(f: DyadicFunction) -> np.ndarray:
    """Coefficients ``f^(k) = int f W_k`` for ``0 <= k < 2**K``."""
    return paley_transform(f.values)


def inverse_walsh_transform(coeffs, K: int | None = None) -> DyadicFunction:
    coeffs = np.asarray(coeffs, dtype=float)
    n = coeffs.size
    if n & (n - 1):
        raise ValueError("coefficient count must be a power of two")
    k = n.bit_length() - 1
    if K is not None and K != k:
        raise ValueError("coefficient count does not match resolution")
    return DyadicFunction(k, inverse_paley_transform(coeffs))


def partial_sum(f: DyadicFunction, n: int) -> DyadicFunction:
    """Half-open partial sum ``sum_{k<n} f^(k) W_k``.

    The closed sum ``S_n f`` (through ``k = n``) is ``partial_sum(f, n + 1)``.
    """
    if n < 0 or n > f.size:
        raise ValueError(f"partial sum index must lie in [0, 2^K = {f.size}], got {n}")
    c = walsh_transform(f)
    c[n:] = 0.0
    return inverse_walsh_transform(c)


def partial_sums(f: DyadicFunction, ns: Sequence[int]) -> np.ndarray:
    """Rows ``partial_sum(f, n).values`` for each ``n`` in ``ns``."""
    c = walsh_transform(f)
    ns = np.asarray(ns, dtype=np.int64)
    if ns.size and (ns.min() < 0 or ns.max() > f.size):
        raise ValueError("partial sum index out of range")
    mask = np.arange(f.size)[None, :] < ns[:, None]
    return inverse_paley_transform(mask * c[None, :])


def cell_average(f: DyadicFunction, scale: int) -> DyadicFunction:
    """Conditional expectation onto dyadic intervals of length ``2**-scale``."""
    L = f.K - scale
    if L < 0:
        raise ValueError("scale finer than resolution")
    means = f.values.reshape(1 << scale, 1 << L).mean(axis=1)
    return DyadicFunction(f.K, np.repeat(means, 1 << L))


def lacunary_maximal(f: DyadicFunction, seq: LacunarySequence):
    """``sup_j |partial_sum(f, n_j)|`` and the maximizing choice of ``n_j``.

    Ties go to the smallest ``j``.  Returns ``(DyadicFunction, ndarray)``;
    the array holds the chosen frequency on each cell.
    """
    seq.check_resolution(f.K, inclusive=True)
    sums = np.abs(partial_sums(f, seq.terms))
    j = np.argmax(sums, axis=0)
    values = sums[j, np.arange(f.size)]
    return DyadicFunction(f.K, values), seq.as_array()[j]


def dyadic_means(f: DyadicFunction) -> list:
    """``means[s][m]`` = mean of ``|f|`` over the dyadic interval ``(s, m)``."""
    a = np.abs(f.values)
    out = [None] * (f.K + 1)
    out[f.K] = a.copy()
    for s in range(f.K - 1, -1, -1):
        out[s] = out[s + 1].reshape(-1, 2).mean(axis=1)
    return out


def dyadic_maximal(f: DyadicFunction) -> DyadicFunction:
    """``Mf(x) = max`` over dyadic ``I`` containing ``x`` of the mean of ``|f|`` on ``I``."""
    means = dyadic_means(f)
    best = np.zeros(f.size)
    for s, m in enumerate(means):
        best = np.maximum(best, np.repeat(m, 1 << (f.K - s)))
    return DyadicFunction(f.K, best)


# --- rearrangement and logarithms ---------------------------------------------

@dataclass(frozen=True, eq=False)
class RearrangementCurve:
    """Non-increasing step function ``h*`` on ``(0, 1]``.

    ``ends[k]`` is ``|{|h| >= levels[k]}|``; with ``ends[-1] == 0`` before the
    first step, ``h*(t) = levels[k]`` on ``[ends[k-1], ends[k])`` and
    ``h*(t) = 0`` for ``t >= ends[-1]``.  This is the right-continuous
    version ``inf{s >= 0 : |{|h| > s}| <= t}``.
    """

    ends: np.ndarray
    levels: np.ndarray

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.ends, t, side="right")
        lv = np.append(self.levels, 0.0)
        return lv[k]

    @property
    def breakpoints(self):
        return list(zip(self.ends.tolist(), self.levels.tolist()))

    def integral(self) -> float:
        widths = np.diff(np.concatenate(([0.0], self.ends)))
        return float(np.dot(widths, self.levels))

    def distribution(self, s: float) -> float:
        """``|{|h| > s}|`` read off the curve."""
        k = np.searchsorted(-self.levels, -s, side="left")
        return float(self.ends[k - 1]) if k > 0 else 0.0

    def weak_norm(self, R=None) -> float:
        """``sup_t h*(t) / R(t)``; ``R(t) = 1/t`` by default.

        The sup over each step is approached at its right end, which needs
        ``1/R`` non-decreasing.
        """
        if self.levels.size == 0:
            return 0.0
        if R is None:
            return float(np.max(self.levels * self.ends))
        return float(max(v / R(b) for b, v in zip(self.ends, self.levels)))


def decreasing_rearrangement(f: DyadicFunction) -> RearrangementCurve:
    a = np.sort(np.abs(f.values))[::-1]
    a = a[a > 0]
    if a.size == 0:
        return RearrangementCurve(np.zeros(0), np.zeros(0))
    levels, counts = np.unique(-a, return_counts=True)
    ends = np.cumsum(counts) / f.size
    return RearrangementCurve(ends, -levels)


def weak_l1_norm(f: DyadicFunction) -> float:
    """``sup_s s |{|f| > s}|``, attained in the limit ``s`` up to a value of ``|f|``."""
    return decreasing_rearrangement(f).weak_norm()


LOG_OFFSET = 27.0


def log_plus(x):
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("log_plus needs x > 0")
    out = LOG_OFFSET + np.maximum(0.0, np.log(x))
    return float(out) if out.ndim == 0 else out


def loglog_plus(x):
    out = np.log(log_plus(x))
    return float(out) if np.ndim(out) == 0 else out


def logloglog_plus(x):
    out = np.log(np.log(log_plus(x)))
    return float(out) if np.ndim(out) == 0 else out
