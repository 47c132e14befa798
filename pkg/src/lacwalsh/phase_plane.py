"""Walsh phase plane at a fixed resolution ``K``.

A tile ``(s, m, n)`` is ``I x w`` with ``I = [m 2^-s, (m+1) 2^-s)`` and
``w = [n 2^s, (n+1) 2^s)``.  A bi-tile ``(s, m, n)`` has the same ``I`` and
``w = [n 2^(s+1), (n+1) 2^(s+1))``; its lower half is the tile ``(s, m, 2n)``
and its upper half ``(s, m, 2n+1)``.

Collections of bi-tiles are stored as one boolean mask per scale over the
grid of bi-tiles with ``I`` inside [0, 1], ``|I| >= 2^-K`` and frequencies
below ``2^K`` (one extra bi-tile per cell at scale ``K``).  All functionals
(coefficients, bilinear terms, density, size) are computed for the whole
grid at once and read through the masks.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, NamedTuple, Union

import numpy as np

from .dyadic import (
    DyadicFunction,
    LacunarySequence,
    bit_reverse,
    paley_transform,
    parity,
)


class Tile(NamedTuple):
    scale: int
    time_index: int
    freq_index: int

    @property
    def time_interval(self):
        s, m, _ = self
        return Fraction(m, 1 << s), Fraction(m + 1, 1 << s)

    @property
    def freq_interval(self):
        s, _, n = self
        return n << s, (n + 1) << s

    def text(self) -> str:
        return f"{self.scale}:{self.time_index}:{self.freq_index}"

    @classmethod
    def parse(cls, text: str) -> "Tile":
        return cls(*_parse_triple(text))


class BiTile(NamedTuple):
    scale: int
    time_index: int
    freq_index: int

    @property
    def time_interval(self):
        s, m, _ = self
        return Fraction(m, 1 << s), Fraction(m + 1, 1 << s)

    @property
    def freq_interval(self):
        s, _, n = self
        return n << (s + 1), (n + 1) << (s + 1)

    @property
    def lower(self) -> Tile:
        return Tile(self.scale, self.time_index, 2 * self.freq_index)

    @property
    def upper(self) -> Tile:
        return Tile(self.scale, self.time_index, 2 * self.freq_index + 1)

    @property
    def length(self) -> float:
        return 2.0 ** -self.scale

    def text(self) -> str:
        return f"{self.scale}:{self.time_index}:{self.freq_index}"

    @classmethod
    def parse(cls, text: str) -> "BiTile":
        return cls(*_parse_triple(text))


Rect = Union[Tile, BiTile]


def _parse_triple(text: str):
    parts = text.strip().split(":")
    if len(parts) != 3:
        raise ValueError(f"tile text must be 's:m:n', got {text!r}")
    s, m, n = (int(p) for p in parts)
    if s < 0 or n < 0 or not 0 <= m < (1 << s):
        raise ValueError(f"invalid tile {text!r}")
    return s, m, n


def _contains(outer, inner) -> bool:
    return outer[0] <= inner[0] and inner[1] <= outer[1]


def _overlap(a, b) -> bool:
    return a[0] < b[1] and b[0] < a[1]


def rectangles_intersect(a: Rect, b: Rect) -> bool:
    return _overlap(a.time_interval, b.time_interval) and _overlap(a.freq_interval, b.freq_interval)


def bitile_less(P: Rect, P2: Rect, strict: bool = False) -> bool:
    """``P < P2``: ``I_P`` inside ``I_P2`` and ``w_P2`` inside ``w_P``."""
    if strict and tuple(P) == tuple(P2) and type(P) is type(P2):
        return False
    return _contains(P2.time_interval, P.time_interval) and _contains(P.freq_interval, P2.freq_interval)


# --- grid ----------------------------------------------------------------------

def grid_width(K: int, s: int) -> int:
    """Number of bi-tile frequency slots at scale ``s``."""
    return 1 << (K - s - 1) if s < K else 1


def grid_shapes(K: int):
    return [(1 << s, grid_width(K, s)) for s in range(K + 1)]


class TileCollection:
    """Set of bi-tiles on the resolution-``K`` grid."""

    __slots__ = ("K", "masks")

    def __init__(self, K: int, masks=None):
        self.K = int(K)
        if masks is None:
            masks = [np.zeros(sh, dtype=bool) for sh in grid_shapes(self.K)]
        masks = [np.array(m, dtype=bool) for m in masks]
        if [m.shape for m in masks] != grid_shapes(self.K):
            raise ValueError("mask shapes do not match the grid")
        for m in masks:
            m.setflags(write=False)
        self.masks = tuple(masks)

    @classmethod
    def full(cls, K: int) -> "TileCollection":
        return cls(K, [np.ones(sh, dtype=bool) for sh in grid_shapes(K)])

    @classmethod
    def from_bitiles(cls, K: int, bitiles: Iterable[BiTile]) -> "TileCollection":
        masks = [np.zeros(sh, dtype=bool) for sh in grid_shapes(K)]
        for P in bitiles:
            s, m, n = P
            if s > K or not 0 <= m < (1 << s) or not 0 <= n < grid_width(K, s):
                raise ValueError(f"bi-tile {BiTile(*P).text()} is not on the resolution-{K} grid")
            masks[s][m, n] = True
        return cls(K, masks)

    def bitiles(self) -> list:
        out = []
        for s, mk in enumerate(self.masks):
            for m, n in zip(*np.nonzero(mk)):
                out.append(BiTile(s, int(m), int(n)))
        return out

    __iter__ = lambda self: iter(self.bitiles())

    def __len__(self):
        return int(sum(int(m.sum()) for m in self.masks))

    def __bool__(self):
        return any(m.any() for m in self.masks)

    def __contains__(self, P) -> bool:
        s, m, n = P
        if s > self.K or not 0 <= m < (1 << s) or not 0 <= n < grid_width(self.K, s):
            return False
        return bool(self.masks[s][m, n])

    def _check(self, other):
        if other.K != self.K:
            raise ValueError(f"resolution mismatch: {self.K} vs {other.K}")

    def __or__(self, other):
        self._check(other)
        return TileCollection(self.K, [a | b for a, b in zip(self.masks, other.masks)])

    def __and__(self, other):
        self._check(other)
        return TileCollection(self.K, [a & b for a, b in zip(self.masks, other.masks)])

    def __sub__(self, other):
        self._check(other)
        return TileCollection(self.K, [a & ~b for a, b in zip(self.masks, other.masks)])

    def __eq__(self, other):
        if not isinstance(other, TileCollection) or other.K != self.K:
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.masks, other.masks))

    def __hash__(self):
        return hash((self.K, tuple(m.tobytes() for m in self.masks)))

    def isdisjoint(self, other) -> bool:
        return not (self & other)

    def issubset(self, other) -> bool:
        return not (self - other)

    def meeting(self, support: np.ndarray) -> "TileCollection":
        """Bi-tiles whose time interval meets the cells flagged in ``support``."""
        support = np.asarray(support, dtype=bool)
        masks = []
        for s, mk in enumerate(self.masks):
            rows = support.reshape(1 << s, -1).any(axis=1)
            masks.append(mk & rows[:, None])
        return TileCollection(self.K, masks)

    def to_json(self) -> list:
        return [P.text() for P in self.bitiles()]

    @classmethod
    def from_json(cls, K: int, items) -> "TileCollection":
        return cls.from_bitiles(K, (BiTile.parse(t) for t in items))

    def __repr__(self):
        return f"TileCollection(K={self.K}, size={len(self)})"


# --- trees -----------------------------------------------------------------------

def tree_masks(top: Rect, K: int, eligible_only: bool = False):
    """Grid masks of the bi-tiles ``P <= top``.

    ``top`` is a bi-tile, or a tile over [0, 1] (the degenerate area-one top).
    With ``eligible_only`` the masks keep only ``P`` whose lower half misses
    the top, i.e. ``w_top`` inside the upper half of ``w_P``.
    """
    masks = [np.zeros(sh, dtype=bool) for sh in grid_shapes(K)]
    if isinstance(top, Tile):
        if top.scale != 0:
            raise ValueError("tile tops are only admitted over [0, 1]")
        k = top.freq_index
        for s in range(K + 1):
            n = k >> (s + 1)
            if n >= grid_width(K, s):
                continue
            if eligible_only and not (k >> s) & 1:
                continue
            masks[s][:, n] = True
        return masks
    t, mT, nT = top
    for s in range(t, K + 1):
        d = s - t
        n = nT >> d
        if n >= grid_width(K, s):
            continue
        if eligible_only and (d == 0 or not (nT >> (d - 1)) & 1):
            continue
        masks[s][mT << d:(mT + 1) << d, n] = True
    return masks


def top_length(top: Rect) -> float:
    return 2.0 ** -top.scale


def top_text(top: Rect) -> dict:
    return {"top": top.text(), "top_kind": "tile" if isinstance(top, Tile) else "bitile"}


def parse_top(obj: dict) -> Rect:
    kind = obj.get("top_kind", "bitile")
    if kind == "tile":
        return Tile.parse(obj["top"])
    if kind == "bitile":
        return BiTile.parse(obj["top"])
    raise ValueError(f"unknown top kind {kind!r}")


@dataclass(frozen=True, eq=False)
class Tree:
    top: Rect
    members: TileCollection

    def __post_init__(self):
        under = TileCollection(self.members.K, tree_masks(self.top, self.members.K))
        if not self.members.issubset(under):
            raise ValueError(f"tree members are not all below the top {self.top.text()}")

    @property
    def length(self) -> float:
        return top_length(self.top)

    @property
    def eligible(self) -> TileCollection:
        return self.members & TileCollection(self.members.K, tree_masks(self.top, self.members.K, True))

    def to_json(self) -> dict:
        d = top_text(self.top)
        d["members"] = self.members.to_json()
        return d

    @classmethod
    def from_json(cls, K: int, obj: dict) -> "Tree":
        return cls(parse_top(obj), TileCollection.from_json(K, obj["members"]))


# --- choice functions ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ChoiceFunction:
    """One lacunary frequency ``N(x)`` per cell."""

    K: int
    values: np.ndarray
    seq: LacunarySequence | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=np.int64).reshape(-1)
        if v.size != 1 << self.K:
            raise ValueError(f"choice function needs {1 << self.K} values")
        if np.any(v < 0) or np.any(v >= 1 << self.K):
            raise ValueError("choice values must lie in [0, 2^K)")
        if self.seq is not None and not np.all(np.isin(v, self.seq.as_array())):
            raise ValueError("choice values must belong to the lacunary sequence")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, K: int, n: int, seq: LacunarySequence | None = None) -> "ChoiceFunction":
        return cls(K, np.full(1 << K, n), seq)


# --- wave packets and coefficients ---------------------------------------------

def _check_tile(p: Tile, K: int):
    s, m, n = p
    if s > K or not 0 <= m < (1 << s):
        raise ValueError(f"tile {p.text()} has a time interval finer than 2^-{K}")
    if n >= 1 << (K - s):
        raise ValueError(f"tile {p.text()} has frequencies not representable at resolution {K}")


def wave_packet(p: Tile, K: int) -> DyadicFunction:
    """``2^(s/2) W_n(2^s x - m)`` on ``I``, zero elsewhere."""
    p = Tile(*p)
    _check_tile(p, K)
    s, m, n = p
    L = K - s
    local = 1 - 2 * parity(n & bit_reverse(L))
    v = np.zeros(1 << K)
    v[m << L:(m + 1) << L] = 2.0 ** (s / 2) * local
    return DyadicFunction(K, v)


def coefficient(f: DyadicFunction, p: Tile) -> float:
    """``<f, w_p>`` from the Walsh transform of ``f`` restricted to ``I_p``."""
    p = Tile(*p)
    _check_tile(p, f.K)
    s, m, n = p
    L = f.K - s
    local = paley_transform(f.values[m << L:(m + 1) << L])
    return float(2.0 ** (-s / 2) * local[n])


class CoefficientTable:
    """All tile coefficients of ``f``, computed per scale on first use.

    ``table[s][m, q] = <f, w_(s, m, q)>``.
    """

    def __init__(self, f: DyadicFunction):
        self.f = f
        self.K = f.K
        self._scales = {}

    def __getitem__(self, s: int) -> np.ndarray:
        if s not in self._scales:
            rows = self.f.values.reshape(1 << s, 1 << (self.K - s))
            c = paley_transform(rows) * 2.0 ** (-s / 2)
            c.setflags(write=False)
            self._scales[s] = c
        return self._scales[s]

    def lower(self, s: int) -> np.ndarray:
        """Coefficients of the lower halves of the grid bi-tiles at scale ``s``."""
        return self[s][:, ::2]

    def __call__(self, p: Tile) -> float:
        p = Tile(*p)
        _check_tile(p, self.K)
        return float(self[p.scale][p.time_index, p.freq_index])


def _as_table(f) -> CoefficientTable:
    return f if isinstance(f, CoefficientTable) else CoefficientTable(f)


# --- enumeration, Carleson operator, bilinear form -----------------------------

def enumerate_bitiles(K: int, seq: LacunarySequence) -> TileCollection:
    """Bi-tiles over [0, 1] down to scale ``K`` whose upper half holds some ``n_j``."""
    seq.check_resolution(K)
    masks = [np.zeros(sh, dtype=bool) for sh in grid_shapes(K)]
    for nj in seq:
        for s in range(K + 1):
            u = nj >> s
            if u & 1:
                masks[s][:, u >> 1] = True
    return TileCollection(K, masks)


def _upper_hits(N: np.ndarray, K: int, s: int):
    """For each cell: bi-tile slot at scale ``s`` whose upper half holds ``N(x)``."""
    u = N >> s
    return (u & 1) == 1, u >> 1


def _lower_packet_values(N: np.ndarray, K: int, s: int) -> np.ndarray:
    """``w_(P_l)(x)`` for the bi-tile at scale ``s`` selected by ``N(x)``."""
    L = K - s
    x = np.arange(1 << K, dtype=np.int64)
    local_rev = bit_reverse(L)[x & ((1 << L) - 1)]
    q = ((N >> s) >> 1) << 1
    return 2.0 ** (s / 2) * (1 - 2 * parity(q & local_rev))


def carleson_apply(f, N: ChoiceFunction, tiles: TileCollection) -> DyadicFunction:
    """``sum_P <f, w_Pl> w_Pl(x) 1{N(x) in w_Pu}`` over the bi-tiles in ``tiles``."""
    table = _as_table(f)
    K = table.K
    if N.K != K or tiles.K != K:
        raise ValueError("f, N and tiles must share a resolution")
    Nv = N.values
    x = np.arange(1 << K, dtype=np.int64)
    out = np.zeros(1 << K)
    for s in range(K + 1):
        hit, n = _upper_hits(Nv, K, s)
        m = x >> (K - s)
        ok = hit & (n < grid_width(K, s))
        n = np.where(ok, n, 0)
        ok &= tiles.masks[s][m, n]
        if not ok.any():
            continue
        c = table.lower(s)[m, n]
        out += np.where(ok, c * _lower_packet_values(Nv, K, s), 0.0)
    return DyadicFunction(K, out)


def bilinear_terms(f, g: DyadicFunction, N: ChoiceFunction) -> list:
    """Per-scale grid arrays of ``<f, w_Pl> <w_Pl 1{N in w_Pu}, g>`` for every bi-tile."""
    table = _as_table(f)
    K = table.K
    if g.K != K or N.K != K:
        raise ValueError("f, g and N must share a resolution")
    Nv = N.values
    x = np.arange(1 << K, dtype=np.int64)
    out = []
    for s, (rows, width) in enumerate(grid_shapes(K)):
        hit, n = _upper_hits(Nv, K, s)
        ok = hit & (n < width)
        m = x >> (K - s)
        pairing = np.where(ok, _lower_packet_values(Nv, K, s) * g.values, 0.0) / (1 << K)
        flat = m * width + np.where(ok, n, 0)
        acc = np.bincount(flat, weights=pairing, minlength=rows * width).reshape(rows, width)
        out.append(acc * table.lower(s))
    return out


def bilinear_form(P: TileCollection, f, g: DyadicFunction, N: ChoiceFunction, terms=None) -> float:
    """``B_P(f, g)``; pass precomputed ``terms`` to evaluate many sub-collections."""
    if terms is None:
        terms = bilinear_terms(f, g, N)
    return float(sum(t[m].sum() for t, m in zip(terms, P.masks)))


# --- density --------------------------------------------------------------------

class DensityField:
    """Density data for a set ``G`` and choice function ``N`` on the whole grid.

    ``local[s][m, n] = |{x in I cap G : N(x) in w}| / |I|`` for the bi-tile
    ``(s, m, n)``; ``dense[s][m, n]`` is the sup of ``local`` over all bi-tiles
    above it in the order (itself included).
    """

    def __init__(self, G: DyadicFunction, N: ChoiceFunction):
        if G.K != N.K:
            raise ValueError("G and N must share a resolution")
        if not G.is_indicator():
            raise ValueError("G must be an indicator function")
        self.K = K = G.K
        inG = G.values > 0
        x = np.arange(1 << K, dtype=np.int64)[inG]
        Nv = N.values[inG]
        self.local = []
        for s, (rows, width) in enumerate(grid_shapes(K)):
            flat = (x >> (K - s)) * width + (Nv >> (s + 1))
            cnt = np.bincount(flat, minlength=rows * width).reshape(rows, width)
            self.local.append(cnt * 2.0 ** (s - K))
        self.dense = [self.local[0].copy()]
        for s in range(1, K + 1):
            prev = self.dense[s - 1]
            pw = prev.shape[1]
            rows, width = grid_shapes(K)[s]
            up = prev[np.arange(rows) >> 1]
            lo_idx = 2 * np.arange(width)
            hi_idx = lo_idx + 1
            a = up[:, np.minimum(lo_idx, pw - 1)] * (lo_idx < pw)
            b = up[:, np.minimum(hi_idx, pw - 1)] * (hi_idx < pw)
            self.dense.append(np.maximum(self.local[s], np.maximum(a, b)))

    def of(self, P) -> float:
        if isinstance(P, TileCollection):
            vals = [d[m] for d, m in zip(self.dense, P.masks) if m.any()]
            return float(max(v.max() for v in vals)) if vals else 0.0
        s, m, n = P
        return float(self.dense[s][m, n])


def density(P, G: DyadicFunction, N: ChoiceFunction, field: DensityField | None = None) -> float:
    field = field or DensityField(G, N)
    return field.of(P)


# --- size -----------------------------------------------------------------------

class SizeField:
    """Size-eligible energy under every candidate top for a collection and ``f``.

    ``under[t][m, n]`` sums ``|<f, w_Pl>|^2`` over members below the bi-tile
    top ``(t, m, n)`` whose lower half misses the top; ``virtual[k]`` does the
    same for the area-one top ``[0, 1] x [k, k+1)``.
    """

    def __init__(self, P: TileCollection, f):
        table = _as_table(f)
        self.K = K = P.K
        if table.K != K:
            raise ValueError("collection and function must share a resolution")
        sq = [np.where(mk, table.lower(s) ** 2, 0.0) for s, mk in enumerate(P.masks)]
        shapes = grid_shapes(K)
        under = [None] * (K + 1)
        under[K] = np.zeros(shapes[K])
        for t in range(K - 1, -1, -1):
            rows, width = shapes[t]
            pair_q = under[t + 1].reshape(rows, 2, -1).sum(axis=1)
            pair_sq = sq[t + 1].reshape(rows, 2, -1).sum(axis=1)
            nT = np.arange(width)
            odd = (nT & 1).astype(float)
            under[t] = pair_q[:, nT >> 1] + odd * pair_sq[:, nT >> 1]
        self.under = under
        k = np.arange(1 << K)
        self.virtual = under[0][0, k >> 1] + (k & 1) * sq[0][0, k >> 1]

    def normalized(self):
        """Per-scale arrays of ``eligible sum / |I_T|`` plus the virtual-top array."""
        return [u * (1 << t) for t, u in enumerate(self.under)], self.virtual

    def size(self) -> float:
        best, _ = self.witness()
        return best

    def witness(self):
        """``(size, top)`` maximizing the tree sum; top is ``None`` for size 0."""
        per_scale, virt = self.normalized()
        best, top = 0.0, None
        for t, a in enumerate(per_scale):
            if a.size and a.max() > best:
                m, n = np.unravel_index(int(np.argmax(a)), a.shape)
                best, top = float(a.max()), BiTile(t, int(m), int(n))
        if virt.size and virt.max() > best:
            best, top = float(virt.max()), Tile(0, 0, int(np.argmax(virt)))
        return float(np.sqrt(best)), top


def size(P: TileCollection, f) -> float:
    return SizeField(P, f).size()


def maximal_function_meets(P: TileCollection, f: DyadicFunction, A: float):
    """Bi-tiles of ``P`` whose time interval misses ``{Mf <= A}``."""
    from .dyadic import dyadic_maximal

    good = dyadic_maximal(f).values <= A
    return P - P.meeting(good)


def upper_size_check(P: TileCollection, f: DyadicFunction, A: float, C_upper: float = 8.0) -> dict:
    """Measured ``size_f(P) / A`` for a collection whose intervals meet ``{Mf <= A}``."""
    if A <= 0:
        raise ValueError("A must be positive")
    bad = maximal_function_meets(P, f, A)
    sz = size(P, f)
    measured = sz / A
    return {
        "precondition_ok": not bad,
        "violations": bad.to_json()[:20],
        "size": sz,
        "measured_C": measured,
        "C_upper": C_upper,
        "holds": (not bad) and measured <= C_upper,
    }
