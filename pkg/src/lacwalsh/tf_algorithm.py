"""Density / size splitting with tree-cover certificates, and the level
decompositions built from them.

Every split returns a :class:`SplitCertificate` that can be serialized and
re-verified from its raw inputs (see :func:`verify_certificate`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dyadic import DyadicFunction
from .phase_plane import (
    BiTile,
    ChoiceFunction,
    CoefficientTable,
    DensityField,
    SizeField,
    Tile,
    TileCollection,
    Tree,
    bilinear_terms,
    carleson_apply,
    grid_shapes,
    grid_width,
    tree_masks,
    wave_packet,
)

DEFAULT_CONSTANTS = {
    "C_dens": 16.0,
    "C_size": 4.0,
    "C_tree": 8.0,
    "C_eff": 32.0,
}

_RTOL = 1e-12


@dataclass
class SplitCertificate:
    kind: str                      # "density" or "size"
    K: int
    threshold: float               # delta or sigma
    constant: float
    collection: TileCollection
    small: TileCollection
    big: TileCollection
    trees: list
    tree_top_length_sum: float
    claimed_bound: float
    measured_ratio: float
    small_value: float             # density or size of the small part
    extra: dict = field(default_factory=dict)
    inputs: dict = field(default_factory=dict)

    @property
    def holds(self) -> bool:
        return self.measured_ratio <= self.constant and self.small_value <= self.threshold / 2 * (1 + 1e-9)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "K": self.K,
            "threshold": self.threshold,
            "constant": self.constant,
            "collection": self.collection.to_json(),
            "small": self.small.to_json(),
            "big": self.big.to_json(),
            "trees": [t.to_json() for t in self.trees],
            "tree_top_length_sum": self.tree_top_length_sum,
            "claimed_bound": self.claimed_bound,
            "measured_ratio": self.measured_ratio,
            "small_value": self.small_value,
            "holds": self.holds,
            "extra": self.extra,
            "inputs": self.inputs,
        }


def _assign_trees(P: TileCollection, tops) -> list:
    """Trees under ``tops`` (in order); each member goes to the first top above it."""
    K = P.K
    taken = TileCollection(K)
    trees = []
    for top in tops:
        members = P & TileCollection(K, tree_masks(top, K)) - taken
        taken = taken | members
        trees.append(Tree(top, members))
    return trees


def _ancestor_masks(P: TileCollection):
    """Grid masks of the bi-tiles lying above at least one member of ``P``."""
    K = P.K
    anc = [None] * (K + 1)
    anc[K] = P.masks[K].copy()
    for s in range(K - 1, -1, -1):
        rows, width = grid_shapes(K)[s]
        child = anc[s + 1].reshape(rows, 2, -1).any(axis=1)
        anc[s] = P.masks[s] | child[:, np.arange(width) >> 1]
    return anc


def _propagate_down(cov: np.ndarray, K: int, s: int) -> np.ndarray:
    """Grid bi-tiles at scale ``s+1`` lying below a flagged bi-tile at scale ``s``."""
    rows, width = grid_shapes(K)[s + 1]
    up = cov[np.arange(rows) >> 1]
    pw = cov.shape[1]
    lo = 2 * np.arange(width)
    a = up[:, np.minimum(lo, pw - 1)] & (lo < pw)
    b = up[:, np.minimum(lo + 1, pw - 1)] & (lo + 1 < pw)
    return a | b


def density_split(P: TileCollection, G: DyadicFunction, N: ChoiceFunction,
                  delta: float | None = None, C_dens: float = DEFAULT_CONSTANTS["C_dens"],
                  field: DensityField | None = None) -> SplitCertificate:
    """Split off trees under bi-tiles whose local density exceeds ``delta / 2``.

    Witness tops are taken from the largest time intervals down; a witness
    already below a chosen top is skipped.  ``delta`` defaults to
    ``dense(P)`` and may be any upper bound for it.
    """
    field = field or DensityField(G, N)
    K = P.K
    d = field.of(P)
    if delta is None:
        delta = d
    if delta <= 0:
        raise ValueError("density split needs a positive density")
    if d > delta * (1 + _RTOL):
        raise ValueError(f"delta={delta} is below the collection density {d}")
    half = delta / 2
    anc = _ancestor_masks(P)
    tops = []
    covered = [None] * (K + 1)
    cov = np.zeros(grid_shapes(K)[0], dtype=bool)
    for s in range(K + 1):
        wit = (field.local[s] > half) & anc[s] & ~cov
        for m, n in zip(*np.nonzero(wit)):
            tops.append(BiTile(s, int(m), int(n)))
        cov = cov | wit
        covered[s] = cov
        if s < K:
            cov = _propagate_down(cov, K, s)
    big = P & TileCollection(K, covered)
    small = P - big
    trees = _assign_trees(big, tops)
    total = float(sum(t.length for t in trees))
    Gm = G.measure()
    scale = Gm / delta
    return SplitCertificate(
        kind="density", K=K, threshold=float(delta), constant=C_dens,
        collection=P, small=small, big=big, trees=trees,
        tree_top_length_sum=total, claimed_bound=C_dens * scale,
        measured_ratio=total / scale, small_value=field.of(small),
        extra={"G_measure": Gm, "collection_density": d},
        inputs={"G": G.values.tolist(), "N": N.values.tolist()},
    )


def _choose_size_top(sf: SizeField, thresh: float):
    """Candidate top with the lowest frequency interval (ties: larger |I_T|, then time index)."""
    per_scale, virt = sf.normalized()
    best_key, best = None, None
    for t, a in enumerate(per_scale):
        m, n = np.nonzero(a > thresh)
        if m.size == 0:
            continue
        left = n.astype(np.int64) << (t + 1)
        i = np.lexsort((m, left))[0]
        key = (int(left[i]), t, 0, int(m[i]))
        if best_key is None or key < best_key:
            best_key, best = key, BiTile(t, int(m[i]), int(n[i]))
    k = np.nonzero(virt > thresh)[0]
    if k.size:
        key = (int(k[0]), 0, 1, 0)
        if best_key is None or key < best_key:
            best_key, best = key, Tile(0, 0, int(k[0]))
    return best


def packet_matrix(tiles, K: int) -> np.ndarray:
    return np.array([wave_packet(p, K).values for p in tiles]).reshape(len(tiles), 1 << K)


def size_split(P: TileCollection, f, sigma: float | None = None,
               C_size: float = DEFAULT_CONSTANTS["C_size"]) -> SplitCertificate:
    """Remove trees whose size-eligible energy exceeds ``(sigma/2)^2 |I_T|``.

    Tops are chosen lowest frequency first and the whole tree under each top
    is removed, which keeps the selected lower-half packets pairwise
    orthogonal; the energy bound then follows from Bessel's inequality.
    """
    table = f if isinstance(f, CoefficientTable) else CoefficientTable(f)
    fn = table.f
    K = P.K
    sz = SizeField(P, table).size()
    if sigma is None:
        sigma = sz
    if sigma <= 0:
        raise ValueError("size split needs a positive size")
    if sz > sigma * (1 + _RTOL):
        raise ValueError(f"sigma={sigma} is below the collection size {sz}")
    thresh = sigma * sigma / 4
    rem = P
    trees, packets, coeffs = [], [], []
    for _ in range(len(P) + 1):
        top = _choose_size_top(SizeField(rem, table), thresh)
        if top is None:
            break
        members = rem & TileCollection(K, tree_masks(top, K))
        tree = Tree(top, members)
        for Q in tree.eligible.bitiles():
            packets.append(Q.lower)
            coeffs.append(table(Q.lower))
        trees.append(tree)
        rem = rem - members
    else:  # pragma: no cover - each pass removes at least one bi-tile
        raise RuntimeError("size split did not terminate")
    big = P - rem
    total = float(sum(t.length for t in trees))
    f2 = fn.l2() ** 2
    bessel = float(np.sum(np.square(coeffs)))
    off = 0.0
    if packets:
        W = packet_matrix(packets, K)
        gram = W @ W.T / (1 << K)
        np.fill_diagonal(gram, 0.0)
        off = float(np.abs(gram).max())
    scale = f2 / (sigma * sigma)
    return SplitCertificate(
        kind="size", K=K, threshold=float(sigma), constant=C_size,
        collection=P, small=rem, big=big, trees=trees,
        tree_top_length_sum=total, claimed_bound=C_size * scale,
        measured_ratio=total / scale if scale > 0 else math.inf,
        small_value=SizeField(rem, table).size(),
        extra={"bessel_sum": bessel, "f_l2_sq": f2, "max_offdiag_gram": off,
               "packets": len(packets), "collection_size": sz},
        inputs={"f": fn.values.tolist()},
    )


# --- tree estimate ------------------------------------------------------------------

def tree_bound_check(T: Tree, f: DyadicFunction, g: DyadicFunction, G: DyadicFunction,
                     N: ChoiceFunction, C_tree: float = DEFAULT_CONSTANTS["C_tree"],
                     terms=None, field: DensityField | None = None) -> dict:
    """``|B_T(f, g)|`` against ``dense(T) size_f(T) |I_T|``."""
    if np.any(np.abs(g.values) > G.values + 1e-15):
        raise ValueError("g is not dominated by the indicator of G")
    table = CoefficientTable(f)
    if terms is None:
        terms = bilinear_terms(table, g, N)
    form = float(sum(t[m].sum() for t, m in zip(terms, T.members.masks)))
    field = field or DensityField(G, N)
    dens = field.of(T.members)
    sz = SizeField(T.members, table).size()
    bound = dens * sz * T.length
    if abs(form) <= 1e-14 * max(1.0, f.l2()):
        ratio = 0.0
    else:
        ratio = abs(form) / bound if bound > 0 else math.inf
    return {"form": form, "density": dens, "size": sz, "top_length": T.length,
            "bound": bound, "ratio": ratio, "C_tree": C_tree, "holds": ratio <= C_tree}


# --- level decompositions ----------------------------------------------------------

@dataclass
class Level:
    n: int
    collection: TileCollection
    trees: list
    density: float
    size: float
    energy: float
    form: float
    bound: float
    facts_ok: bool
    detail: dict = field(default_factory=dict)


@dataclass
class LevelDecomposition:
    levels: list
    residual: TileCollection
    params: dict
    total_bound: float
    measured_form: float
    ratio: float
    facts_ok: bool

    def partition_ok(self, P: TileCollection) -> bool:
        seen = TileCollection(P.K)
        for lv in self.levels:
            if not seen.isdisjoint(lv.collection):
                return False
            seen = seen | lv.collection
        if not seen.isdisjoint(self.residual):
            return False
        return seen | self.residual == P

    def rows(self):
        return [{"n": lv.n, "bitiles": len(lv.collection), "trees": len(lv.trees),
                 "density": lv.density, "size": lv.size, "energy": lv.energy,
                 "form": lv.form, "bound": lv.bound, "facts_ok": lv.facts_ok}
                for lv in self.levels]


def _form_on(terms, P: TileCollection) -> float:
    return float(sum(t[m].sum() for t, m in zip(terms, P.masks)))


def default_dual(f, N: ChoiceFunction, P: TileCollection, G: DyadicFunction) -> DyadicFunction:
    """``sign(C_P f) 1_G``."""
    Cf = carleson_apply(f, N, P)
    return DyadicFunction(Cf.K, np.sign(Cf.values) * (G.values > 0))


def carleson_decomposition(P: TileCollection, f: DyadicFunction, G: DyadicFunction,
                           N: ChoiceFunction, g: DyadicFunction | None = None,
                           C_dens: float = DEFAULT_CONSTANTS["C_dens"],
                           C_size: float = DEFAULT_CONSTANTS["C_size"]) -> LevelDecomposition:
    """Levels ``P_n`` with density ``<= min(1, 2^-n)``, normalized size
    ``<= 2^(-n/2)`` and energy ``<= (2 + 4) 2^n`` (normalized).

    Normalization: sizes are measured for ``f / ||f||_2`` and multiplied by
    ``|G|^(1/2)``; energies are divided by ``|G|``.  Reported bounds are
    de-normalized by ``||f||_2 |G|^(1/2)``.
    """
    K = P.K
    table = CoefficientTable(f)
    fnorm = f.l2()
    Gm = G.measure()
    if g is None:
        g = default_dual(table, N, P, G)
    terms = bilinear_terms(table, g, N)
    measured = _form_on(terms, P)
    params = {"f_l2": fnorm, "G_measure": Gm, "n_max": 2 * K + 8}
    if fnorm == 0 or Gm == 0 or not P:
        return LevelDecomposition([], P, params, 0.0, measured, 0.0, abs(measured) < 1e-12)
    unit = fnorm * math.sqrt(Gm)
    field = DensityField(G, N)

    def nsize(col):
        return SizeField(col, table).size() * math.sqrt(Gm) / fnorm

    d0, s0 = field.of(P), nsize(P)
    cands = []
    if d0 > 0:
        cands.append(-math.log2(d0))
    if s0 > 0:
        cands.append(-2 * math.log2(s0))
    levels = []
    rem = P
    n = math.floor(min(cands)) if cands else 0
    facts = True
    while rem and n <= params["n_max"]:
        d, sz = field.of(rem), nsize(rem)
        if d == 0 or sz == 0:
            break
        trees = []
        level = TileCollection(K)
        if n >= 0 and d > 2.0 ** (-n - 1):
            cert = density_split(rem, G, N, delta=max(2.0 ** -n, d), C_dens=C_dens, field=field)
            trees += cert.trees
            level = level | cert.big
            rem = cert.small
        if rem and nsize(rem) > 2.0 ** (-(n + 1) / 2):
            sigma = 2.0 ** (-n / 2) * fnorm / math.sqrt(Gm)
            cert = size_split(rem, table, sigma=max(sigma, SizeField(rem, table).size()), C_size=C_size)
            trees += cert.trees
            level = level | cert.big
            rem = cert.small
        if level:
            ld, ls = field.of(level), nsize(level)
            energy = sum(t.length for t in trees) / Gm
            ok = (ld <= min(1.0, 2.0 ** -n) * (1 + 1e-9)
                  and ls <= 2.0 ** (-n / 2) * (1 + 1e-9)
                  and energy <= 6 * 2.0 ** n * (1 + 1e-9))
            facts &= ok
            levels.append(Level(
                n=n, collection=level, trees=trees, density=ld, size=ls, energy=energy,
                form=_form_on(terms, level), bound=unit * min(2.0 ** (n / 2), 2.0 ** (-n / 2)),
                facts_ok=ok))
        n += 1
    residual_form = _form_on(terms, rem)
    facts &= abs(residual_form) <= 1e-10 * max(1.0, unit)
    total = sum(lv.bound for lv in levels)
    ratio = abs(measured) / total if total > 0 else (0.0 if abs(measured) < 1e-12 else math.inf)
    params["residual_form"] = residual_form
    return LevelDecomposition(levels, rem, params, total, measured, ratio, bool(facts))


def effective_n0(delta: float, f_l2_sq: float, G_measure: float) -> int:
    """Integer part of ``-log2(delta ||f||_2^2 / |G|)``."""
    return math.floor(-math.log2(delta * f_l2_sq / G_measure))


def _maximal_elements(P: TileCollection) -> list:
    """Members of ``P`` not strictly below another member."""
    K = P.K
    anc = _ancestor_masks(P)
    out = []
    strict_above = np.zeros(grid_shapes(K)[0], dtype=bool)
    for s in range(K + 1):
        mk = P.masks[s] & ~strict_above
        out += [BiTile(s, int(m), int(n)) for m, n in zip(*np.nonzero(mk))]
        if s < K:
            strict_above = _propagate_down(strict_above | P.masks[s], K, s)
    del anc
    return out


def energy_cover(P: TileCollection, G: DyadicFunction, N: ChoiceFunction,
                 field: DensityField | None = None):
    """Tree cover of all of ``P``: a density split, then the maximal
    elements of what is left as their own tops."""
    field = field or DensityField(G, N)
    d = field.of(P)
    trees = []
    rest = P
    if d > 0:
        cert = density_split(P, G, N, field=field)
        trees += cert.trees
        rest = cert.small
    trees += _assign_trees(rest, _maximal_elements(rest))
    return trees


def effective_bound(P: TileCollection, f: DyadicFunction, G: DyadicFunction, N: ChoiceFunction,
                    delta: float | None = None, g: DyadicFunction | None = None,
                    trees: list | None = None, C_eff: float = DEFAULT_CONSTANTS["C_eff"],
                    C_dens: float = DEFAULT_CONSTANTS["C_dens"]) -> dict:
    """Two-regime bound ``min{size |G|, dense^(1/2) |G|^(1/2) ||f||_2}`` on ``|B_P(f, g)|``.

    Below ``n0`` the collection is peeled by size splits alone at
    ``sigma = 2^(-n/2)``; what remains forms the last level.
    """
    K = P.K
    table = CoefficientTable(f)
    field = DensityField(G, N)
    Gm = G.measure()
    f2 = f.l2() ** 2
    if delta is None:
        delta = field.of(P)
    if g is None:
        g = default_dual(table, N, P, G)
    terms = bilinear_terms(table, g, N)
    measured = abs(_form_on(terms, P))
    if trees is None:
        trees = energy_cover(P, G, N, field) if P else []
    covered = TileCollection(K)
    for t in trees:
        covered = covered | t.members
    energy = float(sum(t.length for t in trees))
    sz = SizeField(P, table).size()
    report = {"measured": measured, "delta": delta, "size": sz, "f_l2_sq": f2, "G_measure": Gm,
              "energy": energy, "cover_ok": P.issubset(covered)}
    if delta <= 0 or f2 == 0 or Gm == 0:
        report.update(n0=None, levels=[], first=sz * Gm, second=0.0, bound=0.0,
                      ratio=0.0 if measured < 1e-12 else math.inf, branch="degenerate",
                      basic_assumption_ratio=0.0, C_eff=C_eff)
        report["holds"] = measured < 1e-12
        return report
    report["basic_assumption_ratio"] = energy / (Gm / delta)
    n0 = effective_n0(delta, f2, Gm)
    first = sz * Gm
    second = math.sqrt(delta * Gm * f2)
    levels = []
    rem = P
    if sz > 0 and n0 > 0:
        n = math.floor(-2 * math.log2(sz))
        while n < n0 and rem:
            cur = SizeField(rem, table).size()
            sigma = 2.0 ** (-n / 2)
            if cur > sigma / 2:
                cert = size_split(rem, table, sigma=max(sigma, cur))
                levels.append({"n": n, "bitiles": len(cert.big), "form": _form_on(terms, cert.big),
                               "size": SizeField(cert.big, table).size(),
                               "energy": cert.tree_top_length_sum, "level_bound": delta * 2.0 ** (n / 2) * f2})
                rem = cert.small
            n += 1
        if rem:
            levels.append({"n": n0, "bitiles": len(rem), "form": _form_on(terms, rem),
                           "size": SizeField(rem, table).size(), "energy": None,
                           "level_bound": delta * 2.0 ** (n0 / 2) * f2})
        bound = min(first, second)
        branch = "min"
    else:
        bound = first
        branch = "first"
    series = float(sum(lv["level_bound"] for lv in levels))
    ratio = measured / bound if bound > 0 else (0.0 if measured < 1e-12 else math.inf)
    report.update(n0=n0, levels=levels, first=first, second=second, bound=bound, branch=branch,
                  geometric_series=series, ratio=ratio, C_eff=C_eff,
                  holds=ratio <= C_eff and report["cover_ok"]
                  and report["basic_assumption_ratio"] <= C_dens)
    return report


# --- certificate verification ------------------------------------------------------

def _diff(diffs, name, claimed, recomputed, tol=1e-9):
    if isinstance(claimed, bool) or isinstance(recomputed, bool):
        ok = bool(claimed) == bool(recomputed)
    else:
        ok = abs(float(claimed) - float(recomputed)) <= tol * max(1.0, abs(float(recomputed)))
    diffs.append({"field": name, "claimed": claimed, "recomputed": recomputed, "ok": ok})
    return ok


def verify_certificate(obj: dict, f: DyadicFunction | None = None) -> dict:
    """Re-check a serialized split certificate from its raw inputs.

    ``f`` (size certificates) overrides the stored function; its resolution
    must match the certificate's.
    """
    for key in ("kind", "K", "threshold", "constant", "collection", "small", "big", "trees",
                "tree_top_length_sum", "measured_ratio", "inputs"):
        if key not in obj:
            raise ValueError(f"certificate is missing field {key!r}")
    K = int(obj["K"])
    if f is not None and f.K != K:
        raise ValueError(f"resolution mismatch: certificate K={K}, function K={f.K}")
    P = TileCollection.from_json(K, obj["collection"])
    small = TileCollection.from_json(K, obj["small"])
    big = TileCollection.from_json(K, obj["big"])
    trees = [Tree.from_json(K, t) for t in obj["trees"]]
    diffs = []
    ok = True
    ok &= _diff(diffs, "partition", True, small.isdisjoint(big) and (small | big) == P)
    covered = TileCollection(K)
    for t in trees:
        covered = covered | t.members
    ok &= _diff(diffs, "big_covered_by_trees", True, big.issubset(covered) and covered.issubset(big))
    total = float(sum(t.length for t in trees))
    ok &= _diff(diffs, "tree_top_length_sum", obj["tree_top_length_sum"], total)
    thr = float(obj["threshold"])
    const = float(obj["constant"])
    if obj["kind"] == "density":
        G = DyadicFunction(K, np.asarray(obj["inputs"]["G"], dtype=float))
        N = ChoiceFunction(K, np.asarray(obj["inputs"]["N"]))
        fld = DensityField(G, N)
        ok &= _diff(diffs, "threshold_bounds_density", True, fld.of(P) <= thr * (1 + 1e-9))
        sv = fld.of(small)
        scale = G.measure() / thr
    elif obj["kind"] == "size":
        if f is None:
            f = DyadicFunction(K, np.asarray(obj["inputs"]["f"], dtype=float))
        table = CoefficientTable(f)
        ok &= _diff(diffs, "threshold_bounds_size", True, SizeField(P, table).size() <= thr * (1 + 1e-9))
        sv = SizeField(small, table).size()
        scale = f.l2() ** 2 / (thr * thr)
        pk, cf = [], []
        for t in trees:
            for Q in t.eligible.bitiles():
                pk.append(Q.lower)
                cf.append(table(Q.lower))
        bessel = float(np.sum(np.square(cf)))
        off = 0.0
        if pk:
            W = packet_matrix(pk, K)
            gram = W @ W.T / (1 << K)
            np.fill_diagonal(gram, 0.0)
            off = float(np.abs(gram).max())
        ok &= _diff(diffs, "packets_orthogonal", True, off <= 1e-10)
        ok &= _diff(diffs, "bessel", True, bessel <= f.l2() ** 2 * (1 + 1e-10))
        # every selected tree carried more than (sigma/2)^2 |I_T| of eligible energy
        ok &= _diff(diffs, "bessel_energy_bound", True, total * thr * thr / 4 <= bessel * (1 + 1e-10))
    else:
        raise ValueError(f"unknown certificate kind {obj['kind']!r}")
    if "small_value" in obj:
        ok &= _diff(diffs, "small_value", obj["small_value"], sv)
    ok &= _diff(diffs, "small_halved", True, sv <= thr / 2 * (1 + 1e-9))
    ratio = total / scale if scale > 0 else math.inf
    ok &= _diff(diffs, "measured_ratio", obj["measured_ratio"], ratio)
    ok &= _diff(diffs, "ratio_within_constant", True, ratio <= const)
    return {"ok": bool(ok), "diffs": diffs}
