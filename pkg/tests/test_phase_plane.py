from __future__ import annotations

import itertools
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from lacwalsh.dyadic import DyadicFunction, LacunarySequence, partial_sums, walsh_function
from lacwalsh.phase_plane import (
    BiTile,
    ChoiceFunction,
    CoefficientTable,
    DensityField,
    SizeField,
    Tile,
    TileCollection,
    Tree,
    bilinear_form,
    bitile_less,
    carleson_apply,
    coefficient,
    density,
    enumerate_bitiles,
    grid_width,
    rectangles_intersect,
    size,
    tree_masks,
    upper_size_check,
    wave_packet,
)


def all_bitiles(K):
    return [BiTile(s, m, n) for s in range(K + 1) for m in range(1 << s) for n in range(grid_width(K, s))]


def virtual_tops(K):
    return [Tile(0, 0, k) for k in range(1 << K)]


def random_collection(rng, K, p=0.5):
    return TileCollection.from_bitiles(K, [P for P in all_bitiles(K) if rng.random() < p])


def overlap(a, b):
    return a[0] < b[1] and b[0] < a[1]


def brute_size(P, f, K):
    table = CoefficientTable(f)
    best = 0.0
    for T in all_bitiles(K) + virtual_tops(K):
        tot = 0.0
        for Q in P.bitiles():
            if bitile_less(Q, T) and not overlap(Q.lower.freq_interval, T.freq_interval):
                tot += table(Q.lower) ** 2
        best = max(best, tot / float(T.time_interval[1] - T.time_interval[0]))
    return math.sqrt(best)


def brute_density(P, G, N, K):
    best = 0.0
    for Q in P.bitiles():
        for T in all_bitiles(K):
            if bitile_less(Q, T):
                a, b = T.time_interval
                lo, hi = T.freq_interval
                cells = range(int(a * (1 << K)), int(b * (1 << K)))
                cnt = sum(1 for x in cells if G.values[x] > 0 and lo <= N.values[x] < hi)
                best = max(best, cnt / (1 << K) / float(b - a))
    return best


def test_tile_geometry_and_text():
    P = BiTile(2, 1, 3)
    assert P.time_interval == (Fraction(1, 4), Fraction(1, 2))
    assert P.freq_interval == (24, 32)
    assert P.lower == Tile(2, 1, 6) and P.upper == Tile(2, 1, 7)
    assert BiTile.parse(P.text()) == P and Tile.parse("3:2:5") == Tile(3, 2, 5)
    assert rectangles_intersect(P, P.lower)
    assert bitile_less(BiTile(3, 2, 0), BiTile(2, 1, 0)) and not bitile_less(BiTile(3, 2, 1), BiTile(2, 1, 0))
    assert not bitile_less(P, P, strict=True) and bitile_less(P, P)


def test_collection_set_operations(rng):
    K = 4
    A, B = random_collection(rng, K), random_collection(rng, K)
    sa, sb = set(A.bitiles()), set(B.bitiles())
    assert set((A | B).bitiles()) == sa | sb
    assert set((A & B).bitiles()) == sa & sb
    assert set((A - B).bitiles()) == sa - sb
    assert TileCollection.from_json(K, json.loads(json.dumps(A.to_json()))) == A
    assert len(A) == len(sa)


@pytest.mark.parametrize("K", [3, 4])
def test_tree_masks_brute_force(K):
    for T in all_bitiles(K) + virtual_tops(K):
        under = TileCollection(K, tree_masks(T, K))
        elig = TileCollection(K, tree_masks(T, K, eligible_only=True))
        want = {Q for Q in all_bitiles(K) if bitile_less(Q, T)}
        want_e = {Q for Q in want if not overlap(Q.lower.freq_interval, T.freq_interval)}
        assert set(under.bitiles()) == want
        assert set(elig.bitiles()) == want_e


def test_wave_packets_orthonormal_across_a_scale():
    K = 4
    tiles = [Tile(s, m, q) for s in (1, 2) for m in range(1 << s) for q in range(1 << (K - s))]
    W = np.array([wave_packet(p, K).values for p in tiles])
    gram = W @ W.T / (1 << K)
    for i, j in itertools.product(range(len(tiles)), repeat=2):
        expect = 1.0 if i == j else (0.0 if not rectangles_intersect(tiles[i], tiles[j]) else None)
        if expect is not None:
            assert gram[i, j] == pytest.approx(expect, abs=1e-12)


def test_coefficient_table_matches_inner_products(rng):
    K = 5
    f = DyadicFunction(K, rng.standard_normal(1 << K))
    table = CoefficientTable(f)
    for p in [Tile(0, 0, 7), Tile(2, 3, 5), Tile(5, 17, 0)]:
        assert table(p) == pytest.approx(f.inner(wave_packet(p, K)))
        assert coefficient(f, p) == pytest.approx(table(p))


@pytest.mark.parametrize("K", [4, 6])
def test_master_identity_small(K, rng):
    seq = LacunarySequence.geometric(1.7, 1 << K, start=1)
    for _ in range(5):
        f = DyadicFunction(K, rng.standard_normal(1 << K))
        N = ChoiceFunction(K, rng.choice(seq.as_array(), 1 << K), seq)
        sums = partial_sums(f, seq.terms)
        oracle = sums[np.searchsorted(seq.as_array(), N.values), np.arange(1 << K)]
        assert np.allclose(carleson_apply(f, N, enumerate_bitiles(K, seq)).values, oracle, atol=1e-12)


def test_bilinear_form_equals_pairing(rng):
    K = 6
    seq = LacunarySequence.default(K)
    f = DyadicFunction(K, rng.standard_normal(1 << K))
    g = DyadicFunction(K, rng.uniform(-1, 1, 1 << K))
    N = ChoiceFunction(K, rng.choice(seq.as_array(), 1 << K))
    P = random_collection(rng, K, 0.4)
    assert bilinear_form(P, f, g, N) == pytest.approx(carleson_apply(f, N, P).inner(g), abs=1e-12)


def test_enumeration_grows_with_resolution():
    counts = [len(enumerate_bitiles(K, LacunarySequence.default(K))) for K in range(4, 10)]
    for a, b in zip(counts, counts[1:]):
        assert 1.8 <= b / a <= 2.3


@pytest.mark.parametrize("trial", range(4))
def test_density_matches_brute_force(trial):
    rng = np.random.default_rng(trial)
    K = 4
    G = DyadicFunction(K, (rng.random(1 << K) < 0.5).astype(float))
    N = ChoiceFunction(K, rng.integers(0, 1 << K, 1 << K))
    P = random_collection(rng, K, 0.3)
    assert density(P, G, N) == pytest.approx(brute_density(P, G, N, K), abs=1e-12)


@pytest.mark.parametrize("trial", range(4))
def test_size_matches_brute_force(trial):
    rng = np.random.default_rng(100 + trial)
    K = 4
    f = DyadicFunction(K, rng.standard_normal(1 << K))
    P = random_collection(rng, K, 0.3)
    assert size(P, f) == pytest.approx(brute_size(P, f, K), abs=1e-12)


def test_size_examples():
    K = 4
    P = TileCollection.from_bitiles(K, [BiTile(1, 0, 0)])
    f = wave_packet(BiTile(1, 0, 0).lower, K)
    s, top = SizeField(P, f).witness()
    assert s == pytest.approx(1.0) and top == BiTile(0, 0, 1)
    one = TileCollection.from_bitiles(K, [BiTile(0, 0, 0)])
    s, top = SizeField(one, DyadicFunction.constant(K, 1.0)).witness()
    assert s == pytest.approx(1.0) and top == Tile(0, 0, 1)
    assert size(TileCollection(K), f) == 0.0


def test_density_example():
    K = 3
    P = TileCollection.from_bitiles(K, [BiTile(0, 0, 0)])
    assert density(P, DyadicFunction.constant(K, 1.0), ChoiceFunction.constant(K, 1)) == 1.0
    field = DensityField(DyadicFunction.zeros(K), ChoiceFunction.constant(K, 1))
    assert field.of(P) == 0.0


def test_tree_validation():
    K = 3
    T = Tree(BiTile(0, 0, 1), TileCollection.from_bitiles(K, [BiTile(1, 0, 0), BiTile(1, 1, 0)]))
    assert T.length == 1.0 and len(T.eligible) == 2
    assert Tree.from_json(K, json.loads(json.dumps(T.to_json()))).members == T.members
    with pytest.raises(ValueError):
        Tree(BiTile(1, 0, 0), TileCollection.from_bitiles(K, [BiTile(1, 1, 0)]))


def test_upper_size_check(rng):
    K = 6
    f = DyadicFunction(K, rng.uniform(-1, 1, 1 << K))
    P = enumerate_bitiles(K, LacunarySequence.default(K))
    rep = upper_size_check(P, f, A=1.0)
    assert rep["precondition_ok"] and rep["holds"]


def test_choice_function_validation():
    with pytest.raises(ValueError):
        ChoiceFunction(2, [0, 1, 2, 4])
    with pytest.raises(ValueError):
        ChoiceFunction(2, [1, 1, 3, 2], LacunarySequence((1, 2)))
    assert np.array_equal(walsh_function(0, 2).values, np.ones(4))
