from __future__ import annotations

import json

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from lacwalsh.dyadic import (
    DyadicFunction,
    LacunarySequence,
    bit_reverse,
    cell_average,
    decreasing_rearrangement,
    dyadic_maximal,
    inverse_walsh_transform,
    lacunary_maximal,
    log_plus,
    loglog_plus,
    logloglog_plus,
    partial_sum,
    partial_sums,
    walsh_eval,
    walsh_function,
    walsh_transform,
    weak_l1_norm,
)


def rademacher_walsh(n, K):
    """W_n as a product of Rademacher functions sampled at cell midpoints."""
    x = (np.arange(1 << K) + 0.5) / (1 << K)
    out = np.ones(1 << K)
    k = 0
    while n >> k:
        if (n >> k) & 1:
            out *= (-1.0) ** np.floor(2 ** (k + 1) * x)
        k += 1
    return out


def test_walsh_eval_small_case():
    assert list(walsh_eval(3, np.arange(4), 2)) == [1, -1, -1, 1]
    assert np.all(walsh_function(0, 5).values == 1)


@pytest.mark.parametrize("K", [1, 3, 6])
def test_walsh_matches_rademacher_products(K):
    for n in range(1 << K):
        assert np.array_equal(walsh_function(n, K).values, rademacher_walsh(n, K))


@pytest.mark.parametrize("K", [2, 5, 8])
def test_transform_matches_hadamard_oracle(K, rng):
    H = scipy.linalg.hadamard(1 << K)
    f = rng.standard_normal(1 << K)
    # Paley order: row n evaluated on bit-reversed cells
    oracle = H[:, bit_reverse(K)] @ f / (1 << K)
    assert np.allclose(walsh_transform(DyadicFunction(K, f)), oracle, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10), st.integers(0, 2**31 - 1))
def test_roundtrip_and_parseval(K, seed):
    f = DyadicFunction(K, np.random.default_rng(seed).standard_normal(1 << K))
    c = walsh_transform(f)
    assert np.allclose(inverse_walsh_transform(c, K).values, f.values, atol=1e-12)
    assert abs(np.sum(c * c) - f.l2() ** 2) <= 1e-11 * max(1, f.l2() ** 2)


def test_partial_sum_endpoints_and_dyadic_averages(rng):
    K = 6
    f = DyadicFunction(K, rng.standard_normal(1 << K))
    assert partial_sum(f, 0).is_zero()
    assert np.allclose(partial_sum(f, 1 << K).values, f.values)
    for s in range(K + 1):
        assert np.allclose(partial_sum(f, 1 << s).values, cell_average(f, s).values)
    with pytest.raises(ValueError):
        partial_sum(f, (1 << K) + 1)


def test_partial_sums_rows_match_single_calls(rng):
    f = DyadicFunction(5, rng.standard_normal(32))
    ns = [0, 3, 17, 32]
    rows = partial_sums(f, ns)
    for row, n in zip(rows, ns):
        assert np.allclose(row, partial_sum(f, n).values)


def test_lacunary_maximal_ties_pick_first_term():
    K = 3
    f = DyadicFunction.constant(K, 2.0)
    seq = LacunarySequence((1, 2, 4))
    h, chosen = lacunary_maximal(f, seq)
    assert np.allclose(h.values, 2.0)
    assert np.all(chosen == 1)


def test_dyadic_maximal_brute_force(rng):
    K = 5
    f = DyadicFunction(K, rng.standard_normal(1 << K))
    M = dyadic_maximal(f).values
    for x in range(1 << K):
        best = max(np.abs(f.values[(x >> (K - s)) << (K - s):((x >> (K - s)) + 1) << (K - s)]).mean()
                   for s in range(K + 1))
        assert M[x] == pytest.approx(best)


def test_rearrangement_step_values():
    f = DyadicFunction(2, [3.0, 0.0, 1.0, 1.0])
    h = decreasing_rearrangement(f)
    assert h(0.1) == 3.0 and h(0.25) == 1.0 and h(0.6) == 1.0 and h(0.75) == 0.0
    assert h.integral() == pytest.approx(f.l1())
    assert weak_l1_norm(f) == pytest.approx(max(3 * 0.25, 1 * 0.75))
    assert h.distribution(0.5) == pytest.approx(0.75)


def test_sequences():
    assert LacunarySequence.geometric(2, 65).terms == (1, 2, 4, 8, 16, 32, 64)
    assert LacunarySequence.default(4).terms == (1, 2, 4, 8)
    with pytest.raises(ValueError):
        LacunarySequence((1, 1, 2))
    with pytest.raises(ValueError):
        LacunarySequence.default(3).check_resolution(2)


def test_log_helpers():
    assert log_plus(0.5) == 27.0
    assert log_plus(np.e) == pytest.approx(28.0)
    assert loglog_plus(1.0) == pytest.approx(np.log(27.0))
    assert logloglog_plus(1.0) == pytest.approx(np.log(np.log(27.0)))
    with pytest.raises(ValueError):
        log_plus(0.0)


def test_function_json_roundtrip_and_validation():
    f = DyadicFunction(2, [1.0, 0.5, 0.0, -2.0])
    assert DyadicFunction.from_json(json.loads(json.dumps(f.to_json()))) == f
    with pytest.raises(ValueError):
        DyadicFunction(2, [1.0, 2.0])
    with pytest.raises(ValueError):
        DyadicFunction.from_json({"K": 1, "values": [0, 1], "extra": 1})


def test_indicator_helpers():
    F = DyadicFunction.interval_indicator(4, 0, 2 ** -2)
    assert F.is_indicator() and F.measure() == 0.25
    assert F.refine(6).measure() == 0.25
