from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from lacwalsh.dyadic import DyadicFunction, LacunarySequence, lacunary_maximal, partial_sums, walsh_function
from lacwalsh.estimates import (
    antonov_error,
    antonov_indicator,
    choice_for,
    convex_combination_check,
    distribution_curve,
    final_norm_checks,
    major_subset,
    restricted_weak_experiment,
    strong_type_iteration,
    strong_type_t0,
    t_grid,
    unrestricted_distribution_curve,
)
from lacwalsh.orlicz import luxembourg_norm
from lacwalsh.phase_plane import carleson_apply, enumerate_bitiles


def _interval(K, m):
    return DyadicFunction.interval_indicator(K, 0, 2.0 ** -m)


def test_major_subset_empty_F():
    G = _interval(5, 1)
    ms = major_subset(DyadicFunction.zeros(5), G)
    assert ms.G_prime == G and ms.lam is None


def test_major_subset_example():
    K = 8
    ms = major_subset(_interval(K, 6), DyadicFunction.constant(K, 1.0))
    assert ms.lam == 2 ** -5
    removed = DyadicFunction.constant(K, 1.0) - ms.G_prime
    assert np.array_equal(removed.values > 0, ms.cover.mask())
    assert ms.G_prime.measure() >= 0.5


def test_major_subset_exhaustive_K3():
    K = 3
    subsets = [DyadicFunction(K, np.array([(b >> i) & 1 for i in range(8)], dtype=float)) for b in range(256)]
    for F, G in itertools.product(subsets, subsets):
        if G.measure() == 0:
            continue
        assert major_subset(F, G).is_major


def test_major_subset_structured_K6():
    K = 6
    ivs = [(s, m) for s in range(K + 1) for m in range(1 << s)]

    def union(pair):
        v = np.zeros(1 << K)
        for s, m in pair:
            w = 1 << (K - s)
            v[m * w:(m + 1) * w] = 1
        return DyadicFunction(K, v)

    Fs = [union(p) for p in itertools.combinations_with_replacement(ivs, 2)]
    Gs = [union([iv]) for iv in ivs if iv[0] <= 2]
    for F in Fs:
        for G in Gs:
            assert major_subset(F, G).is_major


def test_l2_regime():
    K = 6
    F = DyadicFunction.constant(K, 1.0)
    rep = restricted_weak_experiment(F, F, LacunarySequence.default(K))
    assert rep.params["regime"] == "L2"
    assert rep.passed
    assert rep.summary["ratio"] <= 1 + 1e-12


def test_restricted_weak_interval_family_K10():
    K = 10
    seq = LacunarySequence.default(K)
    G = DyadicFunction.constant(K, 1.0)
    ratios = []
    for m in range(2, 9):
        rep = restricted_weak_experiment(_interval(K, m), G, seq)
        assert rep.passed, rep.checks
        assert rep.params["regime"] == "restricted"
        ratios.append(rep.summary["ratio"])
        for row in rep.rows:
            assert row["measured_form"] >= 0
    assert max(ratios) < 1.0


@pytest.mark.parametrize("trial", range(6))
def test_restricted_weak_random_sets(trial):
    rng = np.random.default_rng(300 + trial)
    K = 8
    F = DyadicFunction(K, (rng.random(1 << K) < 0.05).astype(float))
    G = DyadicFunction(K, (rng.random(1 << K) < 0.7).astype(float))
    if F.measure() == 0 or G.measure() == 0:
        return
    f = DyadicFunction(K, F.values * rng.uniform(-1, 1, 1 << K))
    rep = restricted_weak_experiment(F, G, LacunarySequence.default(K), f=f)
    assert rep.checks["restriction_exact"] and rep.checks["major_subset"]
    assert rep.checks.get("multifreq_cancellation", True)


def test_argmax_choice_dominates_constant():
    K = 8
    seq = LacunarySequence.default(K)
    F = _interval(K, 4)
    P = enumerate_bitiles(K, seq)
    a = carleson_apply(F, choice_for(F, seq, "argmax"), P).l1()
    c = carleson_apply(F, choice_for(F, seq, "constant"), P).l1()
    assert a >= c - 1e-12


def test_restricted_weak_rejects_undominated_f():
    K = 4
    with pytest.raises(ValueError):
        restricted_weak_experiment(_interval(K, 2), _interval(K, 0), LacunarySequence.default(K),
                                   f=DyadicFunction.constant(K, 1.0))


def test_strong_type_t0():
    assert strong_type_t0(2 ** -6) == 8


def test_strong_type_full_F_single_L2_step():
    K = 6
    rep = strong_type_iteration(DyadicFunction.constant(K, 1.0), LacunarySequence.default(K))
    assert rep.summary["steps"] == 1 and rep.rows[0]["regime"] == "L2"
    assert rep.checks["partition"] and rep.checks["telescoping"]


@pytest.mark.parametrize("m", [2, 5, 8])
def test_strong_type_partition_and_telescoping(m):
    K = 10
    rep = strong_type_iteration(_interval(K, m), LacunarySequence.default(K))
    for name in ("partition", "telescoping", "halving", "steps_within_t0", "ratio_within_C_strong"):
        assert rep.checks[name], name
    assert rep.summary["steps"] <= strong_type_t0(2.0 ** -m)


def test_t_grid():
    ts = t_grid(10, per_decade=64)
    assert ts[0] == 2 ** -10 and ts[-1] == 1.0
    assert np.all(np.diff(ts) > 0)
    assert ts.size == math.ceil(10 * math.log10(2) * 64) + 1


def test_distribution_zero():
    K = 6
    rep = distribution_curve(DyadicFunction.zeros(K), 0.0, LacunarySequence.default(K))
    assert all(r["rearrangement"] == 0 and r["ratio"] == 0 for r in rep.rows)


def test_distribution_atom_K12():
    K = 12
    rep = distribution_curve(_interval(K, 6), 2 ** -6, LacunarySequence.default(K))
    assert rep.passed and 0 < rep.summary["sup"] < 1.0


def test_unrestricted_distribution_reduction(rng):
    K = 5
    f = DyadicFunction(K, rng.integers(0, 5, 1 << K) / 4)
    rep = unrestricted_distribution_curve(f, LacunarySequence.default(K), K + 2)
    assert rep.checks["reduction_exact"]
    assert rep.params["F_measure"] == pytest.approx(f.l1(), abs=0)


def test_antonov_K0():
    f = DyadicFunction.constant(0, 0.5)
    F = antonov_indicator(f, 1)
    assert F.values.tolist() == [1.0, 0.0]
    assert np.abs(partial_sums(f.refine(1) - F, [1])).max() == 0


def test_antonov_K2():
    f = DyadicFunction.constant(2, 0.5)
    F = antonov_indicator(f, 3)
    assert F.values.tolist() == [1, 0] * 4
    assert antonov_error(f, F) == 0


def test_antonov_random_K6(rng):
    K, Kp = 6, 10
    f = DyadicFunction(K, rng.integers(0, 17, 1 << K) / 16)
    F = antonov_indicator(f, Kp)
    assert set(np.unique(F.values)) <= {0.0, 1.0}
    assert F.measure() == f.l1()
    assert antonov_error(f, F) <= 1e-12


def test_antonov_rejects_unrepresentable_values():
    with pytest.raises(ValueError, match="raise K'"):
        antonov_indicator(DyadicFunction.constant(2, 1 / 3), 6)
    with pytest.raises(ValueError):
        antonov_indicator(DyadicFunction.constant(2, 0.5), 2)


def test_final_norms_constant():
    K = 6
    seq = LacunarySequence.default(K)
    f = walsh_function(0, K)
    h, _ = lacunary_maximal(f, seq)
    assert np.allclose(h.values, 1.0)
    rep = final_norm_checks(f, seq)
    assert rep.passed
    assert rep.summary["weak_ratio"] == pytest.approx(1 / luxembourg_norm(f, "L_loglogL_logloglogL"))
    assert rep.summary["strong_ratio"] == pytest.approx(1 / luxembourg_norm(f, "L_logL_loglogL"))


@pytest.mark.parametrize("m", [2, 6, 10])
def test_final_norms_normalized_atoms(m):
    K = 12
    f = DyadicFunction(K, (2.0 ** m) * _interval(K, m).values)
    rep = final_norm_checks(f, LacunarySequence.default(K))
    assert rep.passed and "factorization_sup" not in rep.summary


def test_final_norms_rejects_zero():
    with pytest.raises(ValueError):
        final_norm_checks(DyadicFunction.zeros(4), LacunarySequence.default(4))


def test_convex_combination(rng):
    K = 6
    seq = LacunarySequence.default(K)
    pieces = [DyadicFunction(K, rng.uniform(-1, 1, 1 << K)) for _ in range(4)]
    rep = convex_combination_check(pieces, rng.dirichlet(np.ones(4)), seq)
    assert rep["holds"] and rep["lhs"] <= rep["rhs"] + 1e-12
