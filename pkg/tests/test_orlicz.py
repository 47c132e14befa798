from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from lacwalsh.dyadic import DyadicFunction
from lacwalsh.orlicz import GAUGE_TAGS, gauge, luxembourg_norm


def test_identity_gauge_is_l1(rng):
    f = DyadicFunction(6, rng.standard_normal(64))
    assert luxembourg_norm(f, "identity") == pytest.approx(f.l1(), rel=1e-9)


@pytest.mark.parametrize("tag", [t for t in GAUGE_TAGS if t != "custom"])
def test_builtin_gauges_pass_checks(tag):
    assert all(gauge(tag).check().values())


@pytest.mark.parametrize("tag", ["L_logL_half", "L_logL_loglogL", "L_loglogL_logloglogL"])
def test_constant_function_matches_root_finder(tag):
    psi = gauge(tag)
    f = DyadicFunction.constant(3, 1.0)
    # mean psi(1/C) = 1 solved independently
    C = brentq(lambda c: float(psi(1.0 / c)) - 1.0, 1e-6, 1e3)
    assert luxembourg_norm(f, psi) == pytest.approx(C, rel=1e-8)


def test_spike_matches_root_finder():
    m = 8
    f = DyadicFunction.interval_indicator(10, 0, 2.0 ** -m) * (2.0 ** m)
    psi = gauge("L_logL_half")
    C = brentq(lambda c: 2.0 ** -m * float(psi(2.0 ** m / c)) - 1.0, 1e-3, 1e3)
    assert luxembourg_norm(f, psi) == pytest.approx(C, rel=1e-8)


def test_exp_l2_handles_large_values():
    f = DyadicFunction(4, np.r_[[200.0], np.zeros(15)])
    C = luxembourg_norm(f, "exp_L2")
    # mean (e^{(200/C)^2} - 1) = 1  <=>  (200/C)^2 = log(17)
    assert C == pytest.approx(200 / math.sqrt(math.log(17)), rel=1e-8)


def test_custom_non_convex_is_replaced_by_minorant():
    g = gauge("custom", lambda t: np.minimum(t, 1.0) + np.maximum(t - 2.0, 0.0) ** 2)
    assert g.is_convex()
    assert float(g(1.5)) <= 1.5


def test_zero_norm_and_unknown_tag():
    assert luxembourg_norm(DyadicFunction.zeros(3), "L_logL_half") == 0.0
    with pytest.raises(ValueError):
        gauge("L_logL_cubed")


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.1, 50.0))
def test_homogeneity(seed, c):
    f = DyadicFunction(5, np.random.default_rng(seed).standard_normal(32))
    a = luxembourg_norm(f, "L_logL_loglogL")
    assert luxembourg_norm(f * c, "L_logL_loglogL") == pytest.approx(c * a, rel=1e-8)
