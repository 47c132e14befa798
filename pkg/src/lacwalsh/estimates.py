"""End-to-end experiments: major subsets, restricted weak type, the
strong-type iteration, distribution curves, the exact Antonov reduction and
the final norm checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dyadic import (
    DyadicFunction,
    LacunarySequence,
    decreasing_rearrangement,
    lacunary_maximal,
    log_plus,
    loglog_plus,
    partial_sums,
    weak_l1_norm,
)
from .multifreq import (
    DEFAULT_C0,
    GateError,
    choose_lambda,
    exceptional_cover,
    multifreq_project,
)
from .orlicz import luxembourg_norm
from .phase_plane import (
    ChoiceFunction,
    CoefficientTable,
    DensityField,
    bilinear_terms,
    carleson_apply,
    enumerate_bitiles,
)
from .tf_algorithm import density_split

DEFAULT_CONSTANTS = {
    "C_rw": 64.0,
    "C_dist": 64.0,
    "C_fac": 64.0,
    "C_norm": 64.0,
    "C_strong": 64.0,
    "C_k": 8.0,
    "C0": DEFAULT_C0,
}


@dataclass
class ExperimentReport:
    experiment: str
    params: dict
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    seed: int | None = None

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_json(self) -> dict:
        return {"experiment": self.experiment, "params": self.params, "seed": self.seed,
                "rows": self.rows, "summary": self.summary, "checks": self.checks,
                "passed": self.passed}


def _measure_ratio(num: float, den: float) -> float:
    if den > 0:
        return num / den
    return 0.0 if abs(num) < 1e-14 else math.inf


# --- major subsets -----------------------------------------------------------------

@dataclass
class MajorSubset:
    G_prime: DyadicFunction
    lam: float | None
    cover: object | None
    l2_regime: bool
    G_measure: float

    @property
    def is_major(self) -> bool:
        return self.G_prime.measure() >= 0.5 * self.G_measure


def major_subset(F: DyadicFunction, G: DyadicFunction, C0: float = DEFAULT_C0) -> MajorSubset:
    """``G' = G minus {M 1_F > lambda}``; ``G' = G`` outside the gate or for empty ``F``."""
    Fm, Gm = F.measure(), G.measure()
    if Fm == 0:
        ms = MajorSubset(G, None, None, False, Gm)
    else:
        try:
            lam = choose_lambda(Fm, Gm, C0)
        except GateError:
            ms = MajorSubset(G, None, None, True, Gm)
        else:
            cover = exceptional_cover(F, lam)
            Gp = DyadicFunction(G.K, G.values * ~cover.mask())
            ms = MajorSubset(Gp, lam, cover, False, Gm)
    if not ms.is_major:
        raise AssertionError("G' is not a major subset of G")
    return ms


def choice_for(f: DyadicFunction, seq: LacunarySequence, strategy="argmax") -> ChoiceFunction:
    """Choice function by name: ``argmax`` picks the ``n_j`` maximizing ``|S n_j f|``
    on each cell; ``constant`` the single ``n_j`` maximizing ``||S n_j f||_1``."""
    if isinstance(strategy, ChoiceFunction):
        return strategy
    if strategy == "argmax":
        return ChoiceFunction(f.K, lacunary_maximal(f, seq)[1], seq)
    if strategy == "constant":
        sums = np.abs(partial_sums(f, seq.terms)).sum(axis=1)
        return ChoiceFunction.constant(f.K, int(seq.as_array()[int(np.argmax(sums))]), seq)
    raise ValueError(f"unknown choice strategy {strategy!r}")


# --- restricted weak type ----------------------------------------------------------

def restricted_weak_experiment(F: DyadicFunction, G: DyadicFunction, seq: LacunarySequence,
                               N_strategy="argmax", f: DyadicFunction | None = None,
                               C_rw: float = DEFAULT_CONSTANTS["C_rw"],
                               C0: float = DEFAULT_CONSTANTS["C0"],
                               C_k: float = DEFAULT_CONSTANTS["C_k"],
                               levels: bool = True) -> ExperimentReport:
    """``|<C f, g>|`` for ``g = sign(C f) 1_G'`` against ``|F| loglog_+(|G|/|F|)``."""
    K = F.K
    if f is None:
        f = F
    if np.any(np.abs(f.values) > F.values + 1e-15):
        raise ValueError("f is not dominated by F")
    Fm, Gm = F.measure(), G.measure()
    ms = major_subset(F, G, C0)
    N = choice_for(f, seq, N_strategy)
    Gp = ms.G_prime
    inGp = Gp.values > 0
    P = enumerate_bitiles(K, seq).meeting(F.values > 0).meeting(inGp)
    table = CoefficientTable(f)
    Cf_full = carleson_apply(table, N, enumerate_bitiles(K, seq))
    Cf = carleson_apply(table, N, P)
    g = DyadicFunction(K, np.sign(Cf.values) * inGp)
    terms = bilinear_terms(table, g, N)
    form = float(sum(t[m].sum() for t, m in zip(terms, P.masks)))
    # on G' the restriction to P loses nothing
    restriction_err = float(np.abs((Cf_full.values - Cf.values)[inGp]).max()) if inGp.any() else 0.0
    if ms.l2_regime:
        bound = f.l2() * g.l2()
        regime = "L2"
    else:
        bound = Fm * float(loglog_plus(Gm / Fm)) if Fm > 0 else 0.0
        regime = "restricted"
    ratio = _measure_ratio(abs(form), bound)
    rep = ExperimentReport("restricted-weak", {
        "K": K, "seq_ratio": seq.ratio, "F_measure": Fm, "G_measure": Gm,
        "G_prime_measure": Gp.measure(), "lambda": ms.lam, "N_strategy": str(N_strategy) if not isinstance(N_strategy, ChoiceFunction) else "given",
        "regime": regime, "C_rw": C_rw})
    rep.summary = {"measured": abs(form), "bound": bound, "ratio": ratio,
                   "restriction_error": restriction_err, "bitiles": len(P)}
    rep.checks = {"ratio_within_C_rw": ratio <= C_rw, "restriction_exact": restriction_err <= 1e-9,
                  "major_subset": ms.is_major}
    if levels and not ms.l2_regime and P:
        rows, ok_mf = _density_levels(P, f, g, G, N, Fm, Gm, ms, C_k)
        rep.rows = rows
        rep.checks["multifreq_cancellation"] = ok_mf
    return rep


def _density_levels(P, f, g, G, N, Fm, Gm, ms, C_k):
    """Split ``P`` into ``P_k`` with density ``<= 2^-k`` and record each level's form."""
    from .multifreq import k0 as k0_of

    K = P.K
    lam = ms.lam
    field = DensityField(G, N)
    table = CoefficientTable(f)
    terms = bilinear_terms(table, g, N)
    kk0 = k0_of(lam, C_k)
    rows, ok = [], True
    rem, k = P, 0
    while rem and k <= K + 2:
        d = field.of(rem)
        if d == 0:
            level, rem = rem, rem - rem
        elif d > 2.0 ** (-k - 1):
            cert = density_split(rem, G, N, delta=max(2.0 ** -k, d), field=field)
            level, rem = cert.big, cert.small
        else:
            k += 1
            continue
        form = float(sum(t[m].sum() for t, m in zip(terms, level.masks)))
        if k <= kk0:
            lb = lam * Gm
        else:
            lb = 2.0 ** (-k / 2) * Fm * math.sqrt(float(log_plus(1 / lam)))
        proj = multifreq_project(f, ms.cover, level, g, N)
        ok &= proj.ok()
        rows.append({"K": K, "F_measure": Fm, "G_measure": Gm, "lambda": lam, "k": k,
                     "level_bound": lb, "measured_form": abs(form),
                     "ratio": _measure_ratio(abs(form), lb)})
        k += 1
    return rows, bool(ok)


# --- strong type ------------------------------------------------------------------

def strong_type_t0(F_measure: float) -> int:
    return 2 + math.ceil(math.log2(1 / F_measure))


def strong_type_iteration(F: DyadicFunction, seq: LacunarySequence, f: DyadicFunction | None = None,
                          C0: float = DEFAULT_CONSTANTS["C0"],
                          C_strong: float = DEFAULT_CONSTANTS["C_strong"]) -> ExperimentReport:
    """Peel ``[0, 1]`` into major subsets ``G'_t`` and sum ``<C f, sign(C f) 1_G'_t>``."""
    K = F.K
    if f is None:
        f = F
    if np.any(np.abs(f.values) > F.values + 1e-15):
        raise ValueError("f is not dominated by F")
    Fm = F.measure()
    if not 0 < Fm <= 1:
        raise ValueError("need 0 < |F| <= 1")
    N = choice_for(f, seq, "argmax")
    Cf = carleson_apply(f, N, enumerate_bitiles(K, seq))
    absC = np.abs(Cf.values)
    t0 = strong_type_t0(Fm) if Fm < 1 else 0
    G = DyadicFunction.constant(K, 1.0)
    rows, parts, terms = [], [], []
    halving = True
    t = 0
    while G.measure() > 0:
        Gm = G.measure()
        ms = major_subset(F, G, C0)
        Gp = ms.G_prime
        term = float(absC[Gp.values > 0].sum()) / (1 << K)
        if ms.l2_regime:
            bound = f.l2() * math.sqrt(Gp.measure())
        else:
            bound = Fm * float(loglog_plus(Gm / Fm))
        rows.append({"t": t, "G_measure": Gm, "G_prime_measure": Gp.measure(),
                     "regime": "L2" if ms.l2_regime else "restricted",
                     "term": term, "bound": bound, "ratio": _measure_ratio(term, bound)})
        parts.append(Gp.values > 0)
        terms.append(term)
        G = DyadicFunction(K, G.values * (Gp.values == 0))
        if not ms.l2_regime:
            halving &= G.measure() <= Gm / 2
        t += 1
        if ms.l2_regime:
            break
    cover = np.zeros(1 << K, dtype=int)
    for p in parts:
        cover += p
    total = Cf.l1()
    denom = Fm * float(log_plus(1 / Fm)) * float(loglog_plus(1 / Fm))
    ratio = total / denom
    rep = ExperimentReport("strong-type", {"K": K, "seq_ratio": seq.ratio, "F_measure": Fm,
                                           "t0": t0, "C_strong": C_strong})
    rep.rows = rows
    rep.summary = {"steps": len(rows), "norm_C_f": total, "sum_terms": math.fsum(terms),
                   "bound": denom, "ratio": ratio}
    rep.checks = {
        "partition": bool(np.all(cover == 1)),
        "telescoping": abs(math.fsum(terms) - total) <= 1e-12 * max(1.0, total),
        "halving": bool(halving),
        "steps_within_t0": len(rows) <= max(t0, 1),
        "ratio_within_C_strong": ratio <= C_strong,
    }
    return rep


# --- distribution curves ----------------------------------------------------------------

def t_grid(K: int, per_decade: int = 64) -> np.ndarray:
    """Log-spaced points (``per_decade`` per decade) on ``[2^-K, 1]``."""
    lo = -K * math.log10(2)
    n = int(math.ceil(-lo * per_decade)) + 1
    return np.clip(np.logspace(lo, 0.0, n), 2.0 ** -K, 1.0)


def distribution_curve(f: DyadicFunction, F_measure: float, seq: LacunarySequence,
                       C_dist: float = DEFAULT_CONSTANTS["C_dist"], per_decade: int = 64) -> ExperimentReport:
    """``t (C_lac f)*(t) / (|F| loglog_+(t / |F|))`` on the log grid."""
    K = f.K
    h, _ = lacunary_maximal(f, seq)
    curve = decreasing_rearrangement(h)
    ts = t_grid(K, per_decade)
    vals = np.asarray(curve(ts), dtype=float)
    if F_measure > 0:
        den = F_measure * np.asarray(loglog_plus(ts / F_measure), dtype=float)
        ratio = ts * vals / den
    else:
        ratio = np.zeros_like(ts)
    rep = ExperimentReport("distribution", {"K": K, "seq_ratio": seq.ratio, "F_measure": F_measure,
                                            "per_decade": per_decade, "C_dist": C_dist})
    rep.rows = [{"t": float(t), "rearrangement": float(v), "ratio": float(r)}
                for t, v, r in zip(ts, vals, ratio)]
    sup = float(ratio.max()) if ratio.size else 0.0
    rep.summary = {"sup": sup, "points": int(ts.size)}
    rep.checks = {"sup_within_C_dist": sup <= C_dist}
    return rep


def unrestricted_distribution_curve(f: DyadicFunction, seq: LacunarySequence, K_prime: int,
                                    C_dist: float = DEFAULT_CONSTANTS["C_dist"]) -> ExperimentReport:
    """Curve for ``0 <= f <= 1`` with ``||f||_1`` in place of ``|F|``, computed on the
    Antonov indicator; records that the two maximal functions agree."""
    F = antonov_indicator(f, K_prime)
    rep = distribution_curve(F, F.measure(), seq, C_dist)
    h_f, _ = lacunary_maximal(f.refine(K_prime), seq)
    h_F, _ = lacunary_maximal(F, seq)
    diff = float(np.abs(h_f.values - h_F.values).max())
    rep.experiment = "distribution-unrestricted"
    rep.params["K_prime"] = K_prime
    rep.summary["maximal_difference"] = diff
    rep.checks["reduction_exact"] = diff <= 1e-12
    return rep


# --- Antonov ------------------------------------------------------------------------

def antonov_indicator(f: DyadicFunction, K_prime: int) -> DyadicFunction:
    """Indicator at resolution ``K_prime`` with the same cell averages as ``f``
    at resolution ``K``: in each coarse cell it fills the leftmost
    ``f(cell) 2^(K' - K)`` fine cells."""
    K = f.K
    if K_prime <= K:
        raise ValueError("K' must exceed K")
    v = f.values
    if np.any(v < 0) or np.any(v > 1):
        raise ValueError("f must take values in [0, 1]")
    d = K_prime - K
    q = v * (1 << d)
    counts = np.rint(q)
    if np.any(counts != q):
        raise ValueError(f"f has values that are not multiples of 2^-{d}; raise K' to represent them exactly")
    offs = np.arange(1 << d)
    F = (offs[None, :] < counts[:, None]).reshape(-1).astype(float)
    return DyadicFunction(K_prime, F)


def antonov_error(f: DyadicFunction, F: DyadicFunction) -> float:
    """``max_{n <= 2^K} ||S_n(f - 1_F)||_inf`` on the fine grid."""
    diff = f.refine(F.K) - F
    ns = np.arange((1 << f.K) + 1)
    worst = 0.0
    for chunk in np.array_split(ns, max(1, ns.size // 64)):
        worst = max(worst, float(np.abs(partial_sums(diff, chunk)).max()))
    return worst


# --- final norms ----------------------------------------------------------------------

def _D(s: float) -> float:
    return s * float(loglog_plus(1 / s))


def final_norm_checks(f: DyadicFunction, seq: LacunarySequence,
                      C_norm: float = DEFAULT_CONSTANTS["C_norm"],
                      C_fac: float = DEFAULT_CONSTANTS["C_fac"], per_decade: int = 64) -> ExperimentReport:
    """Weak and strong norms of ``C_lac f`` against their Orlicz right-hand sides,
    plus the ``D(s) R(t)`` factorization for atoms."""
    K = f.K
    if f.is_zero():
        raise ValueError("f must be nonzero")
    h, _ = lacunary_maximal(f, seq)
    weak = weak_l1_norm(h)
    strong = h.l1()
    rhs_weak = luxembourg_norm(f, "L_loglogL_logloglogL")
    rhs_strong = luxembourg_norm(f, "L_logL_loglogL")
    curve = decreasing_rearrangement(h)
    mr = curve.weak_norm(lambda t: 1.0 / t)
    rep = ExperimentReport("final-norms", {"K": K, "seq_ratio": seq.ratio, "f_l1": f.l1(),
                                           "f_linf": f.linf(), "C_norm": C_norm, "C_fac": C_fac})
    rw, rs = weak / rhs_weak, strong / rhs_strong
    rep.summary = {"weak": weak, "rhs_weak": rhs_weak, "weak_ratio": rw,
                   "strong": strong, "rhs_strong": rhs_strong, "strong_ratio": rs, "M_R": mr}
    rep.checks = {"weak_within_C_norm": rw <= C_norm, "strong_within_C_norm": rs <= C_norm,
                  "M_R_is_weak_L1": abs(mr - weak) <= 1e-12 * max(1.0, weak)}
    if f.linf() <= 1:
        s = f.l1()
        ts = t_grid(K, per_decade)
        fac = np.asarray(curve(ts), dtype=float) * ts / _D(s)
        rep.rows = [{"t": float(t), "ratio": float(r)} for t, r in zip(ts, fac)]
        rep.summary["factorization_sup"] = float(fac.max())
        # D(s) = s loglog_+(1/s) is concave where its second difference is negative
        eps = 1e-4 * s
        second = _D(s + eps) - 2 * _D(s) + _D(max(s - eps, 1e-300))
        rep.summary["D_concave_at_norm"] = bool(second <= 1e-15)
        rep.checks["factorization_within_C_fac"] = float(fac.max()) <= C_fac
        rep.checks["vanishes_beyond_1"] = float(curve(1.0 + 1e-12)) == 0.0
    return rep


def convex_combination_check(pieces, weights, seq: LacunarySequence) -> dict:
    """Sublinearity of ``C_lac`` over a weighted sum of dominated pieces."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    K = pieces[0].K
    total = DyadicFunction(K, sum(w * p.values for w, p in zip(weights, pieces)))
    h_total = lacunary_maximal(total, seq)[0]
    h_parts = [lacunary_maximal(p, seq)[0] for p in pieces]
    combo = sum(w * h.values for w, h in zip(weights, h_parts))
    return {"pointwise_gap": float(np.max(h_total.values - combo)),
            "lhs": h_total.l1(), "rhs": float(sum(w * h.l1() for w, h in zip(weights, h_parts))),
            "holds": bool(np.all(h_total.values <= combo + 1e-12))}


__all__ = [
    "ExperimentReport", "MajorSubset", "major_subset", "choice_for", "restricted_weak_experiment",
    "strong_type_iteration", "strong_type_t0", "t_grid", "distribution_curve",
    "unrestricted_distribution_curve", "antonov_indicator", "antonov_error", "final_norm_checks",
    "convex_combination_check", "DEFAULT_CONSTANTS",
]
