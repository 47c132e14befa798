"""Multi-frequency Calderon-Zygmund pieces: exceptional intervals, local
lacunary tile families over them, the local projection ``phi`` and the
Zygmund / Khintchine inequalities it relies on."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dyadic import (
    DyadicFunction,
    LacunarySequence,
    dyadic_means,
    inverse_paley_transform,
    log_plus,
    loglog_plus,
    walsh_transform,
)
from .orlicz import luxembourg_norm
from .phase_plane import (
    BiTile,
    ChoiceFunction,
    CoefficientTable,
    Tile,
    TileCollection,
    bilinear_terms,
    bitile_less,
)

DEFAULT_C0 = 0.25
LAMBDA_FACTOR = 2.0


class GateError(ValueError):
    """``|F| > C0 |G|``: the L^2 branch applies instead."""


def choose_lambda(F_measure: float, G_measure: float, C0: float = DEFAULT_C0) -> float:
    """``lambda = 2 |F| / |G|`` for ``0 < |F| <= C0 |G|``."""
    if F_measure <= 0:
        raise ValueError("|F| must be positive")
    if F_measure > C0 * G_measure:
        raise GateError(f"|F|={F_measure} exceeds C0|G|={C0 * G_measure}; use the L2 bound")
    lam = LAMBDA_FACTOR * F_measure / G_measure
    assert lam < 1
    return lam


# --- exceptional intervals ---------------------------------------------------

@dataclass
class ExceptionalCover:
    lam: float
    K: int
    intervals: list                 # (scale, index) pairs, left to right
    densities: list                 # |F cap I| / |I|
    parent_means: list              # mean of 1_F over the parent (None for [0, 1])
    degenerate: bool = False        # lam >= 1: nothing is exceptional

    @property
    def lengths(self) -> list:
        return [2.0 ** -s for s, _ in self.intervals]

    @property
    def total_length(self) -> float:
        return float(sum(self.lengths))

    def mask(self) -> np.ndarray:
        """Cells of the union ``{M 1_F > lambda}``."""
        out = np.zeros(1 << self.K, dtype=bool)
        for s, m in self.intervals:
            w = 1 << (self.K - s)
            out[m * w:(m + 1) * w] = True
        return out

    def invariants(self, F_measure: float) -> dict:
        ivs = sorted((m << (self.K - s), (m + 1) << (self.K - s)) for s, m in self.intervals)
        disjoint = all(a[1] <= b[0] for a, b in zip(ivs, ivs[1:]))
        maximal = all(p is None or p <= self.lam for p in self.parent_means)
        local = all(d <= 2 * self.lam + 1e-15 for d in self.densities)
        total = self.total_length <= F_measure / self.lam * (1 + 1e-12) if self.lam > 0 else True
        return {"disjoint": disjoint, "maximal": maximal, "local_density": local, "total_length": total}


def exceptional_cover(F: DyadicFunction, lam: float) -> ExceptionalCover:
    """Maximal dyadic intervals on which the mean of ``1_F`` exceeds ``lam``."""
    if not F.is_indicator():
        raise ValueError("F must be an indicator")
    K = F.K
    if lam >= 1:
        return ExceptionalCover(lam, K, [], [], [], degenerate=True)
    if lam <= 0:
        raise ValueError("lambda must be positive")
    means = dyadic_means(F)
    intervals, dens, parents = [], [], []
    taken = np.zeros(1, dtype=bool)
    for s in range(K + 1):
        if s:
            taken = np.repeat(taken, 2)
        hit = (means[s] > lam) & ~taken
        for m in np.nonzero(hit)[0]:
            intervals.append((s, int(m)))
            dens.append(float(means[s][m]))
            parents.append(float(means[s - 1][m >> 1]) if s else None)
        taken = taken | hit
    order = np.argsort([m << (K - s) for s, m in intervals], kind="stable")
    pick = lambda xs: [xs[i] for i in order]  # noqa: E731
    cover = ExceptionalCover(lam, K, pick(intervals), pick(dens), pick(parents))
    # anything dominated by F lives inside the cover once lam < 1
    if np.any((F.values > 0) & ~cover.mask()):
        raise AssertionError("F is not contained in the exceptional set")
    return cover


# --- local tile families ------------------------------------------------------

def tail_drop(alpha: float) -> int:
    """Number of leading local frequencies discarded: ``1 + [2 / (alpha - 1)]``."""
    if alpha <= 1:
        raise ValueError("lacunarity constant must exceed 1")
    return 1 + math.floor(2 / (alpha - 1))


@dataclass
class LocalProjection:
    interval: tuple                 # (scale, index)
    K: int
    mu: np.ndarray                  # local frequency indices of Q_I, increasing
    structure_ok: bool
    dropped: int = 0
    tail_ratio: float = math.inf
    coefficients: np.ndarray | None = None
    phi: DyadicFunction | None = None

    @property
    def tiles(self) -> list:
        s, m = self.interval
        return [Tile(s, m, int(q)) for q in self.mu]

    def tail_ok(self, alpha: float) -> bool:
        return self.tail_ratio >= (alpha + 1) / 2 * (1 - 1e-12)

    def phi_norm(self) -> float:
        return float(np.sqrt(np.sum(np.square(self.coefficients)))) if self.coefficients is not None else 0.0


def collect_local_tiles(interval, P: TileCollection, alpha: float | None = None) -> LocalProjection:
    """``Q_I``: tiles with time interval ``I`` meeting the lower half of some member of ``P``."""
    sI, mI = interval
    K = P.K
    qs = set()
    structure_ok = True
    for s, mask in enumerate(P.masks):
        if s <= sI:
            # I inside I_P: the unique tile over I whose frequency contains omega_Pl
            rows = mI >> (sI - s)
            for n in np.nonzero(mask[rows])[0]:
                n = int(n)
                q = (2 * n) >> (sI - s)
                qs.add(q)
                if s < sI:
                    Pb = BiTile(s, rows, n)
                    p = Tile(sI, mI, q)
                    structure_ok &= bitile_less(p, Pb.lower, strict=True) and bitile_less(p, Pb.upper)
        else:
            # I_P inside I: every tile over I inside omega_Pl
            d = s - sI
            sub = mask[mI << d:(mI + 1) << d]
            for n in np.nonzero(sub.any(axis=0))[0]:
                base = (2 * int(n)) << d
                qs.update(range(base, base + (1 << d)))
    mu = np.array(sorted(qs), dtype=np.int64)
    lp = LocalProjection((sI, mI), K, mu, bool(structure_ok))
    if alpha is not None:
        lp.dropped = tail_drop(alpha)
        tail = mu[lp.dropped:]
        if tail.size >= 2:
            lp.tail_ratio = float(np.min(tail[1:] / tail[:-1]))
    return lp


def local_projection(f: DyadicFunction, lp: LocalProjection, table: CoefficientTable | None = None) -> LocalProjection:
    """Fill in ``phi_I = sum_p <f, w_p> w_p`` (supported on ``I``)."""
    table = table or CoefficientTable(f)
    sI, mI = lp.interval
    K = f.K
    row = table[sI][mI]
    lp.coefficients = row[lp.mu] if lp.mu.size else np.zeros(0)
    local = np.zeros(row.shape)
    # table rows carry the 2^(-s/2) packet normalization; undo it for the cell values
    local[lp.mu] = row[lp.mu] * 2.0 ** (sI / 2)
    vals = np.zeros(1 << K)
    w = 1 << (K - sI)
    vals[mI * w:(mI + 1) * w] = inverse_paley_transform(local)
    lp.phi = DyadicFunction(K, vals)
    return lp


@dataclass
class MultiFreqProjection:
    phi: DyadicFunction
    locals: list
    max_cancellation: float
    form_f: float | None = None
    form_phi: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def form_diff(self) -> float:
        if self.form_f is None:
            return 0.0
        return abs(self.form_f - self.form_phi)

    def ok(self, tol_cancel: float = 1e-10, tol_form: float = 1e-9) -> bool:
        return self.max_cancellation <= tol_cancel and self.form_diff <= tol_form


def multifreq_project(f: DyadicFunction, cover: ExceptionalCover, P: TileCollection,
                      g: DyadicFunction | None = None, N: ChoiceFunction | None = None,
                      alpha: float | None = None) -> MultiFreqProjection:
    """``phi = sum_I phi_I`` with the cancellation and form checks."""
    K = f.K
    if np.any((f.values != 0) & ~cover.mask()):
        raise ValueError("f is not supported in the exceptional intervals")
    table = CoefficientTable(f)
    phi_vals = np.zeros(1 << K)
    locals_, worst = [], 0.0
    for I in cover.intervals:
        lp = local_projection(f, collect_local_tiles(I, P, alpha), table)
        locals_.append(lp)
        phi_vals += lp.phi.values
        s, m = I
        w = 1 << (K - s)
        h = np.zeros(1 << K)
        h[m * w:(m + 1) * w] = f.values[m * w:(m + 1) * w] - lp.phi.values[m * w:(m + 1) * w]
        ht = CoefficientTable(DyadicFunction(K, h))
        for t, mask in enumerate(P.masks):
            if mask.any():
                worst = max(worst, float(np.abs(ht.lower(t)[mask]).max()))
    phi = DyadicFunction(K, phi_vals)
    out = MultiFreqProjection(phi, locals_, worst)
    if g is not None:
        if N is None:
            raise ValueError("the form check needs a choice function")
        tf = bilinear_terms(table, g, N)
        tp = bilinear_terms(CoefficientTable(phi), g, N)
        out.form_f = float(sum(a[mk].sum() for a, mk in zip(tf, P.masks)))
        out.form_phi = float(sum(a[mk].sum() for a, mk in zip(tp, P.masks)))
    return out


# --- Zygmund and Khintchine -------------------------------------------------------

def zygmund_ratio(f: DyadicFunction, seq: LacunarySequence) -> float:
    """``||(f^(n_j))_j||_2 / ||f||_{L (log L)^(1/2)}``."""
    seq.check_resolution(f.K)
    rhs = luxembourg_norm(f, "L_logL_half")
    if rhs == 0:
        raise ValueError("f must be nonzero")
    coeffs = walsh_transform(f)[seq.as_array()]
    return float(np.sqrt(np.sum(coeffs ** 2)) / rhs)


def lacunary_polynomial(a, seq: LacunarySequence, K: int | None = None) -> DyadicFunction:
    """``sum_j a_j W_(n_j)`` on the coarsest grid holding every frequency."""
    a = np.asarray(a, dtype=float)
    if a.size != len(seq):
        raise ValueError("one coefficient per sequence term")
    if K is None:
        K = max(1, int(seq.max_term).bit_length())
    seq.check_resolution(K)
    c = np.zeros(1 << K)
    c[seq.as_array()] = a
    from .dyadic import inverse_walsh_transform

    return inverse_walsh_transform(c, K)


def khintchine_ratio(a, seq: LacunarySequence, p: int, K: int | None = None) -> float:
    """``||sum_j a_j W_(n_j)||_p / (sqrt(p) ||a||_2)`` for even ``p``."""
    if p not in (2, 4, 6, 8, 10):
        raise ValueError("p must be one of 2, 4, 6, 8, 10")
    a = np.asarray(a, dtype=float)
    norm = float(np.linalg.norm(a))
    if norm == 0:
        raise ValueError("coefficients must be nonzero")
    h = lacunary_polynomial(a, seq, K)
    return h.lp(p) / (math.sqrt(p) * norm)


def khintchine_exp_ratio(a, seq: LacunarySequence, K: int | None = None) -> float:
    """``||sum_j a_j W_(n_j)||_{exp(L^2)} / ||a||_2``."""
    a = np.asarray(a, dtype=float)
    norm = float(np.linalg.norm(a))
    if norm == 0:
        raise ValueError("coefficients must be nonzero")
    return luxembourg_norm(lacunary_polynomial(a, seq, K), "exp_L2") / norm


# --- L^2 control of phi -------------------------------------------------------------

def phi_l2_chain(F: DyadicFunction, cover: ExceptionalCover, proj: MultiFreqProjection,
                 G_measure: float | None = None, C_phi: float = 16.0) -> dict:
    """Per-interval ``||phi_I||_2`` and total ``||phi||_2`` against their bounds."""
    lam = cover.lam
    Fm = F.measure()
    if G_measure is None:
        G_measure = LAMBDA_FACTOR * Fm / lam
    lp = math.sqrt(float(log_plus(1 / lam)))
    rows = []
    for (s, m), loc in zip(cover.intervals, proj.locals):
        L = 2.0 ** -s
        nrm = loc.phi_norm()
        bound = lam * lp * math.sqrt(L)
        rows.append({"interval": f"{s}:{m}", "length": L, "tiles": int(loc.mu.size),
                     "tail_ratio": loc.tail_ratio, "phi_norm": nrm, "bound": bound,
                     "ratio": nrm / bound})
    total = proj.phi.l2()
    total_bound = Fm / math.sqrt(G_measure) * lp if Fm > 0 else 0.0
    total_ratio = total / total_bound if total_bound > 0 else 0.0
    worst = max([r["ratio"] for r in rows] + [total_ratio])
    return {"rows": rows, "phi_norm": total, "phi_bound": total_bound, "total_ratio": total_ratio,
            "max_ratio": worst, "C_phi": C_phi, "holds": worst <= C_phi}


def k0(lam: float, C_k: float = 8.0) -> int:
    """``k0 = C_k loglog_+(1 / lambda)``, rounded up."""
    return math.ceil(C_k * float(loglog_plus(1 / lam)))


def k0_tail(lam: float, F_measure: float, C_k: float = 8.0) -> dict:
    """Sum of ``2^(-k/2) |F| (log_+ 1/lambda)^(1/2)`` over ``k > k0``."""
    k_start = k0(lam, C_k) + 1
    tail = F_measure * math.sqrt(float(log_plus(1 / lam))) * 2.0 ** (-k_start / 2) / (1 - 2 ** -0.5)
    return {"k0": k_start - 1, "tail": tail, "F_measure": F_measure, "holds": tail <= F_measure}
