"""Desk-scale checks of the static allocation theory.

Mappings are stored compactly as assignment vectors ``a`` of length B,
``a[b]`` being the solution labelled optimal at parameter ``b``; the
equivalent 0/1 matrix has a single one per column.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .problem import PROB_TOL, ProblemInstance, TruthSummary, derive_truth
from .rates import WeightVariant, balance_weights, rate_matrix

ENUMERATION_CAP = 1_000_000
_CHUNK = 1 << 16


class EnumerationTooLarge(ValueError):
    pass


class NonConvergence(RuntimeError):
    def __init__(self, message, alloc, report):
        super().__init__(message)
        self.alloc = alloc
        self.report = report


# --- mappings -------------------------------------------------------------------


def mapping_to_matrix(assign, k: int) -> np.ndarray:
    assign = np.asarray(assign)
    M = np.zeros((k, len(assign)), dtype=np.int8)
    M[assign, np.arange(len(assign))] = 1
    return M


def matrix_to_mapping(M) -> np.ndarray:
    M = np.asarray(M)
    if M.ndim != 2 or not np.all((M == 0) | (M == 1)) or not np.all(M.sum(axis=0) == 1):
        raise ValueError("a mapping matrix needs exactly one 1 per column")
    return np.argmax(M, axis=0)


def _as_assign(M):
    M = np.asarray(M)
    return matrix_to_mapping(M) if M.ndim == 2 else M.astype(np.int64)


def d_of_mapping(truth: TruthSummary, probs, M, j: int) -> float:
    """Preference gap of ``j`` against the true MPB when the optima are relabelled by ``M``."""
    if j == truth.mpb:
        raise ValueError("j must differ from the MPB")
    a = _as_assign(M)
    probs = np.asarray(probs, dtype=float)
    return float(probs[a == truth.mpb].sum() - probs[a == j].sum())


def misspecified(truth: TruthSummary, M) -> frozenset:
    """Pairs (i, b) that ``M`` labels optimal although they are not."""
    a = _as_assign(M)
    return frozenset((int(a[b]), b) for b in range(len(a)) if a[b] != truth.cond_opt[b])


def _assignments(k: int, B: int):
    total = k**B
    if total > ENUMERATION_CAP:
        raise EnumerationTooLarge(f"{k}^{B} = {total} mappings exceeds the cap {ENUMERATION_CAP}")
    powers = k ** np.arange(B)
    for start in range(0, total, _CHUNK):
        codes = np.arange(start, min(start + _CHUNK, total))
        yield (codes[:, None] // powers[None, :]) % k


def _enumerate_min(truth, probs, G, feasible):
    probs = np.asarray(probs, dtype=float)
    G = np.asarray(G, dtype=float)
    k, B = G.shape
    cols = np.arange(B)
    best = np.inf
    for a in _assignments(k, B):
        wrong = a != truth.cond_opt[None, :]
        cost = np.where(wrong, G[a, cols[None, :]], 0.0).sum(axis=1)
        ok = feasible(a, wrong)
        if ok.any():
            best = min(best, float(cost[ok].min()))
    return best


def exact_ldr_j(truth: TruthSummary, probs, G, j: int) -> float:
    """Cheapest total rate over all mappings under which ``j`` is at least as preferred as the MPB."""
    if not truth.unique:
        raise ValueError("exact rates need a unique truth")
    if j == truth.mpb:
        raise ValueError("j must differ from the MPB")
    probs = np.asarray(probs, dtype=float)
    mpb = truth.mpb

    def feasible(a, wrong):
        d = (probs * (a == mpb)).sum(axis=1) - (probs * (a == j)).sum(axis=1)
        return d <= PROB_TOL

    return _enumerate_min(truth, probs, G, feasible)


def knapsack_vectors(truth: TruthSummary, probs, j: int):
    """Knapsack data for competitor ``j``.

    Returns ``(pairs, v, d_j)``: the pairs of Xi and Xi^adv ordered by (b, i),
    the clipped contribution of relabelling each pair, and the true gap.
    """
    if j == truth.mpb:
        raise ValueError("j must differ from the MPB")
    probs = np.asarray(probs, dtype=float)
    v_full = _v_plus(truth, probs, j)
    k, B = v_full.shape
    pairs = [(i, b) for b in range(B) for i in range(k) if i != truth.cond_opt[b]]
    v = np.array([v_full[i, b] for i, b in pairs])
    return pairs, v, float(truth.gaps[j])


def _v_plus(truth, probs, j):
    k, B = len(truth.pref_probs), len(truth.cond_opt)
    rows = np.arange(k)[:, None]
    ib = truth.cond_opt[None, :]
    mpb = truth.mpb
    v = probs[None, :] * (
        (rows == j).astype(float) - (ib == j) - (rows == mpb) + (ib == mpb)
    )
    return np.maximum(v, 0.0)


def relaxed_ldr_j(truth: TruthSummary, probs, G, j: int) -> float:
    """Like :func:`exact_ldr_j` but with the linear knapsack constraint on clipped contributions."""
    probs = np.asarray(probs, dtype=float)
    v = _v_plus(truth, probs, j)
    d = float(truth.gaps[j])
    cols = np.arange(len(probs))

    def feasible(a, wrong):
        gain = np.where(wrong, v[a, cols[None, :]], 0.0).sum(axis=1)
        return d - gain <= PROB_TOL

    return _enumerate_min(truth, probs, G, feasible)


def lower_bound_ldr(truth: TruthSummary, probs, G) -> float:
    """Smallest weighted rate over Xi with weights from the true quantities."""
    W = balance_weights(truth.cond_opt, truth.mpb, truth.gaps, probs, WeightVariant.STANDARD)
    G = np.asarray(G, dtype=float)
    vals = W.values[~W.excluded] * G[~W.excluded]
    return float(vals.min()) if vals.size else np.inf


# --- static allocations ---------------------------------------------------------


def validate_allocation(alpha, shape=None, tol: float = 1e-9) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if shape is not None and alpha.shape != tuple(shape):
        raise ValueError(f"allocation has shape {alpha.shape}, expected {tuple(shape)}")
    if not np.all(np.isfinite(alpha)) or np.any(alpha < 0):
        raise ValueError("allocation entries must be finite and nonnegative")
    if abs(alpha.sum() - 1.0) > tol:
        raise ValueError(f"allocation sums to {alpha.sum()!r}, not 1")
    return alpha


@dataclass(frozen=True)
class ResidualReport:
    global_balance: float
    pairwise_balance: float
    adversarial_mass: float
    objective: float

    def max_residual(self) -> float:
        return max(self.global_balance, self.pairwise_balance, self.adversarial_mass)

    def ok(self, tol: float) -> bool:
        return self.max_residual() <= tol


def _eligible(truth, probs, variant):
    W = balance_weights(truth.cond_opt, truth.mpb, truth.gaps, probs, variant)
    ok = ~W.excluded & np.isfinite(W.values)
    return W.values, ok


def weighted_rates(alpha, instance: ProblemInstance, variant, truth: TruthSummary | None = None):
    """(W*G, eligible mask) at a static allocation with true means and variances."""
    truth = derive_truth(instance) if truth is None else truth
    variant = WeightVariant.parse(variant)
    W, ok = _eligible(truth, instance.probs, variant)
    G = rate_matrix(instance.means, instance.variances, alpha, truth.cond_opt)
    return np.where(ok, W * G, np.inf), ok


def objective(alpha, instance: ProblemInstance, variant, truth: TruthSummary | None = None) -> float:
    wg, ok = weighted_rates(alpha, instance, variant, truth)
    return float(wg[ok].min()) if ok.any() else np.inf


def check_optimality(alpha, instance: ProblemInstance, variant, truth: TruthSummary | None = None) -> ResidualReport:
    """Residuals of the balance conditions at a static allocation.

    global_balance: worst column of |lhs - rhs| / rhs, lhs being the squared
        alpha/lambda ratio of the column optimum.
    pairwise_balance: max/min - 1 over eligible weighted rates.
    adversarial_mass: standard variant only, largest allocation to the MPB
        where it is not optimal.
    """
    truth = derive_truth(instance) if truth is None else truth
    variant = WeightVariant.parse(variant)
    alpha = validate_allocation(alpha, (instance.k, instance.B))
    lam2 = instance.variances
    k, B = alpha.shape
    g_res = 0.0
    for b in range(B):
        r = truth.cond_opt[b]
        lhs = alpha[r, b] ** 2 / lam2[r, b]
        rhs = 0.0
        for j in range(k):
            if j == r or (variant is WeightVariant.STANDARD and j == truth.mpb):
                continue
            rhs += alpha[j, b] ** 2 / lam2[j, b]
        if rhs > 0:
            g_res = max(g_res, abs(lhs - rhs) / rhs)
        elif lhs > 0:
            g_res = np.inf
    wg, ok = weighted_rates(alpha, instance, variant, truth)
    vals = wg[ok]
    if vals.size == 0:
        p_res, obj = 0.0, np.inf
    else:
        lo, hi = vals.min(), vals.max()
        p_res = 0.0 if hi == lo else (np.inf if lo == 0 else float(hi / lo - 1.0))
        obj = float(lo)
    adv = 0.0
    if variant is WeightVariant.STANDARD:
        mask = ~truth.mpb_favorable
        if mask.any():
            adv = float(alpha[truth.mpb, mask].max())
    return ResidualReport(float(g_res), float(p_res), adv, obj)


def _pinned(truth, variant, k, B):
    """Entries forced to zero: the MPB off its favorable set (standard variant only)."""
    pin = np.zeros((k, B), dtype=bool)
    if variant is WeightVariant.STANDARD:
        pin[truth.mpb, ~truth.mpb_favorable] = True
    return pin


def _column_kkt(a, lam2_e, lam2_r):
    """Column shape at unit weighted rate: returns (alpha_e, alpha_r)."""
    top = a.min()

    def h(t):
        return lam2_r / t**2 - np.sum(lam2_e / (a - t) ** 2)

    lo, hi = top * 1e-15, top * (1 - 1e-15)
    while h(lo) <= 0:
        lo *= 1e-3
    while h(hi) >= 0:
        hi = top - (top - hi) * 1e-3
        if hi >= top:
            break
    t = brentq(h, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return lam2_e / (a - t), lam2_r / t


def _solve_kkt(instance, truth, variant):
    k, B = instance.k, instance.B
    W, ok = _eligible(truth, instance.probs, variant)
    lam2 = instance.variances
    alpha = np.zeros((k, B))
    for b in range(B):
        e = np.flatnonzero(ok[:, b])
        if e.size == 0:
            continue
        r = truth.cond_opt[b]
        delta = instance.means[e, b] - instance.means[r, b]
        a = W[e, b] * delta**2 / 2.0
        if np.any(a <= 0):
            raise ValueError("tied means inside a column; the truth must be unique")
        alpha[e, b], alpha[r, b] = _column_kkt(a, lam2[e, b], lam2[r, b])
    total = alpha.sum()
    if total == 0:
        raise ValueError("no eligible pair; every allocation is optimal")
    return alpha / total


def _project_simplex(x):
    u = np.sort(x)[::-1]
    css = np.cumsum(u)
    idx = np.arange(1, len(u) + 1)
    rho = np.nonzero(u * idx > css - 1)[0][-1]
    theta = (css[rho] - 1) / (rho + 1.0)
    return np.maximum(x - theta, 0.0)


def _solve_subgradient(instance, truth, variant, max_iter, step, trace=None):
    k, B = instance.k, instance.B
    W, ok = _eligible(truth, instance.probs, variant)
    pin = _pinned(truth, variant, k, B)
    dead = ~ok.any(axis=0)
    pin[:, dead] = True
    free = ~pin
    lam2 = instance.variances
    cols = np.arange(B)
    ref = truth.cond_opt
    delta2 = (instance.means - instance.means[ref, cols]) ** 2
    x = np.where(free, 1.0, 0.0)
    x /= x.sum()
    best_x, best_f = x.copy(), -np.inf
    for t in range(1, max_iter + 1):
        G = rate_matrix(instance.means, lam2, x, ref)
        wg = np.where(ok, W * G, np.inf)
        f = wg.min()
        if f > best_f:
            best_f, best_x = f, x.copy()
        if trace is not None:
            trace.append(best_f)
        i, b = np.unravel_index(np.argmin(wg), wg.shape)
        r = ref[b]
        g = np.zeros((k, B))
        if x[i, b] > 0 and x[r, b] > 0:
            coef = 2.0 * W[i, b] * G[i, b] ** 2 / delta2[i, b]
            g[i, b] = coef * lam2[i, b] / x[i, b] ** 2
            g[r, b] = coef * lam2[r, b] / x[r, b] ** 2
        else:
            g[i, b] = g[r, b] = 1.0
        g[~free] = 0.0
        norm = np.linalg.norm(g)
        if norm == 0:
            break
        y = x[free] + step / np.sqrt(t) * g[free] / norm
        x = np.zeros((k, B))
        x[free] = _project_simplex(y)
    return best_x


def solve_balance(instance: ProblemInstance, variant=WeightVariant.STANDARD, method: str = "kkt",
                  tol: float = 1e-4, max_iter: int = 100_000, step: float = 0.05,
                  raise_on_failure: bool = True):
    """Static allocation maximizing the smallest weighted rate.

    ``method="kkt"`` solves the balance equations column by column (a 1-D
    root find per column) and rescales; ``method="subgradient"`` runs
    projected subgradient ascent with step ``step/sqrt(t)``.

    Returns ``(alpha, report)``. Raises :class:`NonConvergence` when the
    residuals exceed ``tol`` unless ``raise_on_failure`` is False.
    """
    truth = derive_truth(instance)
    if not truth.unique:
        raise ValueError("the truth must be unique")
    variant = WeightVariant.parse(variant)
    if variant is WeightVariant.UNIT:
        raise ValueError("unit weights have no static program here")
    if method == "kkt":
        alpha = _solve_kkt(instance, truth, variant)
    elif method == "subgradient":
        alpha = _solve_subgradient(instance, truth, variant, max_iter, step)
    else:
        raise ValueError(f"unknown method {method!r}")
    report = check_optimality(alpha, instance, variant, truth)
    if raise_on_failure and not report.ok(tol):
        raise NonConvergence(f"residual {report.max_residual():.3g} above {tol:g}", alpha, report)
    return alpha, report


def subgradient_history(instance: ProblemInstance, variant=WeightVariant.STANDARD, max_iter: int = 2000,
                        step: float = 0.05) -> np.ndarray:
    """Best-so-far objective per iteration of the subgradient method."""
    truth = derive_truth(instance)
    hist: list = []
    _solve_subgradient(instance, truth, WeightVariant.parse(variant), max_iter, step, hist)
    return np.array(hist)
