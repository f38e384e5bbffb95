"""Rate functions, plug-in truth estimates and balance weights.

Everything here is plain numpy and written for clarity; the compiled sampler
kernels in ``mpb._kernels`` implement the same rules and are cross-checked
against these functions in the test suite.
"""
from __future__ import annotations

import enum
import io
from dataclasses import dataclass

import numpy as np

from .learning import LearningState
from .problem import PROB_TOL


class WeightVariant(enum.IntEnum):
    STANDARD = 0
    ACC = 1
    FN = 2
    UNIT = 3

    @classmethod
    def parse(cls, value) -> "WeightVariant":
        if isinstance(value, cls):
            return value
        try:
            return cls[str(value).strip().upper()]
        except KeyError:
            raise ValueError(f"unknown weight variant {value!r}") from None


class AllExcluded(ValueError):
    """Every entry of a weight matrix is excluded."""


def rate_G(delta, var_i, var_ref, alpha_i, alpha_ref):
    """Pairwise large-deviation rate of a Gaussian comparison.

    Works elementwise on arrays. Returns 0 wherever either allocation is 0.
    """
    delta, var_i, var_ref, alpha_i, alpha_ref = np.broadcast_arrays(
        *(np.asarray(x, dtype=float) for x in (delta, var_i, var_ref, alpha_i, alpha_ref))
    )
    live = (alpha_i > 0) & (alpha_ref > 0)
    out = np.zeros(delta.shape)
    denom = 2.0 * (var_i[live] / alpha_i[live] + var_ref[live] / alpha_ref[live])
    out[live] = delta[live] ** 2 / denom
    return out[()] if out.ndim == 0 else out


def rate_matrix(means, variances, alloc, cond_opt) -> np.ndarray:
    """k x B matrix of rates of each solution against its column's conditional optimum."""
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    alloc = np.asarray(alloc, dtype=float)
    cols = np.arange(means.shape[1])
    ref_mean = means[cond_opt, cols]
    ref_var = variances[cond_opt, cols]
    ref_alloc = alloc[cond_opt, cols]
    return rate_G(means - ref_mean, variances, ref_var, alloc, ref_alloc)


@dataclass(frozen=True, eq=False)
class EstimatedTruth:
    cond_opt_hat: np.ndarray
    mpb_hat: int
    tie_set: frozenset
    fav_set_hat: frozenset
    pref_hat: np.ndarray
    gaps_hat: np.ndarray
    xi_hat: frozenset
    xi_adv_hat: frozenset
    G: np.ndarray

    @property
    def tied(self) -> bool:
        return len(self.tie_set) > 1

    @property
    def fav_mask(self) -> np.ndarray:
        return self.cond_opt_hat == self.mpb_hat


def preference(cond_opt, probs, k: int) -> np.ndarray:
    return np.bincount(np.asarray(cond_opt), weights=np.asarray(probs, dtype=float), minlength=k)


def tie_break(tie_set, cond_opt, G) -> int:
    """Among tied candidates pick the one whose weakest pairwise rate is largest."""
    best, best_score = None, -np.inf
    for j in sorted(tie_set):
        others = cond_opt != j
        score = G[j, others].min() if others.any() else np.inf
        if best is None or score > best_score:
            best, best_score = j, score
    return int(best)


def estimate_from_arrays(means, variances, alloc, probs, mpb=None) -> EstimatedTruth:
    """Plug-in truth from posterior means.

    ``alloc`` may be counts or fractions; only ratios matter for decisions.
    If ``mpb`` is given it is kept fixed instead of being re-estimated.
    """
    means = np.asarray(means, dtype=float)
    probs = np.asarray(probs, dtype=float)
    k, B = means.shape
    cond_opt = np.argmin(means, axis=0)
    pref = preference(cond_opt, probs, k)
    G = rate_matrix(means, variances, alloc, cond_opt)
    tie_set = frozenset(np.flatnonzero(pref >= pref.max() - PROB_TOL).tolist())
    if mpb is None:
        mpb = tie_break(tie_set, cond_opt, G) if len(tie_set) > 1 else min(tie_set)
    mpb = int(mpb)
    gaps = pref[mpb] - pref
    fav = frozenset(np.flatnonzero(cond_opt == mpb).tolist())
    xi = frozenset((i, b) for b in range(B) for i in range(k) if i != cond_opt[b] and i != mpb)
    xi_adv = frozenset((mpb, b) for b in range(B) if b not in fav)
    return EstimatedTruth(cond_opt, mpb, tie_set, fav, pref, gaps, xi, xi_adv, G)


def estimate_truth(learning: LearningState, probs, mpb=None) -> EstimatedTruth:
    """Plug-in truth from a learning state; G uses allocation fractions N/n."""
    if not learning.ready():
        raise ValueError("every pair needs observations before estimating truth")
    alloc = learning.counts / learning.counts.sum()
    return estimate_from_arrays(learning.means, learning.variance_matrix(), alloc, probs, mpb)


# --- balance weights ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class WeightMatrix:
    """Balance weights with an explicit exclusion mask.

    ``values`` is only meaningful where ``excluded`` is False.
    """

    values: np.ndarray
    excluded: np.ndarray

    def as_float(self) -> np.ndarray:
        """Weights with excluded entries mapped to +inf."""
        return np.where(self.excluded, np.inf, self.values)

    def to_csv(self) -> str:
        buf = io.StringIO()
        for row in self.as_float():
            buf.write(",".join("inf" if np.isinf(x) else repr(float(x)) for x in row))
            buf.write("\n")
        return buf.getvalue()


def balance_weights(cond_opt, mpb: int, gaps, probs, variant=WeightVariant.STANDARD) -> WeightMatrix:
    """Weight matrix of the requested variant for a (true or estimated) truth.

    Standard weights are finite on pairs that are neither the column's
    optimum nor the MPB. The other variants also cover the MPB at
    parameters where it is not optimal.
    """
    variant = WeightVariant.parse(variant)
    cond_opt = np.asarray(cond_opt)
    gaps = np.asarray(gaps, dtype=float)
    probs = np.asarray(probs, dtype=float)
    k, B = len(gaps), len(cond_opt)
    rows = np.arange(k)[:, None]
    fav = (cond_opt == mpb)[None, :]
    is_opt = rows == cond_opt[None, :]
    is_mpb = np.broadcast_to(rows == mpb, (k, B))
    in_xi = ~is_opt & ~is_mpb
    in_adv = ~is_opt & is_mpb

    d_min = np.delete(gaps, mpb).min()
    with np.errstate(divide="ignore", invalid="ignore"):
        w_fav = np.minimum(d_min, gaps[:, None] / 2) / probs[None, :]
        w_adv = gaps[:, None] / probs[None, :]
    w_fav = np.where(np.isnan(w_fav), np.inf, w_fav)
    w_adv = np.where(np.isnan(w_adv), np.inf, w_adv)
    w = np.maximum(np.where(fav, w_fav, w_adv), 1.0)

    if variant is WeightVariant.STANDARD:
        return WeightMatrix(np.where(in_xi, w, 0.0), ~in_xi)
    eligible = in_xi | in_adv
    if variant is WeightVariant.ACC:
        vals = np.where(fav | is_mpb, 1.0, w)
    elif variant is WeightVariant.FN:
        vals = np.where(in_xi, w, 1.0)
    else:
        vals = np.ones((k, B))
    return WeightMatrix(np.where(eligible, vals, 0.0), ~eligible)


def weights_standard(est: EstimatedTruth, probs) -> WeightMatrix:
    return balance_weights(est.cond_opt_hat, est.mpb_hat, est.gaps_hat, probs, WeightVariant.STANDARD)


def weights_acc(est: EstimatedTruth, probs) -> WeightMatrix:
    return balance_weights(est.cond_opt_hat, est.mpb_hat, est.gaps_hat, probs, WeightVariant.ACC)


def weights_fn(est: EstimatedTruth, probs) -> WeightMatrix:
    return balance_weights(est.cond_opt_hat, est.mpb_hat, est.gaps_hat, probs, WeightVariant.FN)


def weights_unit(est: EstimatedTruth, probs) -> WeightMatrix:
    return balance_weights(est.cond_opt_hat, est.mpb_hat, est.gaps_hat, probs, WeightVariant.UNIT)


def argmin_weighted_rate(W: WeightMatrix, G) -> tuple[int, int]:
    """Eligible pair minimizing W*G; ties go to the smallest (b, i)."""
    G = np.asarray(G, dtype=float)
    if W.excluded.all():
        raise AllExcluded("no eligible pair")
    with np.errstate(invalid="ignore"):
        prod = W.values * G
    prod = np.where(np.isnan(prod), np.inf, prod)
    prod = np.where(W.excluded, np.nan, prod)
    # transpose so that the flat index runs b-major, i-minor
    flat = prod.T.ravel()
    best = np.nanmin(flat)
    idx = int(np.flatnonzero(flat == best)[0])
    b, i = divmod(idx, prod.shape[0])
    return i, b


def global_balance_gap(counts, variances, b: int, ref: int, mpb: int, exclude_mpb: bool) -> float:
    """Squared count-to-sd ratio of the column optimum minus that of its competitors.

    A negative value means the conditional optimum ``ref`` at column ``b``
    is under-sampled.
    """
    counts = np.asarray(counts, dtype=float)[:, b]
    variances = np.asarray(variances, dtype=float)[:, b]
    terms = counts**2 / variances
    rhs = 0.0
    # plain left-to-right sum keeps rounding identical to the compiled path
    for j, t in enumerate(terms):
        if j == ref or (exclude_mpb and j == mpb):
            continue
        rhs += t
    return float(terms[ref] - rhs)
