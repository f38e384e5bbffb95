"""Compiled sampling loop.

One call runs a complete sequential experiment on one instance: initial
replications, then one decision and one recorded observation per step, with
snapshots at checkpoint budgets. The decision rules mirror the numpy
reference in ``mpb.rates`` / ``mpb.samplers`` operation for operation, so
both paths consume the random stream identically.

Rates are computed from counts instead of fractions; decisions only depend
on ratios so the common factor ``1/n`` is dropped.
"""
import numpy as np
from numba import njit

EA, COCBA, ALG1, ALG2, ALG3, ALG4 = 0, 1, 2, 3, 4, 5
W_STANDARD, W_ACC, W_FN, W_UNIT = 0, 1, 2, 3
MODE_KNOWN, MODE_NG = 0, 1
NOISE_SHIFTED_EXP = 2

PROB_TOL = 1e-12
VARIANCE_FLOOR = 1e-12

_jit = njit(cache=True, error_model="numpy", nogil=True)


@_jit
def rate(delta, var_i, var_ref, n_i, n_ref):
    if n_i <= 0 or n_ref <= 0:
        return 0.0
    return delta * delta / (2.0 * (var_i / n_i + var_ref / n_ref))


@_jit
def estimate(mu, var, cnt, probs, cond_opt, pref, G, mpb_fixed):
    """Fill cond_opt, pref and G; return (mpb, size of tie set)."""
    k, B = mu.shape
    for i in range(k):
        pref[i] = 0.0
    for b in range(B):
        r = 0
        best = mu[0, b]
        for i in range(1, k):
            if mu[i, b] < best:
                best = mu[i, b]
                r = i
        cond_opt[b] = r
        pref[r] += probs[b]
        for i in range(k):
            G[i, b] = rate(mu[i, b] - best, var[i, b], var[r, b], cnt[i, b], cnt[r, b])
    top = pref[0]
    for i in range(1, k):
        if pref[i] > top:
            top = pref[i]
    ntie = 0
    first = -1
    for i in range(k):
        if pref[i] >= top - PROB_TOL:
            ntie += 1
            if first < 0:
                first = i
    if mpb_fixed >= 0:
        return mpb_fixed, ntie
    if ntie == 1:
        return first, 1
    win = -1
    win_score = -np.inf
    for j in range(k):
        if pref[j] < top - PROB_TOL:
            continue
        score = np.inf
        for b in range(B):
            if cond_opt[b] != j and G[j, b] < score:
                score = G[j, b]
        if win < 0 or score > win_score:
            win = j
            win_score = score
    return win, ntie


@_jit
def weight(variant, i, r, mpb, fav_b, gap_i, d_min, p):
    """Balance weight of pair (i, b); negative means excluded."""
    if i == r:
        return -1.0
    if i == mpb:
        if variant == W_STANDARD:
            return -1.0
        return 1.0
    if variant == W_UNIT:
        return 1.0
    if variant == W_ACC and fav_b:
        return 1.0
    if p == 0.0:
        return np.inf
    if fav_b:
        w = min(d_min, gap_i / 2) / p
    else:
        w = gap_i / p
    if w < 1.0:
        w = 1.0
    return w


@_jit
def pick(variant, exclude_mpb, cond_opt, pref, mpb, probs, G, cnt, var, gaps):
    """Weighted-rate argmin followed by the global balance check."""
    k, B = G.shape
    for i in range(k):
        gaps[i] = pref[mpb] - pref[i]
    d_min = np.inf
    for j in range(k):
        if j != mpb and gaps[j] < d_min:
            d_min = gaps[j]
    bi = -1
    bb = -1
    best = np.inf
    for b in range(B):
        r = cond_opt[b]
        fav_b = r == mpb
        for i in range(k):
            w = weight(variant, i, r, mpb, fav_b, gaps[i], d_min, probs[b])
            if w < 0.0:
                continue
            prod = w * G[i, b]
            if prod != prod:
                prod = np.inf
            if bi < 0 or prod < best:
                best = prod
                bi = i
                bb = b
    if bi < 0:
        return -1, -1
    r = cond_opt[bb]
    lhs = cnt[r, bb] * cnt[r, bb] / var[r, bb]
    rhs = 0.0
    for j in range(k):
        if j == r or (exclude_mpb and j == mpb):
            continue
        rhs += cnt[j, bb] * cnt[j, bb] / var[j, bb]
    if lhs - rhs < 0.0:
        return r, bb
    return bi, bb


@_jit
def decide(kind, mu, var, cnt, probs, rng, cond_opt, pref, G, gaps, mu_buf):
    k, B = mu.shape
    if kind == EA:
        lo = cnt[0, 0]
        bi = 0
        bb = 0
        for b in range(B):
            for i in range(k):
                if cnt[i, b] < lo:
                    lo = cnt[i, b]
                    bi = i
                    bb = b
        return bi, bb
    mpb, ntie = estimate(mu, var, cnt, probs, cond_opt, pref, G, -1)
    if kind == ALG2:
        for b in range(B):
            for i in range(k):
                mu_buf[i, b] = mu[i, b]
        for b in range(B):
            if cond_opt[b] != mpb:
                sd = np.sqrt(var[mpb, b] / cnt[mpb, b])
                mu_buf[mpb, b] = rng.normal(mu[mpb, b], sd)
        estimate(mu_buf, var, cnt, probs, cond_opt, pref, G, mpb)
    if kind == ALG1 or kind == ALG2:
        i, b = pick(W_STANDARD, True, cond_opt, pref, mpb, probs, G, cnt, var, gaps)
        if i < 0:
            i, b = pick(W_FN, True, cond_opt, pref, mpb, probs, G, cnt, var, gaps)
        return i, b
    if kind == ALG3:
        return pick(W_ACC, False, cond_opt, pref, mpb, probs, G, cnt, var, gaps)
    if kind == ALG4:
        return pick(W_FN, False, cond_opt, pref, mpb, probs, G, cnt, var, gaps)
    return pick(W_UNIT, False, cond_opt, pref, mpb, probs, G, cnt, var, gaps)


@_jit
def draw(mean, lam, noise, c, rng):
    s = 0.0
    for _ in range(c):
        if noise == NOISE_SHIFTED_EXP:
            s += mean - lam + rng.exponential(lam)
        else:
            s += rng.normal(mean, lam)
    if c == 1:
        return s
    return s / c


@_jit
def update(i, b, y, mode, cnt, mu, m2, var):
    n = cnt[i, b] + 1
    d = y - mu[i, b]
    m = mu[i, b] + d / n
    m2[i, b] += d * (y - m)
    mu[i, b] = m
    cnt[i, b] = n
    if mode == MODE_NG:
        v = m2[i, b] / n
        var[i, b] = v if v > VARIANCE_FLOOR else VARIANCE_FLOOR


@_jit
def snapshot(c, mu, var, cnt, probs, cond_opt, pref, G, ck_mpb, ck_tie, ck_fav, ck_counts):
    k, B = mu.shape
    mpb, ntie = estimate(mu, var, cnt, probs, cond_opt, pref, G, -1)
    ck_mpb[c] = mpb
    ck_tie[c] = ntie > 1
    for b in range(B):
        ck_fav[c, b] = cond_opt[b] == mpb
        for i in range(k):
            ck_counts[c, i, b] = cnt[i, b]


@_jit
def run(kind, probs, true_mu, lam, noise, mode, c, n0, N, ckpts, rng,
        cnt, mu, m2, var, ck_mpb, ck_tie, ck_fav, ck_counts):
    """Full sequential run; ``var`` must hold known variances in known mode."""
    k, B = true_mu.shape
    cond_opt = np.empty(B, dtype=np.int64)
    pref = np.empty(k)
    G = np.empty((k, B))
    gaps = np.empty(k)
    mu_buf = np.empty((k, B))
    for b in range(B):
        for i in range(k):
            for _ in range(n0):
                y = draw(true_mu[i, b], lam[i, b], noise[i, b], c, rng)
                update(i, b, y, mode, cnt, mu, m2, var)
    n = n0 * k * B
    nck = ckpts.shape[0]
    ci = 0
    while ci < nck and ckpts[ci] <= n:
        if ckpts[ci] == n:
            snapshot(ci, mu, var, cnt, probs, cond_opt, pref, G, ck_mpb, ck_tie, ck_fav, ck_counts)
        ci += 1
    while n < N:
        i, b = decide(kind, mu, var, cnt, probs, rng, cond_opt, pref, G, gaps, mu_buf)
        y = draw(true_mu[i, b], lam[i, b], noise[i, b], c, rng)
        update(i, b, y, mode, cnt, mu, m2, var)
        n += 1
        while ci < nck and ckpts[ci] == n:
            snapshot(ci, mu, var, cnt, probs, cond_opt, pref, G, ck_mpb, ck_tie, ck_fav, ck_counts)
            ci += 1
