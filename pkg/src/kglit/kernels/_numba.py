"""Numba-compiled versions of the kernels in ``_numpy``; same signatures and results."""

import math

import numpy as np
from numba import njit

JIT_OPTIONS = {"nogil": True, "cache": True}


@njit(**JIT_OPTIONS)
def scatter_add_rows(out, idx, vals):
    for k in range(idx.shape[0]):
        r = idx[k]
        for j in range(out.shape[1]):
            out[r, j] += vals[k, j]


@njit(**JIT_OPTIONS)
def filtered_ranks(scores, targets, excl_ptr, excl_idx):
    b, n = scores.shape
    ranks = np.empty(b, dtype=np.int64)
    skip = np.zeros(n, dtype=np.bool_)
    for i in range(b):
        t = targets[i]
        for k in range(excl_ptr[i], excl_ptr[i + 1]):
            skip[excl_idx[k]] = True
        ts = scores[i, t]
        greater = 0
        ties = 0
        for c in range(n):
            if c == t or skip[c]:
                continue
            v = scores[i, c]
            if v > ts:
                greater += 1
            elif v == ts:
                ties += 1
        for k in range(excl_ptr[i], excl_ptr[i + 1]):
            skip[excl_idx[k]] = False
        ranks[i] = 1 + greater + (ties + 1) // 2
    return ranks


@njit(**JIT_OPTIONS)
def pair_mlp_forward(p, q, w, bias):
    b, hdim = p.shape
    n = q.shape[0]
    out = np.empty((b, n))
    for i in range(b):
        for c in range(n):
            acc = 0.0
            for h in range(hdim):
                acc += math.tanh(p[i, h] + q[c, h]) * w[h]
            out[i, c] = acc + bias
    return out


@njit(**JIT_OPTIONS)
def pair_mlp_backward(p, q, w, dlogits):
    b, hdim = p.shape
    n = q.shape[0]
    dp = np.zeros_like(p)
    dq = np.zeros_like(q)
    dw = np.zeros_like(w)
    for i in range(b):
        for c in range(n):
            g = dlogits[i, c]
            if g == 0.0:
                continue
            for h in range(hdim):
                t = math.tanh(p[i, h] + q[c, h])
                dw[h] += g * t
                d = g * (1.0 - t * t) * w[h]
                dp[i, h] += d
                dq[c, h] += d
    return dp, dq, dw


@njit(**JIT_OPTIONS)
def rbf_forward(xa, x, centers, widths, weights, sign):
    b, a_dim = xa.shape
    n = x.shape[0]
    out = np.zeros((b, n))
    for i in range(b):
        for c in range(n):
            acc = 0.0
            for a in range(a_dim):
                d = sign * (xa[i, a] - x[c, a]) - centers[i, a]
                acc += weights[i, a] * math.exp(-(d * d) / (2.0 * widths[i, a] ** 2))
            out[i, c] = acc
    return out


@njit(**JIT_OPTIONS)
def rbf_weight_grad(xa, x, centers, widths, dlogits, sign):
    b, a_dim = xa.shape
    n = x.shape[0]
    out = np.zeros((b, a_dim))
    for i in range(b):
        for c in range(n):
            g = dlogits[i, c]
            for a in range(a_dim):
                d = sign * (xa[i, a] - x[c, a]) - centers[i, a]
                out[i, a] += g * math.exp(-(d * d) / (2.0 * widths[i, a] ** 2))
    return out


@njit(**JIT_OPTIONS)
def _is_known(known_keys, key):
    if known_keys.shape[0] == 0:
        return False
    pos = np.searchsorted(known_keys, key)
    return pos < known_keys.shape[0] and known_keys[pos] == key


@njit(**JIT_OPTIONS)
def corrupt(triples, n_ent, n_rel, known_keys, heads, first, second):
    m = triples.shape[0]
    out = np.empty((m, 3), dtype=np.int64)
    flagged = np.zeros(m, dtype=np.bool_)
    for i in range(m):
        s, p, o = triples[i, 0], triples[i, 1], triples[i, 2]
        orig = s if heads[i] else o
        ent = first[i] + (1 if first[i] >= orig else 0)
        ss, oo = (ent, o) if heads[i] else (s, ent)
        if _is_known(known_keys, (ss * n_rel + p) * n_ent + oo):
            ent = second[i] + (1 if second[i] >= orig else 0)
            ss, oo = (ent, o) if heads[i] else (s, ent)
            flagged[i] = _is_known(known_keys, (ss * n_rel + p) * n_ent + oo)
        out[i, 0] = ss
        out[i, 1] = p
        out[i, 2] = oo
    return out, flagged


@njit(**JIT_OPTIONS)
def bce_with_logits(logits, labels):
    b, n = logits.shape
    grad = np.empty((b, n))
    loss = 0.0
    for i in range(b):
        for j in range(n):
            x = logits[i, j]
            y = labels[i, j]
            e = math.exp(-abs(x))
            loss += max(x, 0.0) - y * x + math.log1p(e)
            grad[i, j] = (1.0 if x >= 0 else e) / (1.0 + e) - y
    return loss, grad
