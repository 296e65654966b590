"""Pure-numpy reference implementations of the hot kernels."""

import numpy as np


def scatter_add_rows(out, idx, vals):
    np.add.at(out, idx, vals)


def filtered_ranks(scores, targets, excl_ptr, excl_idx):
    b, n = scores.shape
    rows = np.arange(b)
    target_scores = scores[rows, targets]
    keep = np.ones((b, n), dtype=bool)
    if excl_idx.size:
        owner = np.repeat(rows, np.diff(excl_ptr))
        keep[owner, excl_idx] = False
    keep[rows, targets] = False
    greater = ((scores > target_scores[:, None]) & keep).sum(axis=1)
    ties = ((scores == target_scores[:, None]) & keep).sum(axis=1)
    return (1 + greater + (ties + 1) // 2).astype(np.int64)


def pair_mlp_forward(p, q, w, bias, chunk=16):
    b = p.shape[0]
    out = np.empty((b, q.shape[0]))
    for start in range(0, b, chunk):
        h = np.tanh(p[start:start + chunk, None, :] + q[None, :, :])
        out[start:start + chunk] = h @ w + bias
    return out


def pair_mlp_backward(p, q, w, dlogits, chunk=16):
    dp = np.zeros_like(p)
    dq = np.zeros_like(q)
    dw = np.zeros_like(w)
    for start in range(0, p.shape[0], chunk):
        h = np.tanh(p[start:start + chunk, None, :] + q[None, :, :])
        g = dlogits[start:start + chunk]
        dw += np.einsum("bc,bch->h", g, h)
        dpre = g[:, :, None] * (1.0 - h * h) * w
        dp[start:start + chunk] = dpre.sum(axis=1)
        dq += dpre.sum(axis=0)
    return dp, dq, dw


def rbf_forward(xa, x, centers, widths, weights, sign):
    d = sign * (xa[:, None, :] - x[None, :, :]) - centers[:, None, :]
    phi = np.exp(-(d * d) / (2.0 * widths[:, None, :] ** 2))
    return (phi * weights[:, None, :]).sum(axis=2)


def rbf_weight_grad(xa, x, centers, widths, dlogits, sign):
    d = sign * (xa[:, None, :] - x[None, :, :]) - centers[:, None, :]
    phi = np.exp(-(d * d) / (2.0 * widths[:, None, :] ** 2))
    return np.einsum("bc,bca->ba", dlogits, phi)


def corrupt(triples, n_ent, n_rel, known_keys, heads, first, second):
    """Replace subject (heads True) or object with ``first``; on a known hit use ``second``.

    ``first`` and ``second`` are draws from ``[0, n_ent - 1)`` and are shifted past
    the original entity, so a corruption never reproduces its positive.
    """
    s = triples[:, 0].copy()
    p = triples[:, 1]
    o = triples[:, 2].copy()
    orig = np.where(heads, s, o)

    def place(draw):
        ent = draw + (draw >= orig)
        ss = np.where(heads, ent, s)
        oo = np.where(heads, o, ent)
        return ss, oo

    def known(ss, oo):
        keys = (ss * n_rel + p) * n_ent + oo
        pos = np.searchsorted(known_keys, keys)
        pos = np.minimum(pos, max(known_keys.size - 1, 0))
        return known_keys[pos] == keys if known_keys.size else np.zeros(keys.shape, bool)

    s1, o1 = place(first)
    hit = known(s1, o1)
    s2, o2 = place(second)
    s1 = np.where(hit, s2, s1)
    o1 = np.where(hit, o2, o1)
    flagged = hit & known(s1, o1)
    return np.stack([s1, p, o1], axis=1), flagged


def bce_with_logits(logits, labels):
    """Summed BCE-with-logits and per-cell ``sigmoid(logit) - label``."""
    e = np.exp(-np.abs(logits))
    loss = np.sum(np.maximum(logits, 0.0) - labels * logits + np.log1p(e))
    sig = np.where(logits >= 0, 1.0, e) / (1.0 + e)
    return float(loss), sig - labels
