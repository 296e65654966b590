"""Bilinear base models (DistMult, ComplEx, TuckER) and KBLN."""

import numpy as np

from .. import kernels
from .base import TableModel, normal_init, xavier_uniform
from ..rng import rng_for


class DistMult(TableModel):
    """Trilinear product ``sum_d e_s[d] r_p[d] e_o[d]``."""

    name = "distmult"

    def __init__(self, n_entities, n_relations, n_attrs=0, dim=200, seed=0, **options):
        super().__init__(n_entities, n_relations, n_attrs, dim, seed, **options)
        rng = rng_for(seed, f"init:{self.name}")
        self.params["entity"] = normal_init(rng, (self.n_entities, dim))
        self.params["relation"] = normal_init(rng, (self.n_relations, dim))
        self.input_width = self.query_width = dim

    def query(self, a, r, side):
        return a * r, (a, r)

    def query_backward(self, qcache, dq, grads):
        a, r = qcache
        return dq * r, dq * a


def distmult_score(e_s, r_p, e_o):
    return float(np.sum(np.asarray(e_s) * r_p * e_o))


class ComplEx(TableModel):
    """``Re(<e_s, r_p, conj(e_o)>)``; vectors are stored as ``[real | imaginary]``."""

    name = "complex"

    def __init__(self, n_entities, n_relations, n_attrs=0, dim=200, seed=0, **options):
        super().__init__(n_entities, n_relations, n_attrs, dim, seed, **options)
        rng = rng_for(seed, f"init:{self.name}")
        self.params["entity"] = normal_init(rng, (self.n_entities, 2 * dim))
        self.params["relation"] = normal_init(rng, (self.n_relations, 2 * dim))
        self.input_width = self.query_width = 2 * dim

    def query(self, a, r, side):
        d = self.dim
        ar, ai, rr, ri = a[:, :d], a[:, d:], r[:, :d], r[:, d:]
        if side == "object":
            q = np.concatenate([ar * rr - ai * ri, ai * rr + ar * ri], axis=1)
        else:
            q = np.concatenate([rr * ar + ri * ai, rr * ai - ri * ar], axis=1)
        return q, (a, r, side)

    def query_backward(self, qcache, dq, grads):
        a, r, side = qcache
        d = self.dim
        ar, ai, rr, ri = a[:, :d], a[:, d:], r[:, :d], r[:, d:]
        gr, gi = dq[:, :d], dq[:, d:]
        if side == "object":
            da = np.concatenate([gr * rr + gi * ri, -gr * ri + gi * rr], axis=1)
            dr = np.concatenate([gr * ar + gi * ai, -gr * ai + gi * ar], axis=1)
        else:
            da = np.concatenate([gr * rr - gi * ri, gr * ri + gi * rr], axis=1)
            dr = np.concatenate([gr * ar + gi * ai, gr * ai - gi * ar], axis=1)
        return da, dr


def complex_score(e_s, r_p, e_o):
    """Reference form on complex numpy vectors."""
    return float(np.real(np.sum(np.asarray(e_s) * r_p * np.conj(e_o))))


class TuckER(TableModel):
    """Core tensor contraction ``W x1 e_s x2 r_p x3 e_o``.

    ``relation_dim`` sets the relation embedding width (defaults to ``dim``).
    """

    name = "tucker"

    def __init__(self, n_entities, n_relations, n_attrs=0, dim=200, seed=0, relation_dim=None, **options):
        relation_dim = int(relation_dim or dim)
        super().__init__(n_entities, n_relations, n_attrs, dim, seed, relation_dim=relation_dim, **options)
        self.relation_dim = relation_dim
        rng = rng_for(seed, f"init:{self.name}")
        self.params["entity"] = normal_init(rng, (self.n_entities, dim))
        self.params["relation"] = normal_init(rng, (self.n_relations, relation_dim))
        self.params["core"] = rng.uniform(-1.0, 1.0, size=(dim, relation_dim, dim))
        self.input_width = self.query_width = dim

    def query(self, a, r, side):
        m = np.einsum("bj,ijk->bik", r, self.params["core"])
        if side == "object":
            q = np.einsum("bi,bik->bk", a, m)
        else:
            q = np.einsum("bik,bk->bi", m, a)
        return q, (a, r, m, side)

    def query_backward(self, qcache, dq, grads):
        a, r, m, side = qcache
        if side == "object":
            da = np.einsum("bk,bik->bi", dq, m)
            dm = a[:, :, None] * dq[:, None, :]
        else:
            da = np.einsum("bi,bik->bk", dq, m)
            dm = dq[:, :, None] * a[:, None, :]
        grads["core"] += np.einsum("bj,bik->ijk", r, dm)
        dr = np.einsum("bik,ijk->bj", dm, self.params["core"])
        return da, dr


def tucker_score(core, e_s, r_p, e_o):
    return float(np.einsum("ijk,i,j,k->", core, e_s, r_p, e_o))


class KBLN(DistMult):
    """DistMult plus a radial-basis literal expert per (relation, attribute).

    The expert term is ``sum_a w[p, a] * exp(-(d_a - c[p, a])**2 / (2 s[p, a]**2))``
    with ``d_a = x_s[a] - x_o[a]``. Centers ``c`` and widths ``s`` are the
    mean and standard deviation of ``d_a`` over training triples of ``p``
    (fixed buffers); only the weights ``w`` are learned.
    """

    name = "kbln"
    uses_features = True
    min_width = 1e-3

    def __init__(self, n_entities, n_relations, n_attrs=0, dim=200, seed=0, **options):
        super().__init__(n_entities, n_relations, n_attrs, dim, seed, **options)
        rng = rng_for(seed, f"init:{self.name}:rbf")
        self.params["rbf_weight"] = xavier_uniform(rng, (self.n_relations, self.n_attrs))
        self.buffers["rbf_center"] = np.zeros((self.n_relations, self.n_attrs))
        self.buffers["rbf_width"] = np.ones((self.n_relations, self.n_attrs))

    def fit_buffers(self, g, feats):
        self.buffers["rbf_center"], self.buffers["rbf_width"] = rbf_statistics(
            g.train, feats.values, self.n_relations, self.min_width
        )

    def extra_logits(self, anchors, rels, side, feats):
        if self.n_attrs == 0:
            return None
        x = feats.values
        sign = 1.0 if side == "object" else -1.0
        return kernels.rbf_forward(
            np.ascontiguousarray(x[anchors]), x,
            self.buffers["rbf_center"][rels], self.buffers["rbf_width"][rels],
            self.params["rbf_weight"][rels], sign,
        )

    def extra_backward(self, anchors, rels, side, feats, dlogits, grads):
        if self.n_attrs == 0:
            return
        x = feats.values
        sign = 1.0 if side == "object" else -1.0
        dw = kernels.rbf_weight_grad(
            np.ascontiguousarray(x[anchors]), x,
            self.buffers["rbf_center"][rels], self.buffers["rbf_width"][rels],
            np.ascontiguousarray(dlogits), sign,
        )
        kernels.scatter_add_rows(grads["rbf_weight"], rels, dw)


def rbf_statistics(train, x, n_relations, min_width=1e-3):
    """Per-relation mean and (population) std of ``x[s] - x[o]`` over training triples."""
    n_attrs = x.shape[1]
    center = np.zeros((n_relations, n_attrs))
    width = np.ones((n_relations, n_attrs))
    for p in range(n_relations):
        rows = train[train[:, 1] == p]
        if len(rows) == 0:
            continue
        d = x[rows[:, 0]] - x[rows[:, 2]]
        center[p] = d.mean(axis=0)
        width[p] = np.maximum(d.std(axis=0), min_width)
    return center, width
