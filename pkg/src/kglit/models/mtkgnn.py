"""MTKGNN: a triple-scoring MLP trained jointly with attribute-regression MLPs."""

import numpy as np

from .. import kernels
from .base import OneToNModel, normal_init, xavier_uniform
from ..rng import rng_for


class MTKGNN(OneToNModel):
    """Triple net ``w2 . tanh(W1 [e_s; r_p; e_o] + b1) + b2`` (one hidden layer).

    Two attribute nets regress literal values from ``[e; attr_emb]``: the
    subject net sees head-position entities, the object net tail-position
    ones. Their masked squared error is added with weight ``attr_weight``.
    """

    name = "mtkgnn"
    uses_features = True

    def __init__(self, n_entities, n_relations, n_attrs=0, dim=200, seed=0, hidden=100, attr_weight=1.0, **options):
        super().__init__(n_entities, n_relations, n_attrs, dim, seed, hidden=int(hidden),
                         attr_weight=float(attr_weight), **options)
        self.hidden = int(hidden)
        self.attr_weight = float(attr_weight)
        h = self.hidden
        rng = rng_for(seed, f"init:{self.name}")
        p = self.params
        p["entity"] = normal_init(rng, (self.n_entities, dim))
        p["relation"] = normal_init(rng, (self.n_relations, dim))
        p["triple_hidden"] = xavier_uniform(rng, (h, 3 * dim))
        p["triple_hidden_bias"] = np.zeros(h)
        p["triple_out"] = xavier_uniform(rng, (1, h))[0]
        p["triple_out_bias"] = np.zeros(1)
        p["attr_emb"] = normal_init(rng, (self.n_attrs, dim))
        for net in ("subj", "obj"):
            p[f"{net}_hidden"] = xavier_uniform(rng, (h, 2 * dim))
            p[f"{net}_hidden_bias"] = np.zeros(h)
            p[f"{net}_out"] = xavier_uniform(rng, (1, h))[0]
            p[f"{net}_out_bias"] = np.zeros(1)
        self.input_width = dim
        self.query_width = 0

    def _blocks(self, side):
        d = self.dim
        w = self.params["triple_hidden"]
        head, rel, tail = w[:, :d], w[:, d:2 * d], w[:, 2 * d:]
        return (head, rel, tail) if side == "object" else (tail, rel, head)

    def forward(self, anchors, rels, side, feats, input_mask=None, hidden_mask=None):
        p = self.params
        e = p["entity"]
        a = e[anchors]
        if input_mask is not None:
            a = a * input_mask
        r = p["relation"][rels]
        w_anchor, w_rel, w_cand = self._blocks(side)
        pre_anchor = a @ w_anchor.T + r @ w_rel.T + p["triple_hidden_bias"]
        pre_cand = e @ w_cand.T
        logits = kernels.pair_mlp_forward(pre_anchor, pre_cand, p["triple_out"], float(p["triple_out_bias"][0]))
        return logits, (anchors, rels, side, a, r, pre_anchor, pre_cand, input_mask)

    def backward(self, cache, dlogits, feats):
        anchors, rels, side, a, r, pre_anchor, pre_cand, input_mask = cache
        p = self.params
        grads = self.zero_grads()
        e = p["entity"]
        d = self.dim
        d_anchor, d_cand, d_out = kernels.pair_mlp_backward(pre_anchor, pre_cand, p["triple_out"], dlogits)
        grads["triple_out"] += d_out
        grads["triple_out_bias"] += dlogits.sum()
        grads["triple_hidden_bias"] += d_anchor.sum(axis=0)
        w_anchor, w_rel, w_cand = self._blocks(side)
        g_anchor, g_rel, g_cand = d_anchor.T @ a, d_anchor.T @ r, d_cand.T @ e
        gw = grads["triple_hidden"]
        if side == "object":
            gw[:, :d] += g_anchor
            gw[:, 2 * d:] += g_cand
        else:
            gw[:, 2 * d:] += g_anchor
            gw[:, :d] += g_cand
        gw[:, d:2 * d] += g_rel
        da = d_anchor @ w_anchor
        if input_mask is not None:
            da = da * input_mask
        grads["entity"] += d_cand @ w_cand
        kernels.scatter_add_rows(grads["entity"], anchors, da)
        kernels.scatter_add_rows(grads["relation"], rels, d_anchor @ w_rel)
        return grads

    def predict_attributes(self, entities, net):
        """Predicted value of every attribute for ``entities``, shape ``(len, n_attrs)``."""
        p = self.params
        d = self.dim
        w = p[f"{net}_hidden"]
        pre_e = p["entity"][entities] @ w[:, :d].T + p[f"{net}_hidden_bias"]
        pre_a = p["attr_emb"] @ w[:, d:].T
        return kernels.pair_mlp_forward(pre_e, pre_a, p[f"{net}_out"], float(p[f"{net}_out_bias"][0]))

    def attribute_loss_and_grad(self, entities, net, feats, grads):
        """Masked mean squared error of one attribute net; adds gradients into ``grads``."""
        if self.n_attrs == 0 or len(entities) == 0:
            return 0.0
        mask = feats.present[entities].astype(np.float64)
        count = mask.sum()
        if count == 0:
            return 0.0
        p = self.params
        d = self.dim
        w = p[f"{net}_hidden"]
        e = p["entity"][entities]
        pre_e = e @ w[:, :d].T + p[f"{net}_hidden_bias"]
        pre_a = p["attr_emb"] @ w[:, d:].T
        pred = kernels.pair_mlp_forward(pre_e, pre_a, p[f"{net}_out"], float(p[f"{net}_out_bias"][0]))
        resid = (pred - feats.values[entities]) * mask
        loss = self.attr_weight * float(np.sum(resid * resid)) / count
        dpred = self.attr_weight * 2.0 * resid / count
        d_e, d_a, d_out = kernels.pair_mlp_backward(pre_e, pre_a, p[f"{net}_out"], dpred)
        grads[f"{net}_out"] += d_out
        grads[f"{net}_out_bias"] += dpred.sum()
        grads[f"{net}_hidden_bias"] += d_e.sum(axis=0)
        grads[f"{net}_hidden"][:, :d] += d_e.T @ e
        grads[f"{net}_hidden"][:, d:] += d_a.T @ p["attr_emb"]
        grads["attr_emb"] += d_a @ w[:, d:]
        kernels.scatter_add_rows(grads["entity"], np.asarray(entities, dtype=np.int64), d_e @ w[:, :d])
        return loss

    def aux_loss_and_grad(self, batch, feats, grads):
        net = "subj" if batch.side == "object" else "obj"
        return self.attribute_loss_and_grad(batch.anchors, net, feats, grads)
