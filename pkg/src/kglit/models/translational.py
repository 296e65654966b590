"""TransE and TransEA, trained with a margin ranking loss on sampled corruptions."""

import numpy as np

from .. import kernels
from .base import MarginBatch, Model, normal_init, xavier_uniform
from ..rng import rng_for

_CHUNK = 32


def transe_score(e_s, r_p, e_o):
    return -float(np.linalg.norm(np.asarray(e_s) + r_p - e_o))


class TransE(Model):
    """Score ``-||e_s + r_p - e_o||_2``; loss ``sum max(0, margin + d_pos - d_neg)``."""

    name = "transe"
    regime = "margin"

    def __init__(self, n_entities, n_relations, n_attrs=0, dim=200, seed=0, margin=1.0, **options):
        super().__init__(n_entities, n_relations, n_attrs, dim, seed, margin=float(margin), **options)
        self.margin = float(margin)
        rng = rng_for(seed, f"init:{self.name}")
        self.params["entity"] = normal_init(rng, (self.n_entities, dim))
        self.params["relation"] = normal_init(rng, (self.n_relations, dim))

    def score_candidates(self, anchors, rels, side, feats=None):
        e = self.params["entity"]
        r = self.params["relation"][rels]
        a = e[anchors]
        # object side: a + r - cand ; subject side: cand + r - a = -(a - r - cand)
        q = a + r if side == "object" else a - r
        out = np.empty((len(q), len(e)))
        for start in range(0, len(q), _CHUNK):
            diff = q[start:start + _CHUNK, None, :] - e[None, :, :]
            out[start:start + _CHUNK] = -np.sqrt(np.einsum("bnd,bnd->bn", diff, diff))
        return out

    def score_triples(self, triples, feats=None):
        t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        e, r = self.params["entity"], self.params["relation"]
        return -np.linalg.norm(e[t[:, 0]] + r[t[:, 1]] - e[t[:, 2]], axis=1)

    def _distance_grad(self, triples, coef, grads):
        """Accumulate ``coef * d||e_s + r - e_o|| / dparams`` for each triple."""
        e, r = self.params["entity"], self.params["relation"]
        v = e[triples[:, 0]] + r[triples[:, 1]] - e[triples[:, 2]]
        norm = np.linalg.norm(v, axis=1, keepdims=True)
        u = np.divide(v, norm, out=np.zeros_like(v), where=norm > 0) * coef[:, None]
        kernels.scatter_add_rows(grads["entity"], triples[:, 0], u)
        kernels.scatter_add_rows(grads["entity"], triples[:, 2], -u)
        kernels.scatter_add_rows(grads["relation"], triples[:, 1], u)

    def margin_loss_and_grad(self, batch: MarginBatch, grads):
        pos = batch.positives
        neg = batch.negatives
        if len(neg) == 0:
            return 0.0
        pos_rep = pos[np.arange(len(neg)) % len(pos)]
        d_pos = -self.score_triples(pos_rep)
        d_neg = -self.score_triples(neg)
        hinge = self.margin + d_pos - d_neg
        active = (hinge > 0).astype(np.float64)
        self._distance_grad(pos_rep, active, grads)
        self._distance_grad(neg, -active, grads)
        return float(np.sum(np.maximum(hinge, 0.0)))

    def touched_rows(self, batch: MarginBatch):
        t = np.concatenate([batch.positives, batch.negatives])
        ents = np.unique(np.concatenate([t[:, 0], t[:, 2]]))
        return {"entity": ents, "relation": np.unique(t[:, 1])}

    def loss_and_grad(self, batch: MarginBatch, feats=None):
        grads = self.zero_grads()
        loss = self.margin_loss_and_grad(batch, grads)
        self.check_finite(loss, batch)
        return loss, grads, self.touched_rows(batch)


class TransEA(TransE):
    """TransE plus per-attribute linear regressors ``a_p . e + b_p`` with L1 loss.

    Objective ``(1 - alpha) * L_E + alpha * L_A``; ``L_A`` sums over the
    literal values of the entities occurring in the batch's positives.
    """

    name = "transea"
    uses_features = True

    def __init__(self, n_entities, n_relations, n_attrs=0, dim=100, seed=0, margin=1.0, alpha=0.1, **options):
        super().__init__(n_entities, n_relations, n_attrs, dim, seed, margin=margin, alpha=float(alpha), **options)
        self.alpha = float(alpha)
        rng = rng_for(seed, f"init:{self.name}:regressor")
        self.params["attr_weight"] = xavier_uniform(rng, (self.n_attrs, dim))
        self.params["attr_bias"] = np.zeros(self.n_attrs)

    def attribute_loss_and_grad(self, entities, feats, grads, scale=1.0):
        if self.n_attrs == 0 or len(entities) == 0:
            return 0.0
        e = self.params["entity"][entities]
        mask = feats.present[entities].astype(np.float64)
        pred = e @ self.params["attr_weight"].T + self.params["attr_bias"]
        resid = (pred - feats.values[entities]) * mask
        g = np.sign(resid) * scale
        grads["attr_weight"] += g.T @ e
        grads["attr_bias"] += g.sum(axis=0)
        kernels.scatter_add_rows(grads["entity"], entities, g @ self.params["attr_weight"])
        return float(np.abs(resid).sum())

    def losses(self, batch: MarginBatch, feats):
        """``(L_E, L_A)`` without gradients."""
        grads = self.zero_grads()
        l_e = self.margin_loss_and_grad(batch, grads)
        ents = np.unique(np.concatenate([batch.positives[:, 0], batch.positives[:, 2]]))
        l_a = self.attribute_loss_and_grad(ents, feats, grads)
        return l_e, l_a

    def loss_and_grad(self, batch: MarginBatch, feats=None):
        grads = self.zero_grads()
        l_e = self.margin_loss_and_grad(batch, grads)
        for k in grads:
            grads[k] *= 1.0 - self.alpha
        ents = np.unique(np.concatenate([batch.positives[:, 0], batch.positives[:, 2]]))
        l_a = self.attribute_loss_and_grad(ents, feats, grads, scale=self.alpha)
        loss = (1.0 - self.alpha) * l_e + self.alpha * l_a
        self.check_finite(loss, batch)
        rows = self.touched_rows(batch)
        return loss, grads, rows
