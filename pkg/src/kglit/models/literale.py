"""LiteralE: gated fusion of entity embeddings with literal features, hosted by DistMult or ComplEx."""

import numpy as np

from .base import sigmoid, xavier_uniform
from .bilinear import ComplEx, DistMult
from ..rng import rng_for


def literale_enrich(e, x, w_ze, w_zl, b_z, w_h):
    """Gate ``z = sigmoid(W_ze e + W_zl x + b_z)``, candidate ``h = tanh(W_h [e; x])``.

    Works on single vectors or row-stacked matrices; returns ``z*h + (1-z)*e``.
    """
    e = np.atleast_2d(e)
    x = np.atleast_2d(x)
    z = sigmoid(e @ w_ze.T + x @ w_zl.T + b_z)
    h = np.tanh(np.concatenate([e, x], axis=1) @ w_h.T)
    return z * h + (1.0 - z) * e, z, h


class _LiteralEMixin:
    uses_features = True

    def _init_gate(self, width):
        rng = rng_for(self.seed, f"init:{self.name}:gate")
        self.params["gate_entity"] = xavier_uniform(rng, (width, width))
        self.params["gate_literal"] = xavier_uniform(rng, (width, self.n_attrs))
        self.params["gate_bias"] = np.zeros(width)
        self.params["mix"] = xavier_uniform(rng, (width, width + self.n_attrs))

    def entity_table(self, feats):
        p = self.params
        e = p["entity"]
        x = feats.values
        out, z, h = literale_enrich(e, x, p["gate_entity"], p["gate_literal"], p["gate_bias"], p["mix"])
        return out, (e, x, z, h)

    def entity_table_backward(self, tcache, d_table, grads, feats):
        e, x, z, h = tcache
        p = self.params
        width = e.shape[1]
        dz = d_table * (h - e)
        dh = d_table * z
        de = d_table * (1.0 - z)
        dz_pre = dz * z * (1.0 - z)
        grads["gate_entity"] += dz_pre.T @ e
        grads["gate_literal"] += dz_pre.T @ x
        grads["gate_bias"] += dz_pre.sum(axis=0)
        de += dz_pre @ p["gate_entity"]
        dh_pre = dh * (1.0 - h * h)
        grads["mix"] += dh_pre.T @ np.concatenate([e, x], axis=1)
        de += dh_pre @ p["mix"][:, :width]
        grads["entity"] += de


class LiteralEDistMult(_LiteralEMixin, DistMult):
    name = "literale-distmult"

    def __init__(self, n_entities, n_relations, n_attrs=0, dim=200, seed=0, **options):
        super().__init__(n_entities, n_relations, n_attrs, dim, seed, **options)
        self._init_gate(dim)


class LiteralEComplEx(_LiteralEMixin, ComplEx):
    """One gate over the concatenated real and imaginary parts."""

    name = "literale-complex"

    def __init__(self, n_entities, n_relations, n_attrs=0, dim=200, seed=0, **options):
        super().__init__(n_entities, n_relations, n_attrs, dim, seed, **options)
        self._init_gate(2 * dim)
