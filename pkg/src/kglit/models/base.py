"""Shared model machinery: parameter init, 1-N batches, BCE, checkpoints."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import kernels
from ..errors import CheckpointMismatchError, KGLitError, NumericalError
from ..npzio import write_npz

CHECKPOINT_FORMAT = "kglit-ckpt/1"
SIDES = ("object", "subject")


def normal_init(rng, shape, std=0.05):
    return rng.normal(0.0, std, size=shape)


def xavier_uniform(rng, shape):
    fan_out, fan_in = shape[0], int(np.prod(shape[1:])) if len(shape) > 1 else shape[0]
    limit = np.sqrt(6.0 / max(fan_in + fan_out, 1))
    return rng.uniform(-limit, limit, size=shape)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def bce_with_logits(logits, labels):
    """Mean binary cross-entropy over all cells and its gradient w.r.t. the logits."""
    total, dlogits = kernels.bce_with_logits(
        np.ascontiguousarray(logits, dtype=np.float64), np.ascontiguousarray(labels, dtype=np.float64)
    )
    dlogits /= logits.size
    return total / logits.size, dlogits


@dataclass
class OneToNBatch:
    """Queries ``(anchor, relation, ?)`` on one side with soft labels over all entities.

    The dropout masks are drawn by the caller and already scaled by
    ``1 / (1 - p)``; ``None`` disables the corresponding dropout.
    """

    anchors: np.ndarray
    rels: np.ndarray
    side: str
    labels: np.ndarray
    input_mask: Optional[np.ndarray] = None
    hidden_mask: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.anchors)


@dataclass
class MarginBatch:
    """Positive triples and their corruptions; ``negatives[i]`` pairs with ``positives[i % B]``."""

    positives: np.ndarray
    negatives: np.ndarray

    def __len__(self):
        return len(self.positives)


class Model:
    """Base class. Subclasses fill ``params`` (trained) and ``buffers`` (fixed)."""

    name = "base"
    regime = "1-N"
    uses_features = False
    input_width = 0  # width of the anchor vector input dropout applies to
    query_width = 0  # width of the query vector hidden dropout applies to

    def __init__(self, n_entities, n_relations, n_attrs=0, dim=200, seed=0, **options):
        self.n_entities = int(n_entities)
        self.n_relations = int(n_relations)
        self.n_attrs = int(n_attrs)
        self.dim = int(dim)
        self.seed = int(seed)
        self.options = options
        self.params: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}

    # -- metadata ----------------------------------------------------------
    def spec(self) -> dict:
        return {
            "name": self.name,
            "n_entities": self.n_entities,
            "n_relations": self.n_relations,
            "n_attrs": self.n_attrs,
            "dim": self.dim,
            "seed": self.seed,
            "options": dict(sorted(self.options.items())),
        }

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.params.items()}

    def check_shapes(self, expected: dict[str, tuple]):
        for k, shape in expected.items():
            if self.params.get(k, self.buffers.get(k)) is None:
                raise KGLitError(f"{self.name}: missing parameter {k}")
            got = self.params.get(k, self.buffers.get(k)).shape
            if got != tuple(shape):
                raise KGLitError(f"{self.name}: parameter {k} has shape {got}, expected {tuple(shape)}")

    def fit_buffers(self, g, feats) -> None:
        """Hook for statistics computed from the training data before optimization."""

    def check_finite(self, loss, batch):
        if not np.isfinite(loss):
            raise NumericalError(f"{self.name}: non-finite loss {loss}", batch=batch)

    # -- scoring -----------------------------------------------------------
    def score_candidates(self, anchors, rels, side, feats=None) -> np.ndarray:
        """Scores of every entity in the open slot, shape ``(len(anchors), n_entities)``."""
        raise NotImplementedError

    def score_triples(self, triples, feats=None) -> np.ndarray:
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        full = self.score_candidates(triples[:, 0], triples[:, 1], "object", feats)
        return full[np.arange(len(triples)), triples[:, 2]]

    def loss_and_grad(self, batch, feats=None):
        """Loss and dense gradients for every entry of ``params``.

        Returns ``(loss, grads, rows)``; ``rows`` maps parameter names to the
        row indices that received gradient (for lazy updates) or is ``None``.
        """
        raise NotImplementedError

    # -- checkpoints -------------------------------------------------------
    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {f"param/{k}": v for k, v in self.params.items()}
        out.update({f"buffer/{k}": v for k, v in self.buffers.items()})
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]):
        for key, arr in arrays.items():
            kind, _, name = key.partition("/")
            target = self.params if kind == "param" else self.buffers
            if name not in target or target[name].shape != arr.shape:
                raise CheckpointMismatchError(f"checkpoint entry {key} does not match model {self.name}")
            target[name] = np.array(arr, dtype=np.float64)


class OneToNModel(Model):
    """Models trained by scoring each query against every entity with BCE."""

    def forward(self, anchors, rels, side, feats, input_mask=None, hidden_mask=None):
        raise NotImplementedError

    def backward(self, cache, dlogits, feats) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def aux_loss_and_grad(self, batch, feats, grads) -> float:
        return 0.0

    def score_candidates(self, anchors, rels, side, feats=None):
        return self.forward(np.asarray(anchors), np.asarray(rels), side, feats)[0]

    def loss_and_grad(self, batch: OneToNBatch, feats=None):
        logits, cache = self.forward(
            batch.anchors, batch.rels, batch.side, feats, batch.input_mask, batch.hidden_mask
        )
        loss, dlogits = bce_with_logits(logits, batch.labels)
        grads = self.backward(cache, dlogits, feats)
        loss += self.aux_loss_and_grad(batch, feats, grads)
        self.check_finite(loss, batch)
        return loss, grads, None


class TableModel(OneToNModel):
    """Scores are ``query(anchor, relation) @ table.T`` plus an optional extra term.

    Subclasses provide the query map and its adjoint; the entity table may be
    a transformed version of the raw embeddings (``entity_table``).
    """

    def entity_table(self, feats):
        return self.params["entity"], None

    def entity_table_backward(self, tcache, d_table, grads, feats):
        grads["entity"] += d_table

    def query(self, a, r, side):
        raise NotImplementedError

    def query_backward(self, qcache, dq, grads):
        """Return ``(d_anchor, d_relation)``; may add to ``grads`` for other parameters."""
        raise NotImplementedError

    def extra_logits(self, anchors, rels, side, feats):
        return None

    def extra_backward(self, anchors, rels, side, feats, dlogits, grads):
        pass

    def forward(self, anchors, rels, side, feats, input_mask=None, hidden_mask=None):
        if side not in SIDES:
            raise ValueError(f"side must be one of {SIDES}, got {side!r}")
        table, tcache = self.entity_table(feats)
        a = table[anchors]
        if input_mask is not None:
            a = a * input_mask
        r = self.params["relation"][rels]
        q, qcache = self.query(a, r, side)
        if hidden_mask is not None:
            q = q * hidden_mask
        logits = q @ table.T
        extra = self.extra_logits(anchors, rels, side, feats)
        if extra is not None:
            logits = logits + extra
        cache = (anchors, rels, side, table, tcache, q, qcache, input_mask, hidden_mask)
        return logits, cache

    def backward(self, cache, dlogits, feats):
        anchors, rels, side, table, tcache, q, qcache, input_mask, hidden_mask = cache
        grads = self.zero_grads()
        d_table = dlogits.T @ q
        dq = dlogits @ table
        if hidden_mask is not None:
            dq = dq * hidden_mask
        da, dr = self.query_backward(qcache, dq, grads)
        if input_mask is not None:
            da = da * input_mask
        kernels.scatter_add_rows(d_table, anchors, da)
        kernels.scatter_add_rows(grads["relation"], rels, dr)
        self.extra_backward(anchors, rels, side, feats, dlogits, grads)
        self.entity_table_backward(tcache, d_table, grads, feats)
        return grads


# ---------------------------------------------------------------------------
# Checkpoints


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


def save_checkpoint(path, model: Model, config: dict) -> str:
    """Write an ``.npz`` checkpoint.

    Layout: ``format`` (version tag), ``config`` (JSON text including the
    model spec), ``config_hash`` (SHA-256 of the canonical JSON), then one
    float64 array per ``param/<name>`` and ``buffer/<name>``.
    """
    config = dict(config, model=model.spec())
    digest = config_hash(config)
    write_npz(
        path,
        dict(
            format=np.array(CHECKPOINT_FORMAT),
            config=np.array(json.dumps(config, sort_keys=True)),
            config_hash=np.array(digest),
            **model.state_arrays(),
        ),
    )
    return digest


def load_checkpoint(path):
    """Rebuild the model from a checkpoint; returns ``(model, config)``."""
    from . import build_model

    with np.load(path, allow_pickle=False) as z:
        fmt = str(z["format"])
        if fmt != CHECKPOINT_FORMAT:
            raise CheckpointMismatchError(f"{path}: unsupported checkpoint format {fmt!r}")
        config = json.loads(str(z["config"]))
        if config_hash(config) != str(z["config_hash"]):
            raise CheckpointMismatchError(f"{path}: config hash does not match stored config")
        arrays = {k: z[k] for k in z.files if k.startswith(("param/", "buffer/"))}
    spec = config["model"]
    model = build_model(
        spec["name"], spec["n_entities"], spec["n_relations"], spec["n_attrs"],
        dim=spec["dim"], seed=spec["seed"], **spec["options"],
    )
    model.load_state_arrays(arrays)
    return model, config
