"""Training loop: 1-N BCE or margin ranking, Adam, early stopping on validation MRR."""

from __future__ import annotations

import dataclasses
import logging
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .errors import ConfigError
from .evaluation import evaluate
from .graph import FilterIndex, KnowledgeGraph, LiteralFeatureMatrix, build_feature_matrix, encode_keys
from .models import MarginBatch, Model, OneToNBatch, build_model
from .rng import rng_for

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    embedding_dim: int = 200
    epochs: int = 100
    learning_rate: float = 0.001
    batch_size: int = 128
    input_dropout: float = 0.2
    hidden_dropout: float = 0.0
    label_smoothing: float = 0.1
    margin: float = 1.0
    n_negatives: int = 1
    alpha: float = 0.1
    eval_every_epochs: int = 3
    patience: int = 5
    seed: int = 0
    relation_dim: int = 0  # TuckER only; 0 means embedding_dim
    hidden: int = 100  # MTKGNN hidden width
    attr_weight: float = 1.0  # MTKGNN attribute-loss weight
    query_sides: str = "both"  # 1-N queries: "both" (s, p, ?) and (?, p, o), or "object" only

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be > 0")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError("label_smoothing must lie in [0, 1)")
        if self.query_sides not in QUERY_SIDES:
            raise ConfigError(f"query_sides must be one of {sorted(QUERY_SIDES)}")
        if self.eval_every_epochs < 1:
            raise ConfigError("eval_every_epochs must be >= 1")
        for name in ("input_dropout", "hidden_dropout"):
            if not 0.0 <= getattr(self, name) < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1)")
        if self.batch_size < 1 or self.epochs < 0 or self.patience < 1 or self.n_negatives < 0:
            raise ConfigError("batch_size and patience must be >= 1, epochs and n_negatives >= 0")

    @classmethod
    def for_model(cls, model: str, augmented: bool = False, **overrides) -> "TrainConfig":
        """Published defaults per model family; keyword overrides win.

        ``augmented`` selects the settings used when the model consumes a
        quantile-hierarchy augmented graph, which differ from the plain ones.
        """
        table = KGA_DEFAULTS if augmented and model in KGA_DEFAULTS else MODEL_DEFAULTS
        base = dict(table.get(model, {}))
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def model_options(self, model: str) -> dict:
        opts = {}
        if model in ("transe", "transea"):
            opts["margin"] = self.margin
        if model == "transea":
            opts["alpha"] = self.alpha
        if model == "tucker" and self.relation_dim:
            opts["relation_dim"] = self.relation_dim
        if model == "mtkgnn":
            opts.update(hidden=self.hidden, attr_weight=self.attr_weight)
        return opts


QUERY_SIDES = {"both": ("object", "subject"), "object": ("object",)}

_TRANSLATIONAL = dict(embedding_dim=100, epochs=500, learning_rate=0.001, input_dropout=0.0, label_smoothing=0.0)
MODEL_DEFAULTS = {
    "transe": _TRANSLATIONAL,
    "transea": _TRANSLATIONAL,
    "tucker": dict(epochs=500, learning_rate=0.003, input_dropout=0.2, hidden_dropout=0.3, label_smoothing=0.0),
}
KGA_DEFAULTS = {
    "distmult": dict(epochs=500, learning_rate=0.003, input_dropout=0.2, label_smoothing=0.1),
    "tucker": MODEL_DEFAULTS["tucker"],
}


def read_config(path) -> dict:
    """Parse ``key = value`` lines (``#`` comments) into typed TrainConfig overrides."""
    types = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    casts = {"int": int, "float": float, "str": str}
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (s.strip() for s in line.partition("="))
            if not sep or key not in types:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value' with a known key, got {raw.strip()!r}")
            try:
                out[key] = casts[types[key]](value)
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def write_config(cfg: TrainConfig, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for k, v in cfg.to_dict().items():
            fh.write(f"{k} = {v}\n")


# ---------------------------------------------------------------------------
# Targets and negatives


def known_answers(triples: np.ndarray) -> dict:
    """``("object", s, p) -> objects`` and ``("subject", p, o) -> subjects`` over ``triples``."""
    out = defaultdict(list)
    for s, p, o in np.asarray(triples).tolist():
        out[("object", s, p)].append(o)
        out[("subject", p, o)].append(s)
    return {k: np.array(sorted(set(v)), dtype=np.int64) for k, v in out.items()}


def one_to_n_targets(pairs, answers, n_entities: int, label_smoothing: float = 0.0, side="object") -> np.ndarray:
    """Soft label rows ``(1 - ls) * y + ls / n_entities`` for queries ``(anchor, relation)``.

    ``answers`` is a graph (its training split is used) or a mapping from
    :func:`known_answers`.
    """
    if isinstance(answers, KnowledgeGraph):
        answers = known_answers(answers.train)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    y = np.zeros((len(pairs), n_entities))
    empty = np.zeros(0, dtype=np.int64)
    for i, (a, r) in enumerate(pairs.tolist()):
        key = (side, a, r) if side == "object" else (side, r, a)
        y[i, answers.get(key, empty)] = 1.0
    if label_smoothing:
        y = (1.0 - label_smoothing) * y + label_smoothing / n_entities
    return y


def negative_sample(triples, n_entities: int, known_keys, n_neg: int, rng, n_relations: Optional[int] = None):
    """``n_neg`` corruptions per positive, replacing subject or object by coin flip.

    The replacement is uniform over the other entities, so a corruption never
    equals its positive. A corruption that is a known triple is redrawn once;
    if the redraw is also known it is kept and flagged.
    Returns ``(corruptions, n_flagged)``; ``corruptions[k]`` corrupts
    ``triples[k % len(triples)]``.
    """
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if n_neg == 0 or len(triples) == 0:
        return np.zeros((0, 3), dtype=np.int64), 0
    if n_entities < 2:
        raise ConfigError("negative sampling needs at least two entities")
    if not isinstance(rng, np.random.Generator):
        rng = rng_for(int(rng), "negative-sample")
    if n_relations is None:
        n_relations = int(triples[:, 1].max()) + 1
    reps = np.tile(triples, (n_neg, 1))
    m = len(reps)
    heads = rng.random(m) < 0.5
    first = rng.integers(n_entities - 1, size=m)
    second = rng.integers(n_entities - 1, size=m)
    out, flagged = kernels.corrupt(
        reps, n_entities, n_relations, np.asarray(known_keys, dtype=np.int64), heads, first, second
    )
    return out, int(flagged.sum())


# ---------------------------------------------------------------------------
# Optimizer


class Adam:
    """Adam with bias correction; optional lazy row updates for sparse gradients."""

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict, grads: dict, rows: Optional[dict] = None):
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        rows = rows or {}
        for k, g in grads.items():
            if k not in self.m:
                self.m[k] = np.zeros_like(params[k])
                self.v[k] = np.zeros_like(params[k])
            idx = rows.get(k)
            if idx is None:
                m, v, p, gg = self.m[k], self.v[k], params[k], g
            else:
                m, v, p, gg = self.m[k][idx], self.v[k][idx], params[k][idx], g[idx]
            m = self.beta1 * m + (1.0 - self.beta1) * gg
            v = self.beta2 * v + (1.0 - self.beta2) * gg * gg
            p = p - self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if idx is None:
                self.m[k], self.v[k] = m, v
                params[k][...] = p
            else:
                self.m[k][idx], self.v[k][idx], params[k][idx] = m, v, p


def adam_step(params: dict, grads: dict, lr: float, t: int, state: Optional[Adam] = None) -> Adam:
    """One functional-style update; ``state`` carries the moments between calls."""
    state = state or Adam(lr)
    state.lr = lr
    state.t = t - 1
    state.step(params, grads)
    return state


# ---------------------------------------------------------------------------
# Training


@dataclass
class TrainReport:
    mrr_trace: list = field(default_factory=list)  # [(epoch, validation MRR)]
    loss_trace: list = field(default_factory=list)  # mean batch loss per epoch
    best_epoch: int = 0
    best_mrr: Optional[float] = None
    epochs_run: int = 0
    stopped_early: bool = False
    flagged_negatives: int = 0
    checkpoint_path: Optional[str] = None
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _dropout_mask(rng, shape, p):
    if p <= 0 or shape[1] == 0:
        return None
    return (rng.random(shape) >= p) / (1.0 - p)


def _one_to_n_batches(train, cfg, model, n_entities, answers, rng):
    groups = []
    for side in QUERY_SIDES[cfg.query_sides]:
        cols = [0, 1] if side == "object" else [2, 1]
        queries = np.unique(train[:, cols], axis=0)
        queries = queries[rng.permutation(len(queries))]
        for start in range(0, len(queries), cfg.batch_size):
            groups.append((side, queries[start:start + cfg.batch_size]))
    for i in rng.permutation(len(groups)).tolist():
        side, q = groups[i]
        labels = one_to_n_targets(q, answers, n_entities, cfg.label_smoothing, side)
        yield OneToNBatch(
            anchors=q[:, 0], rels=q[:, 1], side=side, labels=labels,
            input_mask=_dropout_mask(rng, (len(q), model.input_width), cfg.input_dropout),
            hidden_mask=_dropout_mask(rng, (len(q), model.query_width), cfg.hidden_dropout),
        )


def _margin_batches(train, cfg, n_entities, n_relations, known_keys, rng, counter):
    order = rng.permutation(len(train))
    for start in range(0, len(order), cfg.batch_size):
        pos = train[order[start:start + cfg.batch_size]]
        neg, flagged = negative_sample(pos, n_entities, known_keys, cfg.n_negatives, rng, n_relations)
        counter[0] += flagged
        yield MarginBatch(pos, neg)


def train(
    g: KnowledgeGraph,
    feats: Optional[LiteralFeatureMatrix],
    model_variant: str,
    cfg: TrainConfig,
    validate: Optional[Callable[[Model], float]] = None,
    progress: Optional[Callable[[int, float], None]] = None,
) -> tuple[Model, TrainReport]:
    """Train ``model_variant`` on the training split and return the best checkpoint.

    Every ``eval_every_epochs`` epochs the validation MRR is computed (or
    ``validate(model)`` when given); training stops after ``patience``
    consecutive checks without improvement and the parameters of the best
    check are restored.
    """
    if len(g.train) == 0:
        raise ConfigError("training split is empty")
    started = time.perf_counter()
    model = build_model(
        model_variant, g.n_entities, g.n_relations, g.n_attrs,
        dim=cfg.embedding_dim, seed=cfg.seed, **cfg.model_options(model_variant),
    )
    if model.uses_features and feats is None:
        feats = build_feature_matrix(g, cfg.seed)
    model.fit_buffers(g, feats)
    report = TrainReport()

    if validate is None and len(g.valid):
        filt = FilterIndex(g.all_relational)

        def validate(m):
            return evaluate(m, g, "valid", feats, filt).mrr

    rng = rng_for(cfg.seed, "train")
    opt = Adam(cfg.learning_rate)
    answers = known_answers(g.train) if model.regime == "1-N" else None
    known_keys = encode_keys(g.train, g.n_entities, g.n_relations) if model.regime == "margin" else None
    flagged = [0]
    best_params = None
    bad_checks = 0

    for epoch in range(1, cfg.epochs + 1):
        if model.regime == "1-N":
            batches = _one_to_n_batches(g.train, cfg, model, g.n_entities, answers, rng)
        else:
            batches = _margin_batches(g.train, cfg, g.n_entities, g.n_relations, known_keys, rng, flagged)
        losses = []
        for batch in batches:
            loss, grads, rows = model.loss_and_grad(batch, feats)
            opt.step(model.params, grads, rows)
            losses.append(loss)
        report.loss_trace.append(float(np.mean(losses)) if losses else 0.0)
        report.epochs_run = epoch
        if progress:
            progress(epoch, report.loss_trace[-1])

        if validate is not None and epoch % cfg.eval_every_epochs == 0:
            mrr = float(validate(model))
            report.mrr_trace.append((epoch, mrr))
            log.info("epoch %d loss %.6f valid MRR %.4f", epoch, report.loss_trace[-1], mrr)
            if report.best_mrr is None or mrr > report.best_mrr:
                report.best_mrr, report.best_epoch = mrr, epoch
                best_params = {k: v.copy() for k, v in model.params.items()}
                bad_checks = 0
            else:
                bad_checks += 1
                if bad_checks >= cfg.patience:
                    report.stopped_early = True
                    break

    if best_params is not None:
        model.params = best_params
    elif report.epochs_run:
        report.best_epoch = report.epochs_run
    report.flagged_negatives = flagged[0]
    report.wall_time = time.perf_counter() - started
    return model, report
