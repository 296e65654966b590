"""Dataset transforms: semi-synthetic enrichment, literal ablations, relational ablation.

Every randomized transform is a pure function of (graph, parameters, seed);
each draws from its own stream so composing transforms never correlates them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ConfigError, InfeasibleAblationError
from .graph import KnowledgeGraph
from .rng import rng_for


class SyntheticVocab(NamedTuple):
    """Symbols the enrichment adds: the literal attribute, the class relation and the two classes."""

    attr: str = "/synthetic/value"
    relation: str = "/synthetic/class"
    high: str = "/synthetic/high"
    low: str = "/synthetic/low"


@dataclass(frozen=True)
class SyntheticSpec:
    seed: int = 0
    threshold: float = 0.5
    # restrict the enriched entities to subjects of this relation; None keeps all
    entity_filter_relation: Optional[str] = None
    entity_filter: Optional[Callable[[KnowledgeGraph], np.ndarray]] = field(default=None, compare=False)
    vocab: SyntheticVocab = SyntheticVocab()
    split_fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)

    def __post_init__(self):
        if abs(sum(self.split_fractions) - 1.0) > 1e-9 or min(self.split_fractions) < 0:
            raise ConfigError(f"split fractions {self.split_fractions} must be non-negative and sum to 1")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError(f"threshold must lie in (0, 1), got {self.threshold}")
        if len(set(self.vocab)) != 4:
            raise ConfigError("synthetic symbols must be pairwise distinct")

    def select_entities(self, g: KnowledgeGraph) -> np.ndarray:
        if self.entity_filter is not None:
            return np.unique(np.asarray(self.entity_filter(g), dtype=np.int64))
        if self.entity_filter_relation is not None:
            return subjects_of(self.entity_filter_relation)(g)
        return np.arange(g.n_entities, dtype=np.int64)


def subjects_of(relation: str) -> Callable[[KnowledgeGraph], np.ndarray]:
    """Entity filter: every entity that is the subject of ``relation`` in any split."""

    def select(g: KnowledgeGraph) -> np.ndarray:
        if relation not in g.relation_index:
            raise ConfigError(f"entity filter relation {relation!r} not in the graph")
        t = g.all_relational
        return np.unique(t[t[:, 1] == g.relation_index[relation], 0])

    return select


def split_counts(n: int, fractions) -> tuple[int, int, int]:
    n_train = int(round(fractions[0] * n))
    n_valid = min(int(round(fractions[1] * n)), n - n_train)
    return n_train, n_valid, n - n_train - n_valid


def synth_enrich(g: KnowledgeGraph, spec: SyntheticSpec) -> KnowledgeGraph:
    """Replace the literals by one uniform value per selected entity and add class triples.

    Each selected entity gets ``(e, vocab.attr, v)`` with ``v ~ U[0, 1)`` and
    ``(e, vocab.relation, high)`` if ``v > threshold`` else ``(..., low)``.
    The class triples are shuffled and split, then appended to the splits.
    """
    chosen = spec.select_entities(g)
    if chosen.size == 0:
        raise ConfigError("entity filter selected no entities")
    taken = set(g.entities) | set(g.entity_relations) | set(g.attr_relations)
    clash = [s for s in spec.vocab if s in taken]
    if clash:
        raise ConfigError(f"synthetic symbols already used in the graph: {clash}")

    voc = spec.vocab
    values = rng_for(spec.seed, "synthetic-values").random(chosen.size)
    names = [g.entities[i] for i in chosen.tolist()]
    attributive = [(e, voc.attr, v) for e, v in zip(names, values.tolist())]
    cls = np.where(values > spec.threshold, voc.high, voc.low)
    class_triples = [(e, voc.relation, c) for e, c in zip(names, cls.tolist())]

    order = rng_for(spec.seed, "synthetic-split").permutation(len(class_triples))
    n_train, n_valid, _ = split_counts(len(order), spec.split_fractions)
    parts = np.split(order, [n_train, n_train + n_valid])
    new = [[class_triples[i] for i in part.tolist()] for part in parts]
    return KnowledgeGraph.from_labeled(
        g.labeled_split("train") + new[0],
        g.labeled_split("valid") + new[1],
        g.labeled_split("test") + new[2],
        attributive,
    )


# ---------------------------------------------------------------------------
# Literal ablations

ABLATION_KINDS = ("random-literal", "random-literal-values-only", "existence", "relational-reduce")


@dataclass(frozen=True)
class AblationSpec:
    kind: str
    seed: int = 0
    alpha: Optional[float] = None
    include_eval_splits: bool = False

    def __post_init__(self):
        if self.kind not in ABLATION_KINDS:
            raise ConfigError(f"unknown ablation kind {self.kind!r}; expected one of {ABLATION_KINDS}")
        if (self.alpha is not None) != (self.kind == "relational-reduce"):
            raise ConfigError("alpha is required for relational-reduce and forbidden otherwise")


def apply_ablation(g: KnowledgeGraph, spec: AblationSpec) -> KnowledgeGraph:
    if spec.kind == "random-literal":
        return ablate_literals_random(g, spec.seed)
    if spec.kind == "random-literal-values-only":
        return ablate_literals_values_only(g, spec.seed)
    if spec.kind == "existence":
        return ablate_literals_existence(g)
    return ablate_relational(g, spec.alpha, spec.seed, include_eval_splits=spec.include_eval_splits)


def ablate_literals_random(g: KnowledgeGraph, seed: int) -> KnowledgeGraph:
    """Complete literal table: every entity gets a U[0, 1) value for every attribute."""
    if g.n_attrs == 0:
        raise ConfigError("graph has no attributive relations to ablate")
    ent, att = np.meshgrid(np.arange(g.n_entities), np.arange(g.n_attrs), indexing="ij")
    pairs = np.stack([ent.ravel(), att.ravel()], axis=1)
    values = rng_for(seed, "random-literal").random(len(pairs))
    return g.replace(attributive=pairs, attr_values=values)


def ablate_literals_values_only(g: KnowledgeGraph, seed: int) -> KnowledgeGraph:
    """Keep which (entity, attribute) pairs exist; redraw every value from U[0, 1)."""
    values = rng_for(seed, "random-literal-values-only").random(len(g.attributive))
    return g.replace(attr_values=values)


def ablate_literals_existence(g: KnowledgeGraph) -> KnowledgeGraph:
    """One ``(e, a, 1.0)`` per pair that had at least one value."""
    pairs = np.unique(g.attributive, axis=0) if len(g.attributive) else g.attributive
    return g.replace(attributive=pairs, attr_values=np.ones(len(pairs)))


# ---------------------------------------------------------------------------
# Relational ablation


def reduced_size(n: int, alpha: float) -> int:
    """``ceil((1 - alpha) * n)`` evaluated exactly on the decimal value of ``alpha``."""
    a = Fraction(repr(float(alpha)))
    return n - int(a * n)  # int() floors for non-negative fractions


def coverage_protection(triples: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Greedy cover: indices of triples keeping every entity and relation present.

    Entities are visited in random order; one random incident triple is
    protected for each entity not yet covered, then the same for relations.
    """
    s, p, o = triples[:, 0], triples[:, 1], triples[:, 2]
    n_ent = int(max(s.max(), o.max())) + 1
    n_rel = int(p.max()) + 1
    incident = [[] for _ in range(n_ent)]
    for i, (a, b) in enumerate(zip(s.tolist(), o.tolist())):
        incident[a].append(i)
        if b != a:
            incident[b].append(i)
    by_rel = [[] for _ in range(n_rel)]
    for i, r in enumerate(p.tolist()):
        by_rel[r].append(i)

    ent_cov = np.zeros(n_ent, dtype=bool)
    rel_cov = np.zeros(n_rel, dtype=bool)
    protected = []

    def protect(i):
        protected.append(i)
        ent_cov[s[i]] = ent_cov[o[i]] = True
        rel_cov[p[i]] = True

    for e in rng.permutation(n_ent).tolist():
        if incident[e] and not ent_cov[e]:
            protect(incident[e][rng.integers(len(incident[e]))])
    for r in rng.permutation(n_rel).tolist():
        if by_rel[r] and not rel_cov[r]:
            protect(by_rel[r][rng.integers(len(by_rel[r]))])
    return np.array(sorted(protected), dtype=np.int64)


def _reduce(triples: np.ndarray, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean keep-mask for ``triples`` after coverage-preserving removal."""
    n = len(triples)
    keep = np.ones(n, dtype=bool)
    target = reduced_size(n, alpha)
    if target == n:
        return keep
    protected = coverage_protection(triples, rng)
    if target < len(protected):
        raise InfeasibleAblationError(alpha, 1.0 - len(protected) / n, len(protected), n)
    free = np.setdiff1d(np.arange(n), protected)
    keep[rng.choice(free, size=n - target, replace=False)] = False
    return keep


def ablate_relational(
    g: KnowledgeGraph, alpha: float, seed: int, include_eval_splits: bool = False
) -> KnowledgeGraph:
    """Remove a fraction ``alpha`` of training triples keeping entity and relation coverage.

    The result keeps ``ceil((1 - alpha) * |train|)`` triples, every entity that
    occurred in training still occurs, and so does every relation.
    With ``include_eval_splits`` the pooled train/valid/test triples are reduced
    instead, each surviving triple staying in its split.
    """
    if not 0.0 <= alpha < 1.0:
        raise ConfigError(f"alpha must lie in [0, 1), got {alpha}")
    rng = rng_for(seed, "relational-reduce")
    if not include_eval_splits:
        if len(g.train) == 0:
            return g
        return g.replace(train=g.train[_reduce(g.train, alpha, rng)])
    pooled = g.all_relational
    if len(pooled) == 0:
        return g
    keep = _reduce(pooled, alpha, rng)
    cuts = np.cumsum([len(g.train), len(g.valid)])
    masks = np.split(keep, cuts)
    return g.replace(train=g.train[masks[0]], valid=g.valid[masks[1]], test=g.test[masks[2]])


# ---------------------------------------------------------------------------
# Fixture graphs


def generate_fixture(
    n_entities: int = 2000,
    n_relations: int = 20,
    n_triples: int = 20000,
    n_attrs: int = 3,
    latent_dim: int = 8,
    sharpness: float = 4.0,
    literal_rate: float = 0.7,
    split_fractions=(0.8, 0.1, 0.1),
    seed: int = 0,
) -> KnowledgeGraph:
    """Random graph drawn from a latent trilinear model, with correlated literals.

    Entities get latent vectors ``u`` and relations diagonal weights ``w``;
    for a random ``(s, r)`` the object is drawn with probability proportional
    to ``exp(sharpness * <u_s, w_r, u_o>)``. Literal ``a_j`` of an entity is a
    noisy copy of one latent coordinate. Valid/test triples whose symbols are
    missing from training are moved to training.
    """
    rng = rng_for(seed, "fixture")
    width = len(str(n_entities - 1))
    names = [f"e{i:0{width}d}" for i in range(n_entities)]
    rels = [f"r{i:02d}" for i in range(n_relations)]
    u = rng.normal(size=(n_entities, latent_dim)) / np.sqrt(latent_dim) * 2.0
    w = rng.normal(size=(n_relations, latent_dim))

    triples = set()
    while len(triples) < n_triples:
        m = min(1024, 2 * (n_triples - len(triples)))
        s = rng.integers(n_entities, size=m)
        r = rng.integers(n_relations, size=m)
        logits = sharpness * ((u[s] * w[r]) @ u.T)
        logits[np.arange(m), s] = -np.inf
        logits -= logits.max(axis=1, keepdims=True)
        cdf = np.cumsum(np.exp(logits), axis=1)
        o = (cdf < rng.random(m)[:, None] * cdf[:, -1:]).sum(axis=1)
        for t in zip(s.tolist(), r.tolist(), o.tolist()):
            if len(triples) < n_triples:
                triples.add(t)
    rows = sorted(triples)
    rows = [rows[i] for i in rng.permutation(len(rows)).tolist()]
    n_train, n_valid, _ = split_counts(len(rows), split_fractions)
    train, valid, test = rows[:n_train], rows[n_train:n_train + n_valid], rows[n_train + n_valid:]

    seen_e = {s for s, _, _ in train} | {o for _, _, o in train}
    seen_r = {r for _, r, _ in train}
    kept = []
    for part in (valid, test):
        ok = []
        for t in part:
            if t[0] in seen_e and t[2] in seen_e and t[1] in seen_r:
                ok.append(t)
            else:
                train.append(t)
                seen_e.update((t[0], t[2]))
                seen_r.add(t[1])
        kept.append(ok)

    attributive = []
    for e in range(n_entities):
        for a in range(n_attrs):
            if rng.random() < literal_rate:
                v = 10.0 * u[e, a % latent_dim] + rng.normal()
                attributive.append((names[e], f"a{a}", round(float(v), 6)))

    def label(part):
        return [(names[s], rels[r], names[o]) for s, r, o in part]

    return KnowledgeGraph.from_labeled(label(train), label(kept[0]), label(kept[1]), attributive)
