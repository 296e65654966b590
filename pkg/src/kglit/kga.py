"""Quantile-hierarchy augmentation: literals become links to chained bin entities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, KGLitError
from .graph import KnowledgeGraph

CHILD_OF = "kga:child_of"
NEXT = "kga:next"


def has_relation(attr: str) -> str:
    return f"kga:has:{attr}"


def bin_entity(attr: str, level: int, index: int) -> str:
    return f"kga:{attr}:L{level}:B{index}"


@dataclass(frozen=True, eq=False)
class QuantileHierarchy:
    """Nested equal-population bins of one attribute.

    ``levels[l - 1]`` holds the ``branching**l - 1`` inner boundaries of
    level ``l``. Bin ``k`` of a level is the interval ``(b[k-1], b[k]]``; the
    first bin is unbounded below and the last unbounded above, so values
    outside the fitted range still get a bin.
    """

    attr: str
    branching: int
    levels: tuple[np.ndarray, ...]

    @property
    def depth(self) -> int:
        return len(self.levels)

    def n_bins(self, level: int) -> int:
        return self.branching ** level

    def bin_of(self, values, level: int) -> np.ndarray:
        """Bin index at ``level`` (1-based): the number of boundaries strictly below the value."""
        return np.searchsorted(self.levels[level - 1], np.asarray(values, dtype=np.float64), side="left")

    def parent(self, index, level: int):
        return np.asarray(index) // self.branching

    def bin_entities(self) -> list[str]:
        return [
            bin_entity(self.attr, level, k)
            for level in range(1, self.depth + 1)
            for k in range(self.n_bins(level))
        ]


def fit_hierarchy(values, branching: int = 4, depth: int = 3, attr: str = "") -> QuantileHierarchy:
    """Empirical quantile boundaries for every level.

    With ``n`` sorted values and ``B = branching**level`` bins, boundary ``k``
    is the largest value of the first ``floor(k * n / B)`` values. Level ``l``
    boundaries are therefore a subset of level ``l + 1`` boundaries, which
    makes every fine bin nest inside exactly one coarse bin.
    """
    v = np.sort(np.asarray(values, dtype=np.float64).ravel())
    if v.size == 0:
        raise ConfigError("cannot fit a quantile hierarchy on an empty value list")
    if branching < 2 or depth < 1:
        raise ConfigError(f"need branching >= 2 and depth >= 1, got {branching}, {depth}")
    n = v.size
    levels = []
    for level in range(1, depth + 1):
        n_bins = branching ** level
        k = np.arange(1, n_bins)
        idx = np.maximum(k * n // n_bins - 1, 0)
        b = v[idx]
        b.setflags(write=False)
        levels.append(b)
    return QuantileHierarchy(attr=attr, branching=branching, levels=tuple(levels))


def fit_all(g: KnowledgeGraph, branching: int = 4, depth: int = 3) -> dict[str, QuantileHierarchy]:
    """One hierarchy per attribute over the (training-side) literal values."""
    out = {}
    for a, name in enumerate(g.attr_relations):
        vals = g.attr_values[g.attributive[:, 1] == a]
        if vals.size:
            out[name] = fit_hierarchy(vals, branching, depth, attr=name)
    return out


def structure_triples(h: QuantileHierarchy) -> list[tuple[str, str, str]]:
    """Parent links between consecutive levels and ``next`` chains within each level."""
    rows = []
    for level in range(1, h.depth + 1):
        n = h.n_bins(level)
        if level > 1:
            rows += [
                (bin_entity(h.attr, level, k), CHILD_OF, bin_entity(h.attr, level - 1, k // h.branching))
                for k in range(n)
            ]
        rows += [(bin_entity(h.attr, level, k), NEXT, bin_entity(h.attr, level, k + 1)) for k in range(n - 1)]
    return rows


def augment(g: KnowledgeGraph, hierarchies: dict[str, QuantileHierarchy]) -> KnowledgeGraph:
    """Turn every attributive triple into a training link to its finest bin.

    The output has no attributive triples. Bin entities and the relations
    ``kga:has:<attr>``, ``kga:child_of`` and ``kga:next`` join the vocabularies.
    """
    if len(g.attributive) == 0:
        return g.replace(attributive=np.zeros((0, 2), dtype=np.int64), attr_values=np.zeros(0))
    present = sorted({g.attr_relations[a] for a in np.unique(g.attributive[:, 1]).tolist()})
    missing = [a for a in present if a not in hierarchies]
    if missing:
        raise KGLitError(f"no fitted hierarchy for attributes {missing}")

    added = []
    for a_name in present:
        h = hierarchies[a_name]
        rows = g.attributive[:, 1] == g.attr_index[a_name]
        subj = g.attributive[rows, 0]
        bins = h.bin_of(g.attr_values[rows], h.depth)
        rel = has_relation(a_name)
        added += [
            (g.entities[s], rel, bin_entity(a_name, h.depth, b))
            for s, b in zip(subj.tolist(), bins.tolist())
        ]
        added += structure_triples(h)
    return KnowledgeGraph.from_labeled(
        g.labeled_split("train") + added, g.labeled_split("valid"), g.labeled_split("test"), ()
    )


def dump_hierarchies(hierarchies: dict[str, QuantileHierarchy], path) -> None:
    """Tab-separated audit sidecar: attribute, level, boundary index, boundary value."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("attr\tlevel\tindex\tboundary\n")
        for name in sorted(hierarchies):
            h = hierarchies[name]
            for level, bounds in enumerate(h.levels, 1):
                for k, b in enumerate(bounds.tolist()):
                    fh.write(f"{name}\t{level}\t{k}\t{b!r}\n")
