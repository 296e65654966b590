"""In-memory knowledge graph, file I/O, literal feature matrix and the ranking filter."""

from __future__ import annotations

import hashlib
import logging
from collections import defaultdict
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import KGLitError, ParseError, UnknownSymbolError
from .npzio import write_npz
from .rng import rng_for

log = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
DATASET_FILES = {"train": "train.txt", "valid": "valid.txt", "test": "test.txt", "literals": "literals.txt"}
CACHE_VERSION = "kglit-graph/1"


def _frozen(arr, dtype, shape_tail):
    out = np.array(arr, dtype=dtype).reshape((-1,) + shape_tail)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class KnowledgeGraph:
    """Relational triples (split into train/valid/test) plus attributive triples.

    Triples are stored as index arrays against three sorted vocabularies.
    Attributive triples are training-side only and are never split.
    """

    entities: tuple[str, ...]
    entity_relations: tuple[str, ...]
    attr_relations: tuple[str, ...]
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    attributive: np.ndarray  # (m, 2): subject index, attribute index
    attr_values: np.ndarray  # (m,)

    def __post_init__(self):
        for name in SPLITS:
            object.__setattr__(self, name, _frozen(getattr(self, name), np.int64, (3,)))
        object.__setattr__(self, "attributive", _frozen(self.attributive, np.int64, (2,)))
        object.__setattr__(self, "attr_values", _frozen(self.attr_values, np.float64, ()))
        self._validate()

    def _validate(self):
        n_e, n_r, n_a = self.n_entities, self.n_relations, self.n_attrs
        for name in SPLITS:
            t = getattr(self, name)
            if t.size and (t.min() < 0 or t[:, [0, 2]].max() >= n_e or t[:, 1].max() >= n_r):
                raise KGLitError(f"{name} split has out-of-range indices")
            if len(np.unique(t, axis=0)) != len(t):
                raise KGLitError(f"{name} split contains duplicate triples")
        a = self.attributive
        if a.size and (a.min() < 0 or a[:, 0].max() >= n_e or a[:, 1].max() >= n_a):
            raise KGLitError("attributive triples have out-of-range indices")
        if len(a) != len(self.attr_values):
            raise KGLitError("attributive index and value arrays differ in length")
        if not np.all(np.isfinite(self.attr_values)):
            raise KGLitError("attributive values must be finite")

    @property
    def n_entities(self) -> int:
        return len(self.entities)

    @property
    def n_relations(self) -> int:
        return len(self.entity_relations)

    @property
    def n_attrs(self) -> int:
        return len(self.attr_relations)

    @cached_property
    def entity_index(self) -> dict[str, int]:
        return {e: i for i, e in enumerate(self.entities)}

    @cached_property
    def relation_index(self) -> dict[str, int]:
        return {r: i for i, r in enumerate(self.entity_relations)}

    @cached_property
    def attr_index(self) -> dict[str, int]:
        return {a: i for i, a in enumerate(self.attr_relations)}

    def split(self, name: str) -> np.ndarray:
        if name not in SPLITS:
            raise KeyError(name)
        return getattr(self, name)

    @property
    def all_relational(self) -> np.ndarray:
        return np.concatenate([self.train, self.valid, self.test])

    def labeled_split(self, name: str) -> list[tuple[str, str, str]]:
        e, r = self.entities, self.entity_relations
        return [(e[s], r[p], e[o]) for s, p, o in self.split(name).tolist()]

    def labeled_attributive(self) -> list[tuple[str, str, float]]:
        e, a = self.entities, self.attr_relations
        return [
            (e[s], a[k], v)
            for (s, k), v in zip(self.attributive.tolist(), self.attr_values.tolist())
        ]

    @classmethod
    def from_labeled(
        cls,
        train: Iterable[tuple[str, str, str]],
        valid: Iterable[tuple[str, str, str]] = (),
        test: Iterable[tuple[str, str, str]] = (),
        attributive: Iterable[tuple[str, str, float]] = (),
    ) -> "KnowledgeGraph":
        """Build a graph from string triples; vocabularies are sorted lexicographically.

        Duplicate triples within a split are dropped (first occurrence kept).
        """
        splits = {}
        for name, rows in zip(SPLITS, (train, valid, test)):
            seen = {}
            for row in rows:
                seen.setdefault(tuple(row), None)
            splits[name] = list(seen)
        attrs = [(s, a, float(v)) for s, a, v in attributive]

        ents, rels, attr_rels = set(), set(), set()
        for rows in splits.values():
            for s, p, o in rows:
                ents.add(s)
                ents.add(o)
                rels.add(p)
        for s, a, _ in attrs:
            ents.add(s)
            attr_rels.add(a)
        entities = tuple(sorted(ents))
        relations = tuple(sorted(rels))
        attr_relations = tuple(sorted(attr_rels))
        ei = {e: i for i, e in enumerate(entities)}
        ri = {r: i for i, r in enumerate(relations)}
        ai = {a: i for i, a in enumerate(attr_relations)}

        def encode(rows):
            return [(ei[s], ri[p], ei[o]) for s, p, o in rows]

        return cls(
            entities=entities,
            entity_relations=relations,
            attr_relations=attr_relations,
            train=encode(splits["train"]),
            valid=encode(splits["valid"]),
            test=encode(splits["test"]),
            attributive=[(ei[s], ai[a]) for s, a, _ in attrs],
            attr_values=[v for _, _, v in attrs],
        )

    def replace(self, **splits) -> "KnowledgeGraph":
        """Copy with some index arrays swapped; vocabularies are kept as-is."""
        fields = {
            "entities": self.entities,
            "entity_relations": self.entity_relations,
            "attr_relations": self.attr_relations,
            "train": self.train,
            "valid": self.valid,
            "test": self.test,
            "attributive": self.attributive,
            "attr_values": self.attr_values,
        }
        fields.update(splits)
        return KnowledgeGraph(**fields)

    def content_hash(self) -> str:
        """SHA-256 over vocabularies and triple arrays; identifies a dataset."""
        h = hashlib.sha256()
        for vocab in (self.entities, self.entity_relations, self.attr_relations):
            h.update("\x1f".join(vocab).encode())
            h.update(b"\x1e")
        for arr in (self.train, self.valid, self.test, self.attributive, self.attr_values):
            h.update(np.ascontiguousarray(arr).tobytes())
            h.update(b"\x1e")
        return h.hexdigest()


# ---------------------------------------------------------------------------
# Triple files


def _read_rows(path, kind):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise ParseError(path, lineno, f"expected 3 tab-separated columns, got {len(cols)}")
            if kind == "attributive":
                try:
                    value = float(cols[2])
                except ValueError:
                    raise ParseError(path, lineno, f"value {cols[2]!r} is not a real number") from None
                if not np.isfinite(value):
                    raise ParseError(path, lineno, f"value {cols[2]!r} is not finite")
                rows.append((cols[0], cols[1], value))
            else:
                rows.append((cols[0], cols[1], cols[2]))
    return rows


def load_graph(
    train_file,
    valid_file,
    test_file,
    attributive_file=None,
    unknown: str = "reject",
) -> KnowledgeGraph:
    """Parse tab-separated triple files into a validated graph.

    ``unknown`` controls valid/test triples mentioning entities or relations
    absent from the training triples and literal subjects: ``"reject"`` raises
    :class:`UnknownSymbolError`, ``"drop"`` discards the triple with a warning.
    """
    if unknown not in ("reject", "drop"):
        raise ValueError(f"unknown policy must be 'reject' or 'drop', not {unknown!r}")
    train = _read_rows(train_file, "relational")
    attributive = _read_rows(attributive_file, "attributive") if attributive_file else []

    known_e = {s for s, _, _ in train} | {o for _, _, o in train} | {s for s, _, _ in attributive}
    known_r = {p for _, p, _ in train}
    evaluated = []
    for path in (valid_file, test_file):
        kept = []
        for s, p, o in _read_rows(path, "relational"):
            missing = [x for x in (s, o) if x not in known_e] + ([p] if p not in known_r else [])
            if missing:
                if unknown == "reject":
                    raise UnknownSymbolError(
                        f"{path}: triple ({s}, {p}, {o}) uses symbols unseen in training: {missing}"
                    )
                log.warning("%s: dropping (%s, %s, %s): unseen symbols %s", path, s, p, o, missing)
                continue
            kept.append((s, p, o))
        evaluated.append(kept)

    for name, rows in zip(SPLITS, (train, *evaluated)):
        if len(set(rows)) != len(rows):
            log.warning("%s split: dropping %d duplicate triples", name, len(rows) - len(set(rows)))
    return KnowledgeGraph.from_labeled(train, evaluated[0], evaluated[1], attributive)


def load_dataset(directory, unknown: str = "reject") -> KnowledgeGraph:
    """Load ``train.txt``/``valid.txt``/``test.txt``/``literals.txt`` from a directory.

    A missing literals file means an empty attributive set.
    """
    d = Path(directory)
    lit = d / DATASET_FILES["literals"]
    return load_graph(
        d / DATASET_FILES["train"],
        d / DATASET_FILES["valid"],
        d / DATASET_FILES["test"],
        lit if lit.exists() else None,
        unknown=unknown,
    )


def _fmt(value: float) -> str:
    return repr(float(value))


def save_dataset(g: KnowledgeGraph, directory) -> dict[str, Path]:
    """Write the graph in the four-file tab-separated layout; returns the written paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name in SPLITS:
        path = d / DATASET_FILES[name]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(f"{s}\t{p}\t{o}\n" for s, p, o in g.labeled_split(name))
        paths[name] = path
    path = d / DATASET_FILES["literals"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.writelines(f"{s}\t{a}\t{_fmt(v)}\n" for s, a, v in g.labeled_attributive())
    paths["literals"] = path
    return paths


def save_cache(g: KnowledgeGraph, path) -> None:
    """Binary cache (``.npz``) that stores the vocabularies in index order."""
    write_npz(
        path,
        dict(
            version=np.array(CACHE_VERSION),
            entities=np.array(g.entities, dtype=str),
            entity_relations=np.array(g.entity_relations, dtype=str),
            attr_relations=np.array(g.attr_relations, dtype=str),
            train=g.train,
            valid=g.valid,
            test=g.test,
            attributive=g.attributive,
            attr_values=g.attr_values,
        ),
    )


def load_cache(path) -> KnowledgeGraph:
    with np.load(path, allow_pickle=False) as z:
        version = str(z["version"])
        if version != CACHE_VERSION:
            raise KGLitError(f"{path}: unsupported cache version {version!r}")
        return KnowledgeGraph(
            entities=tuple(z["entities"].tolist()),
            entity_relations=tuple(z["entity_relations"].tolist()),
            attr_relations=tuple(z["attr_relations"].tolist()),
            train=z["train"],
            valid=z["valid"],
            test=z["test"],
            attributive=z["attributive"],
            attr_values=z["attr_values"],
        )


# ---------------------------------------------------------------------------
# Literal features


@dataclass(frozen=True, eq=False)
class LiteralFeatureMatrix:
    values: np.ndarray  # (|E|, |R_A|) normalized, 0 where absent
    present: np.ndarray  # (|E|, |R_A|) bool

    def __post_init__(self):
        for name in ("values", "present"):
            arr = np.array(getattr(self, name), dtype=np.float64 if name == "values" else bool)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.values.shape != self.present.shape:
            raise KGLitError("feature values and presence mask differ in shape")

    @property
    def n_attrs(self) -> int:
        return self.values.shape[1]


def normalize_features(raw: np.ndarray, mask: np.ndarray) -> LiteralFeatureMatrix:
    """Per-attribute min-max scaling over present cells; constant columns map to 0.5."""
    raw = np.asarray(raw, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    out = np.zeros_like(raw)
    for a in range(raw.shape[1]):
        col = mask[:, a]
        if not col.any():
            continue
        v = raw[col, a]
        lo, hi = v.min(), v.max()
        out[col, a] = 0.5 if hi == lo else (v - lo) / (hi - lo)
    return LiteralFeatureMatrix(values=out, present=mask)


def raw_feature_matrix(g: KnowledgeGraph, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Pick one raw value per (entity, attribute) uniformly from its candidates."""
    raw = np.zeros((g.n_entities, g.n_attrs))
    mask = np.zeros((g.n_entities, g.n_attrs), dtype=bool)
    if len(g.attributive) == 0:
        return raw, mask
    subj, attr = g.attributive[:, 0], g.attributive[:, 1]
    order = np.lexsort((np.arange(len(subj)), attr, subj))
    s_sorted, a_sorted = subj[order], attr[order]
    starts = np.flatnonzero(
        np.r_[True, (s_sorted[1:] != s_sorted[:-1]) | (a_sorted[1:] != a_sorted[:-1])]
    )
    counts = np.diff(np.r_[starts, len(order)])
    u = rng_for(seed, "feature-choice").random(len(starts))
    pick = order[starts + np.minimum((u * counts).astype(np.int64), counts - 1)]
    raw[subj[pick], attr[pick]] = g.attr_values[pick]
    mask[subj[pick], attr[pick]] = True
    return raw, mask


def build_feature_matrix(g: KnowledgeGraph, seed: int) -> LiteralFeatureMatrix:
    return normalize_features(*raw_feature_matrix(g, seed))


# ---------------------------------------------------------------------------
# Filtering


class FilterIndex:
    """Membership lookup over every relational triple in every split."""

    def __init__(self, triples: np.ndarray):
        triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
        self._triples = {tuple(t) for t in triples.tolist()}
        objs = defaultdict(list)
        subs = defaultdict(list)
        for s, p, o in self._triples:
            objs[(s, p)].append(o)
            subs[(p, o)].append(s)
        self._objects = {k: np.array(sorted(v), dtype=np.int64) for k, v in objs.items()}
        self._subjects = {k: np.array(sorted(v), dtype=np.int64) for k, v in subs.items()}

    def __len__(self):
        return len(self._triples)

    def contains(self, s: int, p: int, o: int) -> bool:
        return (int(s), int(p), int(o)) in self._triples

    def __contains__(self, triple) -> bool:
        return self.contains(*triple)

    _EMPTY = np.zeros(0, dtype=np.int64)

    def objects(self, s: int, p: int) -> np.ndarray:
        return self._objects.get((int(s), int(p)), self._EMPTY)

    def subjects(self, p: int, o: int) -> np.ndarray:
        return self._subjects.get((int(p), int(o)), self._EMPTY)

    def exclusions(self, triples: np.ndarray, side: str) -> tuple[np.ndarray, np.ndarray]:
        """CSR lists of known candidates to skip when ranking each triple on ``side``.

        The true answer itself is left in the lists; the rank kernels skip the
        target explicitly.
        """
        if side == "object":
            lists = [self.objects(s, p) for s, p, _ in triples.tolist()]
        elif side == "subject":
            lists = [self.subjects(p, o) for _, p, o in triples.tolist()]
        else:
            raise ValueError(f"side must be 'subject' or 'object', not {side!r}")
        ptr = np.zeros(len(lists) + 1, dtype=np.int64)
        ptr[1:] = np.cumsum([len(x) for x in lists])
        idx = np.concatenate(lists) if lists else self._EMPTY
        return ptr, idx.astype(np.int64)


def filter_index(g: KnowledgeGraph) -> FilterIndex:
    return FilterIndex(g.all_relational)


def encode_keys(triples: np.ndarray, n_entities: int, n_relations: int) -> np.ndarray:
    """Sorted unique int64 keys ``(s * R + p) * E + o`` for fast membership tests."""
    t = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    return np.unique((t[:, 0] * n_relations + t[:, 1]) * n_entities + t[:, 2])


def index_triples(g: KnowledgeGraph, rows: Sequence[tuple[str, str, str]]) -> np.ndarray:
    ei, ri = g.entity_index, g.relation_index
    return np.array([(ei[s], ri[p], ei[o]) for s, p, o in rows], dtype=np.int64).reshape(-1, 3)
