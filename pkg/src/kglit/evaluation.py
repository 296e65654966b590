"""Filtered link-prediction ranking, MR/MRR/Hits@k, and synthetic-task accuracy."""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .datagen import SyntheticVocab
from .errors import KGLitError
from .graph import FilterIndex, KnowledgeGraph

METRICS = ("mr", "mrr", "hits1", "hits3", "hits10")
_CHUNK = 256


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("KGLIT_WORKERS", "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# Ranking


@dataclass(frozen=True)
class RankList:
    """Subject-corrupted and object-corrupted rank of every evaluated triple."""

    subject: np.ndarray
    object: np.ndarray

    def pooled(self) -> np.ndarray:
        return np.concatenate([self.subject, self.object])

    def __len__(self):
        return len(self.subject)


def _anchor_target(triples, side):
    if side == "object":
        return triples[:, 0], triples[:, 2]
    return triples[:, 2], triples[:, 0]


def rank_triples(model, triples, side, filt: FilterIndex, feats=None) -> np.ndarray:
    """Filtered rank of each triple's true entity on ``side`` (mid-rank ties)."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if len(triples) == 0:
        return np.zeros(0, dtype=np.int64)

    def work(start):
        chunk = triples[start:start + _CHUNK]
        anchors, targets = _anchor_target(chunk, side)
        scores = np.ascontiguousarray(model.score_candidates(anchors, chunk[:, 1], side, feats))
        ptr, idx = filt.exclusions(chunk, side)
        return kernels.filtered_ranks(scores, np.ascontiguousarray(targets), ptr, idx)

    starts = range(0, len(triples), _CHUNK)
    n = _workers()
    if n > 1:
        with ThreadPoolExecutor(n) as pool:
            parts = list(pool.map(work, starts))
    else:
        parts = [work(s) for s in starts]
    return np.concatenate(parts)


def filtered_rank(model, triple, side, filt: FilterIndex, feats=None) -> int:
    return int(rank_triples(model, np.asarray([triple]), side, filt, feats)[0])


def oracle_rank(scores: np.ndarray, target: int, known: Sequence[int]) -> int:
    """Brute-force reference: drop known non-target candidates, sort, read off the tie block."""
    known = set(int(k) for k in known) - {int(target)}
    kept = [float(scores[c]) for c in range(len(scores)) if c not in known]
    ordered = sorted(kept, reverse=True)
    t = float(scores[target])
    first = ordered.index(t)  # 0-based position of the tie block
    last = len(ordered) - 1 - ordered[::-1].index(t)
    others_tied = last - first
    return first + 1 + (others_tied + 1) // 2


def rank_list(model, triples, filt: FilterIndex, feats=None) -> RankList:
    return RankList(
        subject=rank_triples(model, triples, "subject", filt, feats),
        object=rank_triples(model, triples, "object", filt, feats),
    )


# ---------------------------------------------------------------------------
# Reports


@dataclass
class EvalReport:
    mr: float
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    n_test: int
    acc: Optional[float] = None
    n_runs: int = 1
    std: Optional[dict] = field(default=None)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["acc"] is None:
            del d["acc"]
        if d["std"] is None:
            del d["std"]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        keys = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in keys})


def metrics(ranks) -> EvalReport:
    """MR, MRR and Hits@{1,3,10} over all ranks (both corruption sides when given a RankList)."""
    if isinstance(ranks, RankList):
        n_test = len(ranks)
        r = ranks.pooled()
    else:
        r = np.asarray(ranks)
        n_test = len(r)
    if r.size == 0:
        raise KGLitError("cannot compute metrics on an empty rank list")
    if r.min() < 1:
        raise KGLitError("ranks must be >= 1")
    r = r.astype(np.float64)
    return EvalReport(
        mr=float(np.mean(r)),
        mrr=float(np.mean(1.0 / r)),
        hits1=float(np.mean(r <= 1)),
        hits3=float(np.mean(r <= 3)),
        hits10=float(np.mean(r <= 10)),
        n_test=n_test,
    )


def evaluate(model, g: KnowledgeGraph, split="test", feats=None, filt: FilterIndex = None) -> EvalReport:
    filt = filt if filt is not None else FilterIndex(g.all_relational)
    return metrics(rank_list(model, g.split(split), filt, feats))


# ---------------------------------------------------------------------------
# Synthetic accuracy


def accuracy_from_scores(score_high, score_low, is_high) -> float:
    """Correct when a high entity scores the high class at least as well, or a low one strictly better."""
    score_high = np.asarray(score_high)
    score_low = np.asarray(score_low)
    is_high = np.asarray(is_high, dtype=bool)
    if is_high.size == 0:
        raise KGLitError("no synthetic entities to score")
    true_high = np.sum(is_high & (score_high >= score_low))
    true_low = np.sum(~is_high & (score_low > score_high))
    return float((true_high + true_low) / is_high.size)


def synthetic_triples(g: KnowledgeGraph, vocab: SyntheticVocab = SyntheticVocab(), split="test") -> np.ndarray:
    """Class triples of ``split`` (or every split with ``"all"``)."""
    missing = [s for s in (vocab.high, vocab.low) if s not in g.entity_index]
    if vocab.relation not in g.relation_index:
        missing.append(vocab.relation)
    if missing:
        raise KGLitError(f"synthetic vocabulary missing from the graph: {missing}")
    t = g.all_relational if split == "all" else g.split(split)
    return t[t[:, 1] == g.relation_index[vocab.relation]]


def has_synthetic_vocab(g: KnowledgeGraph, vocab: SyntheticVocab = SyntheticVocab()) -> bool:
    return vocab.relation in g.relation_index and vocab.high in g.entity_index and vocab.low in g.entity_index


def synthetic_acc(model, g: KnowledgeGraph, feats=None, vocab: SyntheticVocab = SyntheticVocab(), split="test") -> float:
    """Fraction of enriched entities whose correct class entity outscores the other.

    Evaluated on the class triples held out in ``split``; their objects give
    the true class. Ties count for the high class.
    """
    t = synthetic_triples(g, vocab, split)
    hi, lo = g.entity_index[vocab.high], g.entity_index[vocab.low]
    scores = model.score_candidates(t[:, 0], t[:, 1], "object", feats)
    return accuracy_from_scores(scores[:, hi], scores[:, lo], t[:, 2] == hi)


# ---------------------------------------------------------------------------
# Aggregation and serialization


def aggregate_runs(reports: Sequence[EvalReport]) -> EvalReport:
    """Mean and sample standard deviation per metric; a single run reports std 0."""
    if not reports:
        raise KGLitError("no reports to aggregate")
    keys = list(METRICS) + (["acc"] if all(r.acc is not None for r in reports) else [])
    mean, std = {}, {}
    for k in keys:
        vals = np.array([getattr(r, k) for r in reports], dtype=np.float64)
        # identical runs must report exactly the shared value with zero spread
        if np.all(vals == vals[0]):
            mean[k], std[k] = float(vals[0]), 0.0
            continue
        mean[k] = float(vals.mean())
        std[k] = float(vals.std(ddof=1))
    return EvalReport(
        **{k: mean[k] for k in METRICS},
        n_test=reports[0].n_test,
        acc=mean.get("acc"),
        n_runs=len(reports),
        std=std,
    )


def write_report(report: EvalReport, path, extra: Optional[dict] = None) -> None:
    """Flat JSON document (sorted keys) so identical runs give identical bytes."""
    d = report.to_dict()
    if extra:
        d.update(extra)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(d, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_report(path) -> tuple[EvalReport, dict]:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    return EvalReport.from_dict(d), d


AGGREGATE_COLUMNS = ("model", "dataset", "variant", "metric", "mean", "std", "n_runs")


def aggregate_rows(agg: EvalReport, model="", dataset="", variant="") -> list[dict]:
    keys = list(METRICS) + (["acc"] if agg.acc is not None else [])
    std = agg.std or {}
    return [
        {"model": model, "dataset": dataset, "variant": variant, "metric": k,
         "mean": repr(float(getattr(agg, k))), "std": repr(float(std.get(k, 0.0))), "n_runs": agg.n_runs}
        for k in keys
    ]


def write_aggregate_csv(rows: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=AGGREGATE_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
