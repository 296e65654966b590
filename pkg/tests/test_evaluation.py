import csv
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kglit.datagen import SyntheticSpec, SyntheticVocab, synth_enrich
from kglit.errors import KGLitError
from kglit.evaluation import (
    EvalReport,
    RankList,
    accuracy_from_scores,
    aggregate_rows,
    aggregate_runs,
    evaluate,
    filtered_rank,
    metrics,
    oracle_rank,
    rank_list,
    synthetic_acc,
    write_aggregate_csv,
    write_report,
)
from kglit.graph import FilterIndex, KnowledgeGraph


class TableScorer:
    """Scores looked up in a fixed ``(relation, subject, object)`` tensor, optionally transformed."""

    def __init__(self, table, transform=None):
        self.table = table
        self.transform = transform or (lambda x: x)

    def score_candidates(self, anchors, rels, side, feats=None):
        anchors, rels = np.asarray(anchors), np.asarray(rels)
        out = self.table[rels, anchors, :] if side == "object" else self.table[rels, :, anchors]
        return self.transform(out)


def random_graph(rng, n_ent, n_rel, n_triples):
    rows = {(int(rng.integers(n_ent)), int(rng.integers(n_rel)), int(rng.integers(n_ent))) for _ in range(n_triples)}
    rows = sorted(rows)
    rng.shuffle(rows)
    cut1, cut2 = int(0.6 * len(rows)), int(0.8 * len(rows))
    name = lambda t: (f"e{t[0]:02d}", f"r{t[1]}", f"e{t[2]:02d}")  # noqa: E731
    return KnowledgeGraph.from_labeled([name(t) for t in rows[:cut1]], [name(t) for t in rows[cut1:cut2]],
                                       [name(t) for t in rows[cut2:]])


def test_rank_examples():
    filt = FilterIndex(np.array([[0, 0, 1]]))
    table = np.zeros((1, 5, 5))
    table[0, 0] = [0.0, 9.0, 1.0, 2.0, 3.0]
    assert filtered_rank(TableScorer(table), (0, 0, 1), "object", filt) == 1
    flat = TableScorer(np.zeros((1, 5, 5)))
    assert filtered_rank(flat, (0, 0, 1), "object", filt) == 3


def test_filtering_removes_known_competitors():
    table = np.zeros((1, 4, 4))
    table[0, 0] = [0.0, 5.0, 9.0, 1.0]
    test = (0, 0, 1)
    assert filtered_rank(TableScorer(table), test, "object", FilterIndex(np.array([test]))) == 2
    both = FilterIndex(np.array([test, (0, 0, 2)]))
    assert filtered_rank(TableScorer(table), test, "object", both) == 1


def test_oracle_on_200_random_graphs():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        n_ent = int(rng.integers(2, 51))
        g = random_graph(rng, n_ent, int(rng.integers(1, 4)), int(rng.integers(5, 120)))
        n_ent = g.n_entities
        # coarse integer scores make ties frequent
        table = rng.integers(0, 4, size=(g.n_relations, n_ent, n_ent)).astype(float)
        scorer = TableScorer(table)
        filt = FilterIndex(g.all_relational)
        ranks = rank_list(scorer, g.test, filt)
        for i, (s, p, o) in enumerate(g.test.tolist()):
            assert ranks.object[i] == oracle_rank(table[p, s, :], o, filt.objects(s, p))
            assert ranks.subject[i] == oracle_rank(table[p, :, o], s, filt.subjects(p, o))
            assert 1 <= ranks.object[i] <= n_ent and 1 <= ranks.subject[i] <= n_ent


def test_rank_parallel_matches_serial(monkeypatch):
    rng = np.random.default_rng(3)
    g = random_graph(rng, 40, 2, 900)
    table = rng.normal(size=(g.n_relations, g.n_entities, g.n_entities))
    filt = FilterIndex(g.all_relational)
    import kglit.evaluation as ev

    monkeypatch.setattr(ev, "_CHUNK", 7)
    serial = rank_list(TableScorer(table), g.test, filt)
    monkeypatch.setenv("KGLIT_WORKERS", "3")
    parallel = rank_list(TableScorer(table), g.test, filt)
    np.testing.assert_array_equal(serial.pooled(), parallel.pooled())


@given(st.integers(0, 10_000))
def test_monotone_transform_invariance(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 15, 2, 60)
    table = rng.integers(0, 5, size=(g.n_relations, g.n_entities, g.n_entities)).astype(float)
    filt = FilterIndex(g.all_relational)
    a = rank_list(TableScorer(table), g.test, filt)
    b = rank_list(TableScorer(table, lambda x: np.exp(x / 3.0) * 2.0 + 7.0), g.test, filt)
    np.testing.assert_array_equal(a.pooled(), b.pooled())


@given(st.integers(0, 10_000))
def test_filtering_never_hurts(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, 12, 2, 50)
    table = rng.normal(size=(g.n_relations, g.n_entities, g.n_entities))
    base = FilterIndex(np.concatenate([g.valid, g.test]))
    extended = FilterIndex(g.all_relational)
    a = rank_list(TableScorer(table), g.test, base)
    b = rank_list(TableScorer(table), g.test, extended)
    assert np.all(b.pooled() <= a.pooled())


def test_metric_examples():
    r = metrics(np.array([1, 2, 4]))
    assert r.mr == pytest.approx(7 / 3, abs=1e-12)
    assert r.mrr == pytest.approx(0.58333333333333333, abs=1e-12)
    assert (r.hits1, r.hits3, r.hits10) == pytest.approx((1 / 3, 2 / 3, 1.0), abs=1e-12)
    ones = metrics(np.ones(5, dtype=int))
    assert (ones.mr, ones.mrr, ones.hits1, ones.hits10) == (1.0, 1.0, 1.0, 1.0)
    with pytest.raises(KGLitError):
        metrics(np.array([], dtype=int))
    pooled = metrics(RankList(np.array([1, 3]), np.array([2, 2])))
    assert pooled.n_test == 2 and pooled.mr == 2.0


@given(st.lists(st.integers(1, 500), min_size=1, max_size=50))
def test_metric_invariants(ranks):
    r = metrics(np.array(ranks))
    assert 0 < r.mrr <= 1 and r.mr >= 1
    assert r.hits1 <= r.hits3 <= r.hits10 <= 1


# -- synthetic accuracy ----------------------------------------------------


def test_accuracy_rules():
    is_high = np.array([True, True, False, False])
    assert accuracy_from_scores([1, 1, -1, -1], [-1, -1, 1, 1], is_high) == 1.0
    assert accuracy_from_scores(np.zeros(4), np.zeros(4), is_high) == 0.5  # ties go to the high class
    with pytest.raises(KGLitError):
        accuracy_from_scores([], [], [])


@pytest.fixture(scope="module")
def synth():
    base = KnowledgeGraph.from_labeled([(f"e{i:03d}", "p", f"e{(i * 7 + 1) % 300:03d}") for i in range(300)])
    return synth_enrich(base, SyntheticSpec(seed=4))


def class_table(g, fill):
    v = SyntheticVocab()
    table = np.zeros((g.n_relations, g.n_entities, g.n_entities))
    rel = g.relation_index[v.relation]
    hi, lo = g.entity_index[v.high], g.entity_index[v.low]
    for s, p, o in g.all_relational[g.all_relational[:, 1] == rel].tolist():
        table[p, s, hi], table[p, s, lo] = fill(o == hi)
    return table


def test_synthetic_acc_oracle_and_constant(synth):
    oracle = class_table(synth, lambda high: (1.0, -1.0) if high else (-1.0, 1.0))
    assert synthetic_acc(TableScorer(oracle), synth) == 1.0
    t = synth.test[synth.test[:, 1] == synth.relation_index[SyntheticVocab().relation]]
    share_high = np.mean(t[:, 2] == synth.entity_index[SyntheticVocab().high])
    const = TableScorer(np.zeros((synth.n_relations, synth.n_entities, synth.n_entities)))
    assert synthetic_acc(const, synth) == pytest.approx(share_high)
    every = synth.all_relational[synth.all_relational[:, 1] == synth.relation_index[SyntheticVocab().relation]]
    assert len(every) == 300 and synthetic_acc(TableScorer(oracle), synth, split="all") == 1.0


def test_random_scorer_near_half(synth):
    rng = np.random.default_rng(0)
    g = synth
    table = rng.random((g.n_relations, g.n_entities, g.n_entities))
    acc = synthetic_acc(TableScorer(table), g, split="all")
    n = 300
    assert abs(acc - 0.5) < 3 * np.sqrt(0.25 / n)


def test_synthetic_acc_monotone(synth):
    rng = np.random.default_rng(1)
    table = rng.integers(0, 3, size=(synth.n_relations, synth.n_entities, synth.n_entities)).astype(float)
    a = synthetic_acc(TableScorer(table), synth, split="all")
    b = synthetic_acc(TableScorer(table, lambda x: 2 * x + 7), synth, split="all")
    assert a == b


def test_missing_vocab():
    g = KnowledgeGraph.from_labeled([("a", "p", "b")], [], [("a", "p", "b")])
    with pytest.raises(KGLitError):
        synthetic_acc(TableScorer(np.zeros((1, 2, 2))), g)


# -- aggregation and files ---------------------------------------------------


def rep(mrr, acc=None):
    return EvalReport(mr=2.0, mrr=mrr, hits1=0.1, hits3=0.2, hits10=0.3, n_test=10, acc=acc)


def test_aggregate():
    agg = aggregate_runs([rep(0.2), rep(0.4)])
    assert agg.mrr == pytest.approx(0.3) and agg.std["mrr"] == pytest.approx(0.1414213562, abs=1e-9)
    same = aggregate_runs([rep(0.3, 0.9)] * 3)
    assert all(v == 0.0 for v in same.std.values()) and same.acc == 0.9
    one = aggregate_runs([rep(0.5)])
    assert one.n_runs == 1 and one.std["mrr"] == 0.0 and one.mrr == 0.5
    with pytest.raises(KGLitError):
        aggregate_runs([])


def test_report_files(tmp_path):
    write_report(rep(0.25), tmp_path / "r.json", {"model": "m"})
    d = json.loads((tmp_path / "r.json").read_text())
    assert "acc" not in d and d["model"] == "m" and d["mrr"] == 0.25
    write_report(rep(0.25, acc=0.75), tmp_path / "s.json")
    assert json.loads((tmp_path / "s.json").read_text())["acc"] == 0.75
    rows = aggregate_rows(aggregate_runs([rep(0.2, 0.5), rep(0.4, 0.7)]), model="m", dataset="d", variant="v")
    write_aggregate_csv(rows, tmp_path / "a.csv")
    with open(tmp_path / "a.csv") as fh:
        table = list(csv.DictReader(fh))
    assert [r["metric"] for r in table] == ["mr", "mrr", "hits1", "hits3", "hits10", "acc"]
    assert float(table[1]["mean"]) == pytest.approx(0.3)


def test_evaluate_end_to_end(small_fixture):
    rng = np.random.default_rng(0)
    table = rng.normal(size=(small_fixture.n_relations, small_fixture.n_entities, small_fixture.n_entities))
    r = evaluate(TableScorer(table), small_fixture)
    assert r.n_test == len(small_fixture.test) and 1 <= r.mr <= small_fixture.n_entities
