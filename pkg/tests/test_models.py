import numpy as np
import pytest

from kglit.errors import CheckpointMismatchError, NumericalError
from kglit.graph import LiteralFeatureMatrix
from kglit.models import (
    MODELS,
    DistMult,
    MarginBatch,
    OneToNBatch,
    build_model,
    complex_score,
    distmult_score,
    literale_enrich,
    load_checkpoint,
    rbf_statistics,
    save_checkpoint,
    transe_score,
    tucker_score,
)

N, R, A, D = 10, 3, 2, 4


def features(rng):
    x = rng.random((N, A))
    present = rng.random((N, A)) < 0.7
    x[~present] = 0.0
    return LiteralFeatureMatrix(x, present)


def make(name, seed=1, **kw):
    opts = {"hidden": 5} if name == "mtkgnn" else {}
    opts.update(kw)
    return build_model(name, N, R, A, dim=D, seed=seed, **opts)


def random_batch(model, side, rng):
    if model.regime == "margin":
        pos = np.stack([rng.integers(N, size=6), rng.integers(R, size=6), rng.integers(N, size=6)], axis=1)
        neg = pos.copy()
        neg[:, 2] = (neg[:, 2] + 1 + rng.integers(N - 1, size=6)) % N
        return MarginBatch(pos, neg)
    b = 5
    labels = (rng.random((b, N)) < 0.3) * 0.9 + 0.01
    imask = (rng.random((b, model.input_width)) > 0.2) / 0.8
    hmask = (rng.random((b, model.query_width)) > 0.3) / 0.7 if model.query_width else None
    return OneToNBatch(rng.integers(N, size=b), rng.integers(R, size=b), side, labels, imask, hmask)


def numeric_grad(model, batch, feats, name, h=1e-5):
    v = model.params[name]
    out = np.zeros_like(v)
    for i in np.ndindex(v.shape):
        orig = v[i]
        v[i] = orig + h
        plus = model.loss_and_grad(batch, feats)[0]
        v[i] = orig - h
        minus = model.loss_and_grad(batch, feats)[0]
        v[i] = orig
        out[i] = (plus - minus) / (2 * h)
    return out


@pytest.mark.parametrize("name", sorted(MODELS))
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_finite_difference(name, seed):
    rng = np.random.default_rng(seed)
    feats = features(rng)
    for side in ("object", "subject"):
        model = make(name, seed=seed)
        for v in model.params.values():
            v += rng.normal(0.0, 0.3, size=v.shape)
        if name == "kbln":
            model.buffers["rbf_center"] = rng.normal(size=(R, A)) * 0.2
            model.buffers["rbf_width"] = 0.3 + rng.random((R, A))
        batch = random_batch(model, side, rng)
        _, grads, _ = model.loss_and_grad(batch, feats)
        for key in model.params:
            num = numeric_grad(model, batch, feats, key)
            diff = np.abs(num - grads[key])
            scale = np.maximum(np.abs(num), np.abs(grads[key]))
            ok = (diff <= 1e-7) | (diff < 1e-4 * scale)
            assert ok.all(), f"{name}/{side}/{key}: max rel {np.max(diff / np.maximum(scale, 1e-12))}"


# -- scoring examples ------------------------------------------------------


def test_transe_examples():
    assert transe_score([0, 0], np.array([1, 1]), np.array([1, 1])) == 0
    assert transe_score([0, 0], np.array([0, 0]), np.array([3, 4])) == -5
    rng = np.random.default_rng(0)
    s, r, o = rng.normal(size=(3, 6))
    perm = rng.permutation(6)
    assert transe_score(s[perm], r[perm], o[perm]) == pytest.approx(transe_score(s, r, o))


def test_distmult_examples():
    assert distmult_score([1, 0], np.array([2, 3]), np.array([1, 1])) == 2
    rng = np.random.default_rng(1)
    s, r, o = rng.normal(size=(3, 5))
    assert distmult_score(s, r, o) == pytest.approx(distmult_score(o, r, s))
    assert distmult_score(s, np.zeros(5), o) == 0


def test_complex_examples():
    assert complex_score([1 + 0j], np.array([1 + 0j]), np.array([1 + 0j])) == 1
    rng = np.random.default_rng(2)
    s, r, o = rng.normal(size=(3, 4)) + 1j * rng.normal(size=(3, 4))
    assert complex_score(s, np.conj(r), o) == pytest.approx(complex_score(o, r, s))
    im_s, im_o, re_r = rng.normal(size=(3, 4))
    assert complex_score(1j * im_s, re_r + 0j, 1j * im_o) == pytest.approx(np.sum(re_r * im_s * im_o))


def test_tucker_examples():
    rng = np.random.default_rng(3)
    s, r, o = rng.normal(size=(3, 3))
    eye = np.zeros((3, 3, 3))
    for i in range(3):
        eye[i, i, i] = 1.0
    assert tucker_score(eye, s, r, o) == pytest.approx(distmult_score(s, r, o))
    assert tucker_score(np.zeros((3, 3, 3)), s, r, o) == 0
    core = rng.normal(size=(2, 2, 2))
    s, r, o = rng.normal(size=(3, 2))
    naive = sum(core[i, j, k] * s[i] * r[j] * o[k] for i in range(2) for j in range(2) for k in range(2))
    assert tucker_score(core, s, r, o) == pytest.approx(naive)


def test_models_match_reference_scorers():
    t = np.array([[1, 2, 3], [4, 0, 4], [9, 1, 0]])
    m = make("distmult")
    e, r = m.params["entity"], m.params["relation"]
    ref = [distmult_score(e[s], r[p], e[o]) for s, p, o in t]
    np.testing.assert_allclose(m.score_triples(t), ref, atol=1e-12)
    c = make("complex")
    e, r = c.params["entity"], c.params["relation"]
    cx = lambda v: v[:D] + 1j * v[D:]  # noqa: E731
    ref = [complex_score(cx(e[s]), cx(r[p]), cx(e[o])) for s, p, o in t]
    np.testing.assert_allclose(c.score_triples(t), ref, atol=1e-12)
    k = make("tucker")
    ref = [tucker_score(k.params["core"], k.params["entity"][s], k.params["relation"][p], k.params["entity"][o])
           for s, p, o in t]
    np.testing.assert_allclose(k.score_triples(t), ref, atol=1e-12)
    te = make("transe")
    ref = [transe_score(te.params["entity"][s], te.params["relation"][p], te.params["entity"][o]) for s, p, o in t]
    np.testing.assert_allclose(te.score_triples(t), ref, atol=1e-12)


@pytest.mark.parametrize("name", sorted(MODELS))
def test_subject_side_matches_triple_scores(name):
    rng = np.random.default_rng(5)
    feats = features(rng)
    m = make(name)
    for v in m.params.values():
        v += rng.normal(0.0, 0.2, size=v.shape)
    t = np.array([[1, 2, 3], [4, 0, 4], [9, 1, 0]])
    obj = m.score_candidates(t[:, 0], t[:, 1], "object", feats)[np.arange(3), t[:, 2]]
    sub = m.score_candidates(t[:, 2], t[:, 1], "subject", feats)[np.arange(3), t[:, 0]]
    np.testing.assert_allclose(obj, sub, rtol=1e-10, atol=1e-12)
    again = m.score_candidates(t[:, 0], t[:, 1], "object", feats)[np.arange(3), t[:, 2]]
    np.testing.assert_array_equal(obj, again)


# -- fusion specifics ------------------------------------------------------


def test_literale_gate_limits():
    rng = np.random.default_rng(6)
    e, x = rng.normal(size=(3, D)), rng.random((3, A))
    w_ze, w_zl, w_h = rng.normal(size=(D, D)), rng.normal(size=(D, A)), rng.normal(size=(D, D + A))
    closed, _, _ = literale_enrich(e, x, w_ze, w_zl, np.full(D, -60.0), w_h)
    np.testing.assert_allclose(closed, e, atol=1e-12)
    opened, _, _ = literale_enrich(e, x, w_ze, w_zl, np.full(D, 60.0), w_h)
    np.testing.assert_allclose(opened, np.tanh(np.concatenate([e, x], 1) @ w_h.T), atol=1e-12)
    a, _, _ = literale_enrich(e, np.zeros((3, A)), w_ze, w_zl, np.zeros(D), w_h)
    b, _, _ = literale_enrich(e, np.zeros((3, A)), w_ze, rng.normal(size=(D, A)), np.zeros(D), w_h)
    np.testing.assert_array_equal(a, b)


def test_literale_closed_gate_equals_distmult():
    rng = np.random.default_rng(7)
    feats = features(rng)
    lit = make("literale-distmult")
    lit.params["gate_bias"][:] = -60.0
    base = make("distmult")
    base.params["entity"] = lit.params["entity"].copy()
    base.params["relation"] = lit.params["relation"].copy()
    np.testing.assert_allclose(lit.score_candidates([0, 1], [0, 2], "object", feats),
                               base.score_candidates([0, 1], [0, 2], "object"), atol=1e-12)


def test_kbln_zero_weights_equals_distmult():
    rng = np.random.default_rng(8)
    feats = features(rng)
    k = make("kbln")
    k.params["rbf_weight"][:] = 0.0
    d = DistMult(N, R, A, dim=D, seed=1)
    d.params["entity"], d.params["relation"] = k.params["entity"], k.params["relation"]
    np.testing.assert_array_equal(k.score_candidates([0, 5], [1, 2], "object", feats),
                                  d.score_candidates([0, 5], [1, 2], "object"))


def test_kbln_rbf_peak_and_statistics():
    x = np.array([[0.0], [0.5], [1.0], [0.2]])
    train = np.array([[0, 0, 1], [1, 0, 2], [3, 0, 0]])
    center, width = rbf_statistics(train, x, n_relations=2)
    d = np.array([0.0 - 0.5, 0.5 - 1.0, 0.2 - 0.0])
    assert center[0, 0] == pytest.approx(d.mean())
    assert width[0, 0] == pytest.approx(np.sqrt(np.mean((d - d.mean()) ** 2)))
    assert (center[1, 0], width[1, 0]) == (0.0, 1.0)  # unused relation keeps neutral values
    assert rbf_statistics(np.array([[0, 0, 1]]), np.array([[0.3], [0.3]]), 1)[1][0, 0] == 1e-3

    feats = LiteralFeatureMatrix(np.array([[0.7], [0.2], [0.0]]), np.ones((3, 1), bool))
    k = build_model("kbln", 3, 1, 1, dim=2, seed=0)
    k.params["entity"][:] = 0.0
    k.params["rbf_weight"][:] = 1.7
    k.buffers["rbf_center"][:] = 0.5
    k.buffers["rbf_width"][:] = 0.1
    assert k.score_triples([[0, 0, 1]], feats)[0] == pytest.approx(1.7)  # d = 0.5 = center


def test_mtkgnn_examples():
    rng = np.random.default_rng(9)
    feats = features(rng)
    m = make("mtkgnn")
    m.params["triple_out"][:] = 0.0
    m.params["triple_out_bias"][:] = 0.25
    np.testing.assert_allclose(m.score_candidates([0, 1], [0, 1], "object", feats), 0.25)
    empty = LiteralFeatureMatrix(np.zeros((N, A)), np.zeros((N, A), bool))
    grads = m.zero_grads()
    assert m.attribute_loss_and_grad(np.arange(N), "subj", empty, grads) == 0.0
    assert all(not g.any() for g in grads.values())
    assert m.predict_attributes(np.arange(3), "obj").shape == (3, A)


def test_transea_losses():
    rng = np.random.default_rng(10)
    feats = features(rng)
    pos = np.array([[0, 0, 1], [2, 1, 3]])
    neg = np.array([[0, 0, 5], [2, 1, 7]])
    batch = MarginBatch(pos, neg)
    ea = make("transea", alpha=0.0)
    te = make("transe")
    te.params["entity"], te.params["relation"] = ea.params["entity"], ea.params["relation"]
    assert ea.loss_and_grad(batch, feats)[0] == pytest.approx(te.loss_and_grad(batch, feats)[0])
    # perfect regressor: zero weights, targets equal to the bias
    ea.params["attr_weight"][:] = 0.0
    const = LiteralFeatureMatrix(np.where(feats.present, 0.3, 0.0), feats.present)
    ea.params["attr_bias"][:] = 0.3
    assert ea.losses(batch, const)[1] == 0.0
    assert make("transea").alpha == 0.1


def test_margin_satisfied_gives_zero_gradient():
    m = build_model("transe", 4, 1, dim=2, seed=0, margin=1.0)
    m.params["entity"][:] = [[0, 0], [1, 0], [50, 50], [-50, 50]]
    m.params["relation"][:] = [[1, 0]]
    loss, grads, _ = m.loss_and_grad(MarginBatch(np.array([[0, 0, 1]]), np.array([[0, 0, 2], [0, 0, 3]])))
    assert loss == 0.0
    assert all(not g.any() for g in grads.values())


def test_zero_embeddings_bce_gradient():
    m = build_model("distmult", 4, 1, dim=3, seed=0)
    m.params["entity"][:] = 0.0
    labels = np.array([[1.0, 0.0, 0.0, 1.0]])
    logits, _ = m.forward(np.array([0]), np.array([0]), "object", None)
    np.testing.assert_array_equal(logits, 0.0)
    from kglit.models.base import bce_with_logits

    loss, dlogits = bce_with_logits(logits, labels)
    np.testing.assert_allclose(dlogits * labels.size, 0.5 - labels)
    assert loss == pytest.approx(np.log(2.0))


def test_non_finite_loss_raises():
    m = make("distmult")
    m.params["entity"][0] = np.nan
    batch = OneToNBatch(np.array([0]), np.array([0]), "object", np.zeros((1, N)))
    with pytest.raises(NumericalError) as exc:
        m.loss_and_grad(batch)
    assert exc.value.batch is batch


@pytest.mark.parametrize("name", sorted(MODELS))
def test_checkpoint_round_trip(tmp_path, name):
    rng = np.random.default_rng(11)
    feats = features(rng)
    m = make(name)
    for v in m.params.values():
        v += rng.normal(0.0, 0.1, size=v.shape)
    digest = save_checkpoint(tmp_path / "c.npz", m, {"note": "x"})
    back, config = load_checkpoint(tmp_path / "c.npz")
    assert config["note"] == "x" and len(digest) == 64
    np.testing.assert_array_equal(back.score_candidates([0, 3], [1, 2], "object", feats),
                                  m.score_candidates([0, 3], [1, 2], "object", feats))
    first = (tmp_path / "c.npz").read_bytes()
    save_checkpoint(tmp_path / "c.npz", m, {"note": "x"})
    assert (tmp_path / "c.npz").read_bytes() == first


def test_checkpoint_tampered_config(tmp_path):
    import json
    import zipfile

    m = make("distmult")
    save_checkpoint(tmp_path / "c.npz", m, {"note": "x"})
    with np.load(tmp_path / "c.npz") as z:
        arrays = {k: z[k] for k in z.files}
    cfg = json.loads(str(arrays["config"]))
    cfg["note"] = "y"
    arrays["config"] = np.array(json.dumps(cfg, sort_keys=True))
    np.savez(tmp_path / "bad.npz", **arrays)
    assert zipfile.is_zipfile(tmp_path / "bad.npz")
    with pytest.raises(CheckpointMismatchError):
        load_checkpoint(tmp_path / "bad.npz")
