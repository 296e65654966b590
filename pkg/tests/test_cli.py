import json

import pytest

from kglit.cli import main
from kglit.manifest import TIMESTAMP_FIELDS

METRIC_KEYS = {"mr", "mrr", "hits1", "hits3", "hits10"}


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fx") / "fixture"
    assert main(["fixture", "--output", str(out), "--entities", "20", "--relations", "3",
                 "--triples", "120", "--attrs", "2", "--seed", "1"]) == 0
    return out


def read_lines(path):
    return sorted(path.read_text().splitlines())


def test_usage_error_exit_2(capsys):
    assert main(["ablate", "--output", "x"]) == 2
    assert main([]) == 2


def test_infeasible_alpha(fixture_dir, tmp_path, capsys):
    code = main(["ablate", "--input", str(fixture_dir), "--output", str(tmp_path / "o"),
                 "--kind", "relational", "--alpha", "0.99"])
    err = capsys.readouterr().err
    assert code == 3 and "limit" in err


def test_existence_values(fixture_dir, tmp_path):
    out = tmp_path / "ex"
    assert main(["ablate", "--input", str(fixture_dir), "--output", str(out), "--kind", "existence"]) == 0
    values = [line.split("\t")[2] for line in (out / "literals.txt").read_text().splitlines() if line]
    assert values and all(float(v) == 1.0 for v in values)


def test_relational_alpha_zero_identity(fixture_dir, tmp_path):
    out = tmp_path / "rel"
    assert main(["ablate", "--input", str(fixture_dir), "--output", str(out),
                 "--kind", "relational", "--alpha", "0"]) == 0
    assert read_lines(out / "train.txt") == read_lines(fixture_dir / "train.txt")


def test_ablation_outputs_repeatable(fixture_dir, tmp_path):
    for name in ("a", "b"):
        assert main(["ablate", "--input", str(fixture_dir), "--output", str(tmp_path / name),
                     "--kind", "random", "--seed", "5"]) == 0
    a, b = tmp_path / "a", tmp_path / "b"
    for f in ("train.txt", "valid.txt", "test.txt", "literals.txt"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    assert ma["outputs"] == mb["outputs"]
    strip = lambda m: {k: v for k, v in m.items() if k not in TIMESTAMP_FIELDS and k != "config"}  # noqa: E731
    assert strip(ma) == strip(mb)


def train_eval(dataset, out, model="distmult"):
    assert main(["train", "--model", model, "--dataset", str(dataset), "--output", str(out),
                 "--epochs", "2", "--embedding-dim", "8", "--seed", "0"]) == 0
    assert main(["eval", "--checkpoint", str(out), "--dataset", str(dataset), "--output", str(out)]) == 0
    return json.loads((out / "report.json").read_text())


def test_train_eval_plain(fixture_dir, tmp_path):
    rep = train_eval(fixture_dir, tmp_path / "run")
    assert METRIC_KEYS <= rep.keys() and "acc" not in rep
    assert rep["seed"] == 0 and "config_hash" in rep and "best_epoch" in rep


def test_train_eval_synthetic_and_report(fixture_dir, tmp_path):
    syn = tmp_path / "syn"
    assert main(["prepare-synthetic", "--input", str(fixture_dir), "--output", str(syn), "--seed", "2"]) == 0
    rep = train_eval(syn, tmp_path / "run", model="literale-distmult")
    assert METRIC_KEYS <= rep.keys() and 0.0 <= rep["acc"] <= 1.0
    paths = []
    for i in range(3):
        p = tmp_path / f"r{i}.json"
        p.write_text((tmp_path / "run" / "report.json").read_text())
        paths.append(str(p))
    assert main(["report", *paths, "--output", str(tmp_path / "agg.csv")]) == 0
    rows = (tmp_path / "agg.csv").read_text().splitlines()
    header = rows[0].split(",")
    std_col = header.index("std")
    assert all(float(r.split(",")[std_col]) == 0.0 for r in rows[1:])
    assert any(r.split(",")[header.index("metric")] == "acc" for r in rows[1:])


def test_kga_then_train(fixture_dir, tmp_path):
    out = tmp_path / "kga"
    assert main(["kga", "--input", str(fixture_dir), "--output", str(out), "--branching", "2", "--depth", "2"]) == 0
    assert (out / "hierarchy.tsv").exists()
    lit = out / "literals.txt"
    assert not lit.exists() or lit.read_text().strip() == ""
    train_eval(out, tmp_path / "run")


def test_checkpoint_mismatch_refused(fixture_dir, tmp_path, capsys):
    run = tmp_path / "run"
    train_eval(fixture_dir, run)
    other = tmp_path / "other"
    assert main(["ablate", "--input", str(fixture_dir), "--output", str(other),
                 "--kind", "relational", "--alpha", "0.2"]) == 0
    code = main(["eval", "--checkpoint", str(run), "--dataset", str(other), "--output", str(tmp_path / "x.json")])
    assert code == 3 and "mismatch" in capsys.readouterr().err
