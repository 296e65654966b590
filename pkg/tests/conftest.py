import numpy as np
import pytest
from hypothesis import settings

from kglit.datagen import generate_fixture
from kglit.graph import KnowledgeGraph

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


def tiny_graph():
    """Hand-built graph: 6 entities, 2 relations, 2 attributes."""
    train = [("a", "likes", "b"), ("b", "likes", "c"), ("c", "likes", "a"), ("a", "knows", "d"),
             ("d", "knows", "e"), ("e", "likes", "f"), ("f", "knows", "a"), ("b", "knows", "e")]
    valid = [("a", "likes", "c")]
    test = [("d", "likes", "a"), ("e", "knows", "b")]
    lits = [("a", "age", 30.0), ("b", "age", 40.0), ("c", "age", 50.0), ("a", "height", 1.5),
            ("d", "height", 1.5), ("f", "age", 10.0)]
    return KnowledgeGraph.from_labeled(train, valid, test, lits)


@pytest.fixture
def tiny():
    return tiny_graph()


@pytest.fixture(scope="session")
def small_fixture():
    return generate_fixture(n_entities=80, n_relations=5, n_triples=600, n_attrs=2, latent_dim=4, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(n, ok, detail)``; the test still asserts ``ok`` itself."""

    def record(number, ok, detail=""):
        CRITERIA[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}".rstrip()
        print(CRITERIA[number])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
