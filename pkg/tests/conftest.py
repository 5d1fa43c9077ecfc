import networkx as nx
import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from heavytail.graph_core import MarkedGraph

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def pytest_addoption(parser):
    parser.addoption("--skip-slow", action="store_true", help="skip the limit cross-validation criteria")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--skip-slow"):
        skip = pytest.mark.skip(reason="--skip-slow")
        for item in items:
            if "slow" in item.keywords:
                item.add_marker(skip)


@st.composite
def small_graphs(draw, max_n=8, marks=(1.0, 2.0, -1.5), connected=False):
    """Random simple graph with marks from a small alphabet."""
    n = draw(st.integers(1, max_n))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=len(pairs))) if pairs else []
    if connected and n > 1:
        seed = draw(st.integers(0, 2 ** 31 - 1))
        tree = nx.random_labeled_tree(n, seed=seed)
        chosen = sorted(set(chosen) | {tuple(sorted(e)) for e in tree.edges()})
    vals = [draw(st.sampled_from(marks)) for _ in chosen]
    return MarkedGraph.from_edges(n, chosen, np.array(vals, dtype=float).reshape(-1, 1))


@st.composite
def small_trees(draw, max_n=8, marks=(1.0, 2.0, 3.0)):
    n = draw(st.integers(1, max_n))
    if n == 1:
        return MarkedGraph.empty(1)
    tree = nx.random_labeled_tree(n, seed=draw(st.integers(0, 2 ** 31 - 1)))
    e = list(tree.edges())
    vals = [draw(st.sampled_from(marks)) for _ in e]
    return MarkedGraph.from_edges(n, e, np.array(vals, dtype=float).reshape(-1, 1))
