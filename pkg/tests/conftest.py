"""Shared fixture builders for the test suite."""
from __future__ import annotations

import numpy as np
import pytest

from crslab.instances import Instance


def random_tree_instance(gen: np.random.Generator, max_edges: int = 6,
                         name: str = "tree") -> Instance:
    """Random tree (random attachment) with vertex loads scaled below 1."""
    m = int(gen.integers(1, max_edges + 1))
    edges = []
    for v in range(1, m + 1):
        u = int(gen.integers(0, v))
        edges.append((u, v, float(gen.uniform(0.05, 0.6))))
    load = np.zeros(m + 1)
    for u, v, x in edges:
        load[u] += x
        load[v] += x
    scale = min(1.0, 0.98 / load.max())
    edges = [(u, v, x * scale) for u, v, x in edges]
    return Instance.from_edges(m + 1, edges, name=name)


def random_graph_instance(gen: np.random.Generator, max_edges: int = 6,
                          name: str = "fixture") -> Instance:
    """Random small multigraph-free instance with feasible fractional loads."""
    m = int(gen.integers(2, max_edges + 1))
    nv = m + 2
    seen = set()
    edges = []
    while len(edges) < m:
        u, v = sorted(gen.integers(0, nv, size=2).tolist())
        if u == v or (u, v) in seen:
            continue
        seen.add((u, v))
        edges.append((u, v, float(gen.uniform(0.1, 0.7))))
    load = np.zeros(nv)
    for u, v, x in edges:
        load[u] += x
        load[v] += x
    scale = min(1.0, 0.98 / load.max())
    edges = [(u, v, x * scale) for u, v, x in edges]
    return Instance.from_edges(nv, edges, name=name)


@pytest.fixture
def path2() -> Instance:
    return Instance.from_edges(3, [(0, 1, 0.5), (1, 2, 0.5)], name="path_2")


@pytest.fixture
def k12() -> Instance:
    return Instance.from_edges(3, [(0, 1, 0.5), (0, 2, 0.5)], name="k12")
