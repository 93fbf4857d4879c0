"""Instance families.

Layout conventions are load-bearing: the phase-based order builders index
edges by position, so hub edges always come first, then (for the clique
construction) the clique edges, then the leaf blocks.  Vertices are laid
out hub, v_1..v_n, then the W_i blocks.
"""
from __future__ import annotations

import numpy as np

from . import rng as _rng
from .instances import Instance


def general_hard(n: int) -> Instance:
    """Hub + n spokes + clique among spokes + (n-2)-leaf stars on each spoke.

    x = 1/n on hub and leaf edges, 1/(n(n-1)) on clique edges; every spoke
    v_i has fractional degree exactly 1.
    """
    if n < 3:
        raise ValueError(f"general_hard needs n >= 3, got {n}")
    edges: list[tuple[int, int, float]] = []
    x_main = 1.0 / n
    x_clique = 1.0 / (n * (n - 1))
    for i in range(1, n + 1):
        edges.append((0, i, x_main))
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            edges.append((i, j, x_clique))
    w = n + 1
    for i in range(1, n + 1):
        for _ in range(n - 2):
            edges.append((i, w, x_main))
            w += 1
    return Instance.from_edges(
        w, edges, name=f"general_hard_{n}",
        metadata={"family": "general_hard", "n": str(n)})


def tree_hard(n: int) -> Instance:
    """Hub + n spokes, each spoke with its own n-1 leaves.  All x = 1/n."""
    if n < 2:
        raise ValueError(f"tree_hard needs n >= 2, got {n}")
    edges: list[tuple[int, int, float]] = []
    x = 1.0 / n
    for i in range(1, n + 1):
        edges.append((0, i, x))
    w = n + 1
    for i in range(1, n + 1):
        for _ in range(n - 1):
            edges.append((i, w, x))
            w += 1
    return Instance.from_edges(
        w, edges, name=f"tree_hard_{n}",
        metadata={"family": "tree_hard", "n": str(n)})


def path(n: int, x: float) -> Instance:
    """Path with n edges 0-1-2-...-n, uniform edge value x (needs 2x <= 1)."""
    if n < 1:
        raise ValueError(f"path needs n >= 1, got {n}")
    if not (0.0 < x and (2.0 * x <= 1.0 + 1e-12 or n == 1)):
        raise ValueError(f"path needs 0 < x and 2x <= 1, got x={x}")
    edges = [(i, i + 1, float(x)) for i in range(n)]
    return Instance.from_edges(
        n + 1, edges, name=f"path_{n}",
        metadata={"family": "path", "n": str(n), "x": repr(float(x))})


def star_gadget(n: int) -> Instance:
    """Center edge (u0,v0) plus n pendant edges at each endpoint, x = 1/(n+1).

    The center edge is id 0 (also tagged in metadata).
    """
    if n < 1:
        raise ValueError(f"star_gadget needs n >= 1, got {n}")
    x = 1.0 / (n + 1)
    edges: list[tuple[int, int, float]] = [(0, 1, x)]
    for i in range(1, n + 1):        # u_i = 1 + i
        edges.append((0, 1 + i, x))
    for i in range(1, n + 1):        # v_i = n + 1 + i
        edges.append((1, n + 1 + i, x))
    return Instance.from_edges(
        2 * n + 2, edges, name=f"star_gadget_{n}",
        metadata={"family": "star_gadget", "n": str(n), "center_edge": "0"})


def cycle(g: int, x: float) -> Instance:
    """g-cycle with uniform edge value x (needs 2x <= 1)."""
    if g < 3:
        raise ValueError(f"cycle needs g >= 3, got {g}")
    if not (0.0 < x and 2.0 * x <= 1.0 + 1e-12):
        raise ValueError(f"cycle needs 0 < x and 2x <= 1, got x={x}")
    edges = [(i, (i + 1) % g, float(x)) for i in range(g)]
    return Instance.from_edges(
        g, edges, name=f"cycle_{g}",
        metadata={"family": "cycle", "g": str(g), "x": repr(float(x))})


def complete_bipartite(n: int) -> Instance:
    """K_{n,n} with x = 1/n (1-regular).  Left side 0..n-1, right n..2n-1."""
    if n < 1:
        raise ValueError(f"complete_bipartite needs n >= 1, got {n}")
    ii, jj = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    us = ii.ravel().astype(np.int64)
    vs = (jj.ravel() + n).astype(np.int64)
    xs = np.full(n * n, 1.0 / n)
    return Instance(2 * n, us, vs, xs, name=f"complete_bipartite_{n}",
                    metadata={"family": "complete_bipartite", "n": str(n)})


def er_one_regular(n: int, seed: int, avg_degree: float = 2.0) -> Instance:
    """Seeded sparse random graph with x = 1/n on every edge.

    Aims for round(avg_degree*n/2) distinct edges; the incident-edge count is
    capped at n per vertex, which (with x = 1/n) makes the fractional
    constraint hold constructively for any seed.
    """
    if n < 2:
        raise ValueError(f"er_one_regular needs n >= 2, got {n}")
    target = int(round(avg_degree * n / 2.0))
    gen = _rng.stream(seed, "misc", 0)
    x = 1.0 / n
    chosen: list[tuple[int, int]] = []
    seen: set[tuple[int, int]] = set()
    degree = np.zeros(n, dtype=np.int64)
    # oversample in blocks; rejection handles loops/dupes/caps
    while len(chosen) < target:
        block = max(64, 2 * (target - len(chosen)))
        us = gen.integers(0, n, size=block)
        vs = gen.integers(0, n, size=block)
        for u, v in zip(us, vs):
            if u == v:
                continue
            key = (int(min(u, v)), int(max(u, v)))
            if key in seen:
                continue
            if degree[key[0]] >= n or degree[key[1]] >= n:
                continue
            seen.add(key)
            degree[key[0]] += 1
            degree[key[1]] += 1
            chosen.append(key)
            if len(chosen) >= target:
                break
    edges = [(u, v, x) for (u, v) in chosen]
    return Instance.from_edges(
        n, edges, name=f"er_one_regular_{n}_s{seed}",
        metadata={"family": "er_one_regular", "n": str(n), "seed": str(seed),
                  "avg_degree": repr(float(avg_degree))})
