"""Graph instances with fractional edge values, and per-trial run records.

An Instance is a simple undirected graph whose edge values x_e form a
fractional matching (sum over any vertex at most 1).  Edge ids are array
positions; vertices are dense ints 0..n-1.  Storage is parallel numpy
arrays so million-edge instances stay cheap; `edges` offers a tuple view.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping, NamedTuple

import numpy as np

#: Absolute slack on the fractional-matching constraint. Generators emit
#: values like 1/n and 1/(n(n-1)) whose per-vertex sums carry rounding error.
DEGREE_TOL = 1e-9


class Edge(NamedTuple):
    edge_id: int
    u: int
    v: int
    x: float


@dataclass(frozen=True)
class Instance:
    vertex_count: int
    us: np.ndarray          # int64, shape (m,)
    vs: np.ndarray          # int64, shape (m,)
    xs: np.ndarray          # float64, shape (m,)
    name: str = ""
    metadata: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_edges(cls, vertex_count: int, edges, name: str = "",
                   metadata: Mapping[str, str] | None = None) -> "Instance":
        """Build from an iterable of (u, v, x) triples (ids by position)."""
        triples = list(edges)
        us = np.array([t[0] for t in triples], dtype=np.int64)
        vs = np.array([t[1] for t in triples], dtype=np.int64)
        xs = np.array([t[2] for t in triples], dtype=np.float64)
        return cls(vertex_count, us, vs, xs, name, dict(metadata or {}))

    @property
    def edge_count(self) -> int:
        return int(self.us.shape[0])

    def edge(self, edge_id: int) -> Edge:
        return Edge(edge_id, int(self.us[edge_id]), int(self.vs[edge_id]),
                    float(self.xs[edge_id]))

    @property
    def edges(self) -> Iterator[Edge]:
        for i in range(self.edge_count):
            yield self.edge(i)

    @cached_property
    def incident(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR adjacency: (indptr, edge_ids) with incident edge ids per vertex."""
        m = self.edge_count
        ends = np.concatenate([self.us, self.vs])
        ids = np.concatenate([np.arange(m), np.arange(m)])
        order = np.argsort(ends, kind="stable")
        counts = np.bincount(ends, minlength=self.vertex_count)
        indptr = np.concatenate([[0], np.cumsum(counts)])
        return indptr.astype(np.int64), ids[order]

    def incident_edges(self, v: int) -> np.ndarray:
        indptr, ids = self.incident
        return ids[indptr[v]:indptr[v + 1]]

    @cached_property
    def fractional_degrees(self) -> np.ndarray:
        deg = np.zeros(self.vertex_count)
        np.add.at(deg, self.us, self.xs)
        np.add.at(deg, self.vs, self.xs)
        return deg


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: list[str]
    one_regular: bool


def validate(instance: Instance) -> ValidationReport:
    """Check the Instance invariants; reports, never throws.

    Also flags whether the instance is 1-regular (every vertex's fractional
    degree equals 1 up to the tolerance).
    """
    violations: list[str] = []
    us, vs, xs = instance.us, instance.vs, instance.xs
    n = instance.vertex_count

    bad = np.flatnonzero(us == vs)
    for e in bad[:10]:
        violations.append(f"edge {e}: self-loop at vertex {int(us[e])}")
    oob = np.flatnonzero((us < 0) | (us >= n) | (vs < 0) | (vs >= n))
    for e in oob[:10]:
        violations.append(f"edge {e}: endpoint out of range")
    badx = np.flatnonzero((xs <= 0.0) | (xs > 1.0))
    for e in badx[:10]:
        violations.append(f"edge {e}: x={xs[e]} outside (0,1]")

    lo = np.minimum(us, vs)
    hi = np.maximum(us, vs)
    pairs = lo.astype(np.int64) * n + hi
    uniq, counts = np.unique(pairs, return_counts=True)
    for p in uniq[counts > 1][:10]:
        violations.append(f"parallel edges on pair ({int(p // n)}, {int(p % n)})")

    deg = instance.fractional_degrees
    over = np.flatnonzero(deg > 1.0 + DEGREE_TOL)
    for v in over[:10]:
        violations.append(f"vertex {int(v)}: fractional degree {deg[v]:.12g} > 1")

    one_regular = bool(n > 0 and instance.edge_count > 0
                       and np.all(np.abs(deg - 1.0) <= DEGREE_TOL))
    return ValidationReport(ok=not violations, violations=violations,
                            one_regular=one_regular)


def fractional_degree_prefix(instance: Instance, order) -> dict[tuple[int, int], float]:
    """Prefix fractional degrees x_v(e) = sum of x_f over earlier edges f at v.

    `order` is a permutation of edge ids (arrival order).  Returns
    {(vertex, edge_id): x_vertex(edge)} for both endpoints of every edge,
    accumulated in one pass (so the floating-point summation order matches
    exactly what the online schemes see).
    """
    order = np.asarray(order, dtype=np.int64)
    if (order.shape[0] != instance.edge_count
            or not np.array_equal(np.sort(order), np.arange(instance.edge_count))):
        raise ValueError("order must be a permutation of all edge ids")
    acc = np.zeros(instance.vertex_count)
    out: dict[tuple[int, int], float] = {}
    for e in order:
        e = int(e)
        u, v, x = int(instance.us[e]), int(instance.vs[e]), float(instance.xs[e])
        out[(u, e)] = acc[u]
        out[(v, e)] = acc[v]
        acc[u] += x
        acc[v] += x
    return out


@dataclass
class Realization:
    """One sampled world: states X_e, arrival keys, and scheme coin tables.

    `coins` maps a purpose tag to one uniform [0,1) value per edge; schemes
    compare coin < probability with strict inequality.  Purposes are distinct
    streams so wrapping a scheme (e.g. exactly-c drops) never perturbs the
    inner scheme's draws.
    """
    states: np.ndarray                     # bool, shape (m,)
    coins: dict[str, np.ndarray] = field(default_factory=dict)

    def coin(self, purpose: str, edge_id: int) -> float:
        return float(self.coins[purpose][edge_id])

    def prefix(self, k: int) -> "Realization":
        """The same world restricted to the first k edges (for replay checks)."""
        return Realization(self.states[:k].copy(),
                           {p: c[:k].copy() for p, c in self.coins.items()})


SCHEME_COIN_PURPOSES = ("accept", "couple_keep", "couple_split", "drop")


def draw_realization(instance: Instance, seed: int, trial: int,
                     forced_edge: int | None = None) -> Realization:
    """States and scheme coins for one trial from the keyed streams."""
    from . import rng as _rng
    m = instance.edge_count
    states = _rng.stream(seed, "states", trial).random(m) < instance.xs
    if forced_edge is not None:
        states[forced_edge] = True
    coins = {p: _rng.stream(seed, p, trial).random(m) for p in SCHEME_COIN_PURPOSES}
    return Realization(states, coins)


@dataclass
class MatchResult:
    """Matching returned by one scheme run."""
    selected: set[int]
    per_edge: dict[int, dict]  # edge_id -> {selected, was_active, arrival_rank}
    metadata: dict = field(default_factory=dict)

    def is_matching(self, instance: Instance) -> bool:
        seen: set[int] = set()
        for e in self.selected:
            u, v = int(instance.us[e]), int(instance.vs[e])
            if u in seen or v in seen:
                return False
            seen.update((u, v))
        return True


# ---------------------------------------------------------------------------
# JSON interchange. Canonical form: fixed key order, 2-space indent, floats
# with 17 significant digits, trailing newline; serialize(deserialize(s)) is
# byte-identical.

def _fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def instance_to_json(instance: Instance) -> str:
    buf = io.StringIO()
    buf.write("{\n")
    buf.write(f'  "name": {json.dumps(instance.name)},\n')
    buf.write(f'  "vertex_count": {instance.vertex_count},\n')
    buf.write('  "edges": [\n')
    m = instance.edge_count
    for i in range(m):
        comma = "," if i < m - 1 else ""
        buf.write('    {"u": %d, "v": %d, "x": %s}%s\n'
                  % (instance.us[i], instance.vs[i], _fmt_float(instance.xs[i]), comma))
    buf.write("  ],\n")
    meta = json.dumps(dict(instance.metadata), sort_keys=True)
    buf.write(f'  "metadata": {meta}\n')
    buf.write("}\n")
    return buf.getvalue()


def instance_from_json(text: str) -> Instance:
    obj = json.loads(text)
    edges = [(e["u"], e["v"], e["x"]) for e in obj["edges"]]
    return Instance.from_edges(obj["vertex_count"], edges,
                               name=obj.get("name", ""),
                               metadata=obj.get("metadata", {}))


def save_instance(instance: Instance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(instance_to_json(instance))


def load_instance(path) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return instance_from_json(fh.read())
