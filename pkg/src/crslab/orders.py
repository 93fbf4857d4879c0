"""Arrival-order models.

Four ways an edge sequence can arrive: a fixed adversarial list, i.i.d.
uniform arrival times (random order), lexicographic per-vertex seeds (the
free order chosen by the algorithm), and the phase-based adversarial orders
used against the hard constructions.

The lexicographic order sorts edges by the pair (min endpoint seed, max
endpoint seed).  This realizes a "min + tiny*max" arrival time without
choosing a literal tiny constant, and keeps the property that among edges
at a common vertex u, (u,w) precedes (u,v) exactly when w's seed is below
v's.  Seed collisions (measure zero) tie-break by edge id.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .instances import Instance


@dataclass(frozen=True)
class ArrivalModel:
    kind: str  # "fixed" | "uniform_times" | "lex_seeds" | "phase_based"
    fixed: tuple[int, ...] | None = None
    phases: tuple[tuple[int, ...], ...] | None = None
    last_subset: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in ("fixed", "uniform_times", "lex_seeds", "phase_based"):
            raise ValueError(f"unknown arrival model kind {self.kind!r}")
        if self.kind == "fixed" and self.fixed is None:
            raise ValueError("fixed model needs an edge list")
        if self.kind == "phase_based" and self.phases is None:
            raise ValueError("phase_based model needs phases")

    def sequence(self) -> tuple[int, ...] | None:
        """The deterministic arrival sequence, if this model has one."""
        if self.kind == "fixed":
            return self.fixed
        if self.kind == "phase_based":
            return tuple(e for phase in self.phases for e in phase)
        return None

    @property
    def is_deterministic(self) -> bool:
        return self.kind in ("fixed", "phase_based")


def fixed_order(edge_ids: Sequence[int]) -> ArrivalModel:
    return ArrivalModel("fixed", fixed=tuple(int(e) for e in edge_ids))


def uniform_times() -> ArrivalModel:
    return ArrivalModel("uniform_times")


def lex_seeds() -> ArrivalModel:
    return ArrivalModel("lex_seeds")


@dataclass(frozen=True)
class DrawnOrder:
    """One realized arrival order: permutation plus the sort keys behind it."""
    permutation: np.ndarray                 # edge ids in arrival order
    keys: np.ndarray | None = None          # per-edge time, or (m,2) seed pairs
    vertex_seeds: np.ndarray | None = None

    @property
    def ranks(self) -> np.ndarray:
        """arrival rank per edge id (inverse permutation)."""
        inv = np.empty_like(self.permutation)
        inv[self.permutation] = np.arange(self.permutation.shape[0])
        return inv


def _check_cover(model: ArrivalModel, m: int) -> None:
    seq = model.sequence()
    if seq is not None:
        if sorted(seq) != list(range(m)):
            raise ValueError("arrival model does not cover the instance's edges "
                             f"exactly once (m={m})")


def draw_order(model: ArrivalModel, instance: Instance,
               rng: np.random.Generator | None = None) -> DrawnOrder:
    """Realize one arrival order.  Pure given the rng stream."""
    m = instance.edge_count
    _check_cover(model, m)
    if model.kind in ("fixed", "phase_based"):
        return DrawnOrder(np.array(model.sequence(), dtype=np.int64))
    if rng is None:
        raise ValueError(f"{model.kind} order needs an rng stream")
    if model.kind == "uniform_times":
        times = rng.random(m)
        perm = np.argsort(times, kind="stable")  # ties (measure zero) by edge id
        return DrawnOrder(perm.astype(np.int64), keys=times)
    # lex_seeds: one seed per vertex, edges sorted by (min seed, max seed)
    seeds = rng.random(instance.vertex_count)
    su, sv = seeds[instance.us], seeds[instance.vs]
    lo, hi = np.minimum(su, sv), np.maximum(su, sv)
    perm = np.lexsort((np.arange(m), hi, lo))  # final tie-break: edge id
    keys = np.column_stack([lo, hi])
    return DrawnOrder(perm.astype(np.int64), keys=keys, vertex_seeds=seeds)


def _hard_family(instance: Instance, family: str) -> int:
    got = instance.metadata.get("family")
    if got != family:
        raise ValueError(f"instance is not tagged as {family} (metadata family={got!r})")
    return int(instance.metadata["n"])


def phase_based_general(instance: Instance, last_vertex: int) -> ArrivalModel:
    """Adversarial order for the clique-augmented hard construction.

    Phase 1: all leaf edges (v_i, w) in canonical index order; phase 2: the
    clique edges among the v_i; phase 3: the hub edges, with (hub, v_last)
    presented last.
    """
    n = _hard_family(instance, "general_hard")
    if not (1 <= last_vertex <= n):
        raise ValueError(f"last_vertex must be in 1..{n}")
    hub = list(range(n))                         # edge ids of (u, v_i), i=1..n
    clique = list(range(n, n + n * (n - 1) // 2))
    leaves = list(range(n + n * (n - 1) // 2, instance.edge_count))
    last_edge = hub[last_vertex - 1]
    phase3 = [e for e in hub if e != last_edge] + [last_edge]
    return ArrivalModel("phase_based",
                        phases=(tuple(leaves), tuple(clique), tuple(phase3)))


def phase_based_tree(instance: Instance, last_subset: Sequence[int]) -> ArrivalModel:
    """Adversarial order for the tree hard construction.

    Phase 1: all leaf edges; phase 2: the hub edges with {hub} x S last,
    in the given order of S (vertex indices 1..n).
    """
    n = _hard_family(instance, "tree_hard")
    last = [int(i) for i in last_subset]
    if any(not (1 <= i <= n) for i in last):
        raise ValueError(f"last_subset entries must be in 1..{n}")
    hub = list(range(n))
    leaves = list(range(n, instance.edge_count))
    last_edges = [hub[i - 1] for i in last]
    phase2 = [e for e in hub if e not in set(last_edges)] + last_edges
    return ArrivalModel("phase_based",
                        phases=(tuple(leaves), tuple(phase2)),
                        last_subset=tuple(last))


# --- JSON interchange -------------------------------------------------------

def model_to_json(model: ArrivalModel) -> str:
    obj: dict = {"kind": model.kind}
    if model.fixed is not None:
        obj["fixed"] = list(model.fixed)
    if model.phases is not None:
        obj["phases"] = [list(p) for p in model.phases]
    if model.last_subset is not None:
        obj["last_subset"] = list(model.last_subset)
    return json.dumps(obj)


def model_from_json(text: str) -> ArrivalModel:
    obj = json.loads(text)
    return ArrivalModel(
        obj["kind"],
        fixed=tuple(obj["fixed"]) if "fixed" in obj else None,
        phases=tuple(tuple(p) for p in obj["phases"]) if "phases" in obj else None,
        last_subset=tuple(obj["last_subset"]) if "last_subset" in obj else None,
    )
