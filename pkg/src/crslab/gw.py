"""Critical Galton-Watson tree experiments.

The limiting local structure of a sparse active component is a special edge
(u,v) plus two independent Poisson(1) branching trees.  Greedy matching on
that limit object has closed-form per-order match probabilities; this module
samples the trees, runs greedy under uniform-time and lexicographic-seed
orders, and checks the closed forms.

Two samplers coexist.  `sample_gw`/`greedy_on_gw` materialize the tree and
evaluate availability bottom-up; they are the readable reference.  The lazy
engine explores only order-relevant children (Poisson thinning: children
with marks below a threshold t form a Poisson(t) process), which turns an
infinite-expected-size critical tree into a few explored nodes per trial and
vectorizes across trials.  The two are distributionally identical and the
tests compare them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import rng as _rng
from .instances import Instance
from .stats import binomial_sigma, wilson_interval

DEFAULT_NODE_CAP = 10 ** 6
_CHUNK = _rng.CHUNK


@dataclass
class GWTree:
    """Materialized two-rooted tree; roots are nodes 0 (u) and 1 (v)."""
    parents: np.ndarray    # parent index per node, -1 for the roots
    offspring: np.ndarray  # drawn child count per node, -1 if never expanded
    size: int
    truncated: bool

    def children(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.size)]
        for i in range(2, self.size):
            out[int(self.parents[i])].append(i)
        return out


def sample_gw(rng: np.random.Generator, node_cap: int = DEFAULT_NODE_CAP) -> GWTree:
    """Breadth-first sampling of the two-rooted Poisson(1) tree.

    Expansion stops (and the tree is flagged truncated) as soon as adding a
    node's children would push the size past node_cap; a critical branching
    process has infinite expected size, so a cap is not optional.
    """
    if node_cap < 2:
        raise ValueError("node_cap must be at least 2")
    parents = [-1, -1]
    offspring = []
    buf = _PoissonBlock(rng)
    w = 0
    truncated = False
    while w < len(parents):
        k = buf.next()
        if len(parents) + k > node_cap:
            truncated = True
            break
        offspring.append(k)
        parents.extend([w] * k)
        w += 1
    size = len(parents)
    off = np.full(size, -1, dtype=np.int64)
    off[:len(offspring)] = offspring
    return GWTree(np.asarray(parents, dtype=np.int64), off, size, truncated)


class _PoissonBlock:
    """Block-buffered Poisson(1) draws for the per-node sampler."""

    def __init__(self, rng: np.random.Generator, block: int = 1024):
        self._rng = rng
        self._block = block
        self._buf = rng.poisson(1.0, block)
        self._i = 0

    def next(self) -> int:
        if self._i >= self._buf.size:
            self._buf = self._rng.poisson(1.0, self._block)
            self._i = 0
        v = int(self._buf[self._i])
        self._i += 1
        return v


class GreedyOutcome(NamedTuple):
    matched: bool
    u_unmatched: bool


def greedy_on_gw(tree: GWTree, order: str, rng: np.random.Generator) -> GreedyOutcome:
    """Greedy matching outcome for the special edge under one sampled order.

    The special edge is matched iff neither root has a bad child: a child w
    of u is bad iff edge (u,w) arrives before (u,v) and w is still unmatched
    then.  Unmatchedness satisfies a bottom-up recursion, evaluated here by
    one reverse-BFS pass (children carry larger indices than parents).

    uniform: every edge gets an independent U[0,1] arrival time; a node's
    children are compared against the node's own parent-edge time.
    lex: every vertex gets an independent U[0,1] seed and edge (a,b) precedes
    (a,c) iff seed(b) < seed(c); a node's children are compared against the
    seed of the node's parent.
    """
    if tree.truncated:
        raise ValueError("tree is truncated; caller must filter these out")
    n = tree.size
    parents = tree.parents
    if order == "uniform":
        t_special = rng.random()
        keys = rng.random(n)
        keys[0] = keys[1] = t_special
        child_key = keys
        threshold = keys
    elif order == "lex":
        seeds = rng.random(n)
        threshold = np.empty(n)
        threshold[0] = seeds[1]
        threshold[1] = seeds[0]
        if n > 2:
            threshold[2:] = seeds[parents[2:]]
        child_key = seeds
    else:
        raise ValueError(f"unknown order {order!r}")
    avail = np.ones(n, dtype=bool)
    for i in range(n - 1, 1, -1):
        p = int(parents[i])
        if avail[i] and child_key[i] < threshold[p]:
            avail[p] = False
    return GreedyOutcome(bool(avail[0] and avail[1]), bool(avail[0]))


# --- closed forms -----------------------------------------------------------

def q_uniform(t: float) -> float:
    """Probability a root is unmatched at time t: 1/(1+t)."""
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"t must be in [0,1], got {t}")
    return 1.0 / (1.0 + t)


def q_lex(x: float, y: float) -> float:
    """Probability a seed-x root is unmatched at its seed-y partner's edge."""
    if not (0.0 <= x <= 1.0 and 0.0 <= y <= 1.0):
        raise ValueError(f"arguments must be in [0,1], got ({x}, {y})")
    ex = math.exp(x)
    return ex / (ex + math.exp(y) - 1.0)


def match_prob_closed(order: str) -> float:
    if order == "uniform":
        return 0.5
    if order == "lex":
        return 1.0 - math.log(2.0 - math.exp(-1.0))
    raise ValueError(f"unknown order {order!r}")


def lex_integral_quadrature(points: int = 100) -> float:
    """Tensor Gauss-Legendre value of the double integral of q(x,y)q(y,x)."""
    nodes, weights = np.polynomial.legendre.leggauss(points)
    x = 0.5 * (nodes + 1.0)
    w = 0.5 * weights
    ex = np.exp(x)
    qa = ex[:, None] / (ex[:, None] + ex[None, :] - 1.0)   # q(x_i, x_j)
    integrand = qa * qa.T
    return float(w @ integrand @ w)


# --- lazy availability engine ------------------------------------------------

def _lazy_avail(rng: np.random.Generator, thr: np.ndarray,
                self_seeds: np.ndarray | None = None,
                node_cap: int = DEFAULT_NODE_CAP):
    """Availability bits for a batch of virtual root nodes.

    Each explored node draws Poisson(1) children with U[0,1] marks; a child
    is relevant iff its mark is below the node's threshold, and irrelevant
    subtrees are never visited.  Uniform order: a child's threshold is its
    own mark.  Lex order (self_seeds given): a child's threshold is the
    parent's seed and its own seed is the mark.  Exactly matches the
    materialized recursion in `greedy_on_gw` in distribution.

    Returns (avail, nodes_explored, truncated) per root; roots whose
    exploration would pass node_cap stop exploring and report truncated.
    """
    n0 = thr.size
    nodes = np.ones(n0, dtype=np.int64)
    truncated = np.zeros(n0, dtype=bool)
    levels: list[tuple[np.ndarray, int]] = []
    cur_thr = np.asarray(thr, dtype=float)
    cur_self = None if self_seeds is None else np.asarray(self_seeds, dtype=float)
    cur_root = np.arange(n0)
    while cur_thr.size:
        prev_size = cur_thr.size
        counts = rng.poisson(1.0, prev_size)
        total = int(counts.sum())
        if total == 0:
            break
        parent = np.repeat(np.arange(prev_size), counts)
        marks = rng.random(total)
        keep = marks < cur_thr[parent]
        parent, marks = parent[keep], marks[keep]
        if parent.size == 0:
            break
        new_root = cur_root[parent]
        nodes += np.bincount(new_root, minlength=n0)
        over = nodes > node_cap
        if over.any():
            truncated |= over
            live = ~truncated[new_root]
            parent, marks, new_root = parent[live], marks[live], new_root[live]
        levels.append((parent, prev_size))
        if cur_self is None:
            cur_thr = marks
        else:
            cur_thr = cur_self[parent]
            cur_self = marks
        cur_root = new_root
    if not levels:
        return np.ones(n0, dtype=bool), nodes, truncated
    avail = np.ones(levels[-1][0].size, dtype=bool)
    for parent, psize in reversed(levels):
        blocked = np.bincount(parent[avail], minlength=psize) > 0
        avail = ~blocked
    return avail, nodes, truncated


@dataclass
class QFunction:
    """Empirical q on an evaluation grid (2-D values for the lex order)."""
    kind: str
    grid: np.ndarray
    values: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    trials: int


def estimate_match_prob(order: str, trials: int, node_cap: int = DEFAULT_NODE_CAP,
                        seed: int = 0) -> dict:
    """Greedy match probability of the special edge over sampled trees.

    Both endpoint subtrees are explored lazily per trial; truncated trials
    are excluded from the estimate and reported as a fraction.
    """
    if order not in ("uniform", "lex"):
        raise ValueError(f"unknown order {order!r}")
    matched = used = trunc = u_free = v_free = 0
    done = 0
    chunk_idx = 0
    while done < trials:
        k = min(_CHUNK, trials - done)
        gen = _rng.stream(seed, "tree", chunk_idx)
        if order == "uniform":
            t = gen.random(k)
            thr = np.concatenate([t, t])
            self_seeds = None
        else:
            x = gen.random(k)
            y = gen.random(k)
            thr = np.concatenate([y, x])
            self_seeds = np.concatenate([x, y])
        avail, _, truncated = _lazy_avail(gen, thr, self_seeds, node_cap)
        bad = truncated[:k] | truncated[k:]
        ok = ~bad
        au, av = avail[:k], avail[k:]
        matched += int((au & av & ok).sum())
        u_free += int((au & ok).sum())
        v_free += int((av & ok).sum())
        used += int(ok.sum())
        trunc += int(bad.sum())
        done += k
        chunk_idx += 1
    lo, hi = wilson_interval(matched, used)
    return {
        "order": order,
        "trials": trials,
        "used": used,
        "truncated_fraction": trunc / trials if trials else 0.0,
        "match_prob": matched / used if used else float("nan"),
        "ci_low": lo,
        "ci_high": hi,
        "u_unmatched_rate": u_free / used if used else float("nan"),
        "v_unmatched_rate": v_free / used if used else float("nan"),
    }


def estimate_q(order: str, grid: np.ndarray, trials: int,
               node_cap: int = DEFAULT_NODE_CAP, seed: int = 0) -> QFunction:
    """Empirical q per grid point (uniform: q(t); lex: q(x,y) on grid x grid)."""
    grid = np.asarray(grid, dtype=float)
    if grid.size and (grid.min() < 0.0 or grid.max() > 1.0):
        raise ValueError("grid points must lie in [0,1]")
    if order == "uniform":
        points = [(float(t),) for t in grid]
        shape = (grid.size,)
    elif order == "lex":
        points = [(float(x), float(y)) for x in grid for y in grid]
        shape = (grid.size, grid.size)
    else:
        raise ValueError(f"unknown order {order!r}")
    vals = np.empty(len(points))
    lo = np.empty(len(points))
    hi = np.empty(len(points))
    for pi, pt in enumerate(points):
        free = used = 0
        done = 0
        chunk_idx = 0
        while done < trials:
            k = min(_CHUNK, trials - done)
            gen = _rng.stream(seed, "tree", pi + 1, chunk_idx)
            if order == "uniform":
                thr = np.full(k, pt[0])
                self_seeds = None
            else:
                thr = np.full(k, pt[1])
                self_seeds = np.full(k, pt[0])
            avail, _, truncated = _lazy_avail(gen, thr, self_seeds, node_cap)
            ok = ~truncated
            free += int((avail & ok).sum())
            used += int(ok.sum())
            done += k
            chunk_idx += 1
        vals[pi] = free / used if used else float("nan")
        lo[pi], hi[pi] = wilson_interval(free, used)
    return QFunction(f"{order}_empirical", grid, vals.reshape(shape),
                     lo.reshape(shape), hi.reshape(shape), trials)


def q_table_closed(order: str, grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if order == "uniform":
        return np.array([q_uniform(t) for t in grid])
    if order == "lex":
        return np.array([[q_lex(x, y) for y in grid] for x in grid])
    raise ValueError(f"unknown order {order!r}")


# --- size statistics ---------------------------------------------------------

def sample_tree_sizes(trials: int, node_cap: int = DEFAULT_NODE_CAP,
                      seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Total node counts of the two-rooted tree, capped at node_cap.

    Uses the random-walk representation of total progeny: with offspring
    draws L_1, L_2, ... in BFS order, the size is the first k at which
    2 + sum(L_i - 1) hits zero.  Walk steps are at least -1 so the first
    passage cannot be skipped.  Returns (sizes, truncated); truncated trees
    report size node_cap + 1.
    """
    sizes = np.full(trials, node_cap + 1, dtype=np.int64)
    truncated = np.zeros(trials, dtype=bool)
    block = 2048
    done = 0
    chunk_idx = 0
    while done < trials:
        k = min(_CHUNK, trials - done)
        gen = _rng.stream(seed, "tree", chunk_idx)
        pos = np.full(k, 2, dtype=np.int64)
        alive = np.arange(k)
        consumed = 0
        while alive.size and consumed < node_cap:
            b = min(block, node_cap - consumed)
            draws = gen.poisson(1.0, (alive.size, b))
            walk = pos[:, None] + np.cumsum(draws - 1, axis=1)
            zeros = walk == 0
            hit = zeros.any(axis=1)
            first = zeros.argmax(axis=1)
            sizes[done + alive[hit]] = consumed + first[hit] + 1
            pos = walk[~hit, -1]
            alive = alive[~hit]
            consumed += b
        truncated[done + alive] = True
        done += k
        chunk_idx += 1
    return sizes, truncated


# --- small-shape statistics and the instance comparison ----------------------

#: rooted shape of each side as nested sorted tuples of child subtrees;
#: path_u gives u one leaf child, cherry_v gives v two
SHAPE_LIBRARY = {
    "single_edge": ((), ()),
    "path_u": (((),), ()),
    "cherry_v": ((), ((), ())),
}

SHAPE_CLOSED_PROB = {
    "single_edge": math.exp(-2.0),
    "path_u": math.exp(-3.0),
    "cherry_v": math.exp(-4.0) / 2.0,
}


def shape_size(sig: tuple) -> int:
    def count(side) -> int:
        return 1 + sum(count(c) for c in side)
    return count(sig[0]) + count(sig[1])


def tree_shape_signature(tree: GWTree) -> tuple:
    """Canonical (u-side, v-side) nested-tuple signature of a small tree."""
    kids = tree.children()

    def sig(w: int):
        return tuple(sorted(sig(c) for c in kids[w]))

    return (sig(0), sig(1))


def estimate_shape_probs(trials: int, seed: int = 0,
                         shapes: dict | None = None) -> dict:
    """P[T = T0] for the depth<=2 library shapes, one sample for all shapes.

    Only the root offspring counts (and, where the counts fit a shape, the
    grandchild counts) are drawn; deeper structure cannot change whether the
    tree equals a shape of size <= 4, so the estimates are unbiased.
    """
    shapes = SHAPE_LIBRARY if shapes is None else shapes
    for name, sig in shapes.items():
        if any(any(len(c) > 0 for c in side) for side in sig):
            raise ValueError(f"shape {name} is deeper than the sampler supports")
    counts = {name: 0 for name in shapes}
    done = 0
    chunk_idx = 0
    while done < trials:
        k = min(_CHUNK, trials - done)
        gen = _rng.stream(seed, "tree", chunk_idx)
        ku = gen.poisson(1.0, k)
        kv = gen.poisson(1.0, k)
        for name, sig in shapes.items():
            du, dv = len(sig[0]), len(sig[1])
            mask = (ku == du) & (kv == dv)
            n_children = du + dv
            if n_children == 0:
                counts[name] += int(mask.sum())
                continue
            grand = gen.poisson(1.0, (int(mask.sum()), n_children))
            counts[name] += int((grand.sum(axis=1) == 0).sum())
        done += k
        chunk_idx += 1
    out = {}
    for name, c in counts.items():
        lo, hi = wilson_interval(c, trials)
        out[name] = {"estimate": c / trials, "ci_low": lo, "ci_high": hi,
                     "trials": trials}
    return out


class _ActiveComponentSampler:
    """Lazy active-subgraph exploration around a forced-active target edge.

    Each vertex's incident edge states are decided in one shot the first
    time the vertex is expanded (binomial count + distinct partner choice
    for uniform x; per-edge coins otherwise), so repeated queries stay
    consistent within a trial.
    """

    def __init__(self, instance: Instance, target_edge: int):
        self.inst = instance
        self.target = target_edge
        self.u0 = int(instance.us[target_edge])
        self.v0 = int(instance.vs[target_edge])
        indptr, eids = instance.incident
        self.indptr = indptr
        self.eids = eids
        other = np.where(instance.us[eids] == np.repeat(
            np.arange(instance.vertex_count), np.diff(indptr)),
            instance.vs[eids], instance.us[eids])
        self.other = other
        xs = instance.xs
        self.uniform_x = float(xs.max()) <= float(xs.min()) * (1 + 1e-12)
        self.x = float(xs[0]) if self.uniform_x else None
        self.pair_id = {}
        for e in range(instance.edge_count):
            a, b = int(instance.us[e]), int(instance.vs[e])
            self.pair_id[(min(a, b), max(a, b))] = e

    def edge_between(self, a: int, b: int) -> int | None:
        return self.pair_id.get((min(a, b), max(a, b)))

    def expand(self, w: int, gen: np.random.Generator,
               decided: dict[int, set[int]]) -> set[int]:
        """Active partners of w, deciding all of w's incident edges."""
        if w in decided:
            return decided[w]
        lo, hi = int(self.indptr[w]), int(self.indptr[w + 1])
        partners = self.other[lo:hi]
        known_active: set[int] = set()
        excluded: set[int] = set()
        for z in decided:
            if self.edge_between(w, z) is not None:
                excluded.add(z)
                if w in decided[z]:
                    known_active.add(z)
        if w in (self.u0, self.v0):
            mate = self.v0 if w == self.u0 else self.u0
            excluded.add(mate)  # the target edge itself is not re-drawn
        n_und = (hi - lo) - len(excluded)
        if self.uniform_x:
            kk = int(gen.binomial(n_und, self.x)) if n_und > 0 else 0
            fresh: set[int] = set()
            guard = 0
            while len(fresh) < kk:
                cand = int(partners[int(gen.integers(0, hi - lo))])
                guard += 1
                if guard > 64 * (kk + 1) + 1000:
                    raise RuntimeError("rejection sampling stalled")
                if cand in excluded or cand in fresh:
                    continue
                fresh.add(cand)
        else:
            draws = gen.random(n_und)
            fresh = set()
            idx = 0
            for j in range(hi - lo):
                p = int(partners[j])
                if p in excluded:
                    continue
                if draws[idx] < float(self.inst.xs[int(self.eids[lo + j])]):
                    fresh.add(p)
                idx += 1
        active = known_active | fresh
        decided[w] = active
        return active

    def side_signature(self, root: int, forbidden: int, gen, decided,
                       budget: int):
        """Rooted signature of root's active component, target edge removed.

        Returns (signature, visited) or (None, visited) when the component
        exceeds budget vertices or contains a cycle / touches forbidden.
        """
        visited = {root}
        parent = {root: None}
        frontier = [root]
        children: dict[int, list[int]] = {root: []}
        ok = True
        while frontier and ok:
            w = frontier.pop()
            for p in self.expand(w, gen, decided):
                if p == parent[w]:
                    continue
                if p in visited or p == forbidden:
                    ok = False
                    break
                visited.add(p)
                parent[p] = w
                children[w].append(p)
                children[p] = []
                frontier.append(p)
                if len(visited) > budget:
                    ok = False
                    break
        if not ok:
            return None, visited

        def sig(w: int):
            return tuple(sorted(sig(c) for c in children[w]))

        return sig(root), visited


def compare_to_instance(instance: Instance, target_edge: int, trials: int,
                        seed: int = 0, shapes: dict | None = None) -> list[dict]:
    """Gap between local active-component statistics and the GW limit.

    For each library shape T0, estimates P[S_e = T0 | X_e = 1] on the
    instance (S_e: the target edge's active component, rooted at its two
    endpoints) and P[T = T0] on the limit tree, and compares the gap to
    3*eps*|T0|^2 + 4 sigma with eps = max_e x_e.
    """
    shapes = SHAPE_LIBRARY if shapes is None else shapes
    eps = float(instance.xs.max())
    sampler = _ActiveComponentSampler(instance, target_edge)
    budget = max(shape_size(s) for s in shapes.values())
    counts = {name: 0 for name in shapes}
    done = 0
    chunk_idx = 0
    while done < trials:
        k = min(_CHUNK, trials - done)
        gen = _rng.stream(seed, "misc", chunk_idx)
        for _ in range(k):
            decided: dict[int, set[int]] = {}
            sig_u, vis_u = sampler.side_signature(
                sampler.u0, sampler.v0, gen, decided, budget)
            if sig_u is None:
                continue
            sig_v, vis_v = sampler.side_signature(
                sampler.v0, None, gen, decided, budget + 1 - len(vis_u))
            if sig_v is None or (vis_u & vis_v):
                continue
            full = (sig_u, sig_v)
            for name, shape_sig in shapes.items():
                if full == shape_sig:
                    counts[name] += 1
        done += k
        chunk_idx += 1
    tree_side = estimate_shape_probs(trials, seed=seed + 1, shapes=shapes)
    rows = []
    for name, shape_sig in shapes.items():
        p_inst = counts[name] / trials
        p_tree = tree_side[name]["estimate"]
        sigma = math.hypot(binomial_sigma(p_inst, trials),
                           binomial_sigma(p_tree, trials))
        size = shape_size(shape_sig)
        bound = 3.0 * eps * size * size + 4.0 * sigma
        rows.append({
            "shape": name,
            "size": size,
            "p_instance": p_inst,
            "p_tree": p_tree,
            "closed_form": SHAPE_CLOSED_PROB.get(name),
            "gap": abs(p_inst - p_tree),
            "bound": bound,
            "ok": abs(p_inst - p_tree) <= bound,
            "epsilon": eps,
            "trials": trials,
        })
    return rows
