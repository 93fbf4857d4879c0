"""Branching-process engine: closed forms, samplers, shape statistics."""
import math

import numpy as np
import pytest

from crslab import rng as _rng
from crslab import gw
from crslab.generators import complete_bipartite
from crslab.stats import binomial_sigma

E2 = math.exp(-2.0)
FOCRS = 1.0 - math.log(2.0 - math.exp(-1.0))


class FakeRng:
    """Scripted uniform source for exact greedy_on_gw cases."""

    def __init__(self, values):
        self.queue = list(values)

    def random(self, n=None):
        if n is None:
            return self.queue.pop(0)
        out = np.array([self.queue.pop(0) for _ in range(n)])
        return out


def _tree(parents):
    parents = np.asarray(parents, dtype=np.int64)
    n = parents.size
    offspring = np.zeros(n, dtype=np.int64)
    for p in parents[2:]:
        offspring[p] += 1
    return gw.GWTree(parents=parents, offspring=offspring, size=n,
                     truncated=False)


# --- closed forms -------------------------------------------------------------

def test_q_closed_forms():
    assert gw.q_uniform(0.0) == 1.0
    assert gw.q_uniform(1.0) == 0.5
    assert gw.q_uniform(0.5) == pytest.approx(2.0 / 3.0)
    assert gw.q_lex(0.3, 0.0) == 1.0
    assert gw.q_lex(0.0, 0.7) == pytest.approx(math.exp(-0.7))
    x, y = 0.4, 0.8
    assert gw.q_lex(x, y) == pytest.approx(
        math.exp(x) / (math.exp(x) + math.exp(y) - 1.0))
    with pytest.raises(ValueError):
        gw.q_uniform(1.5)
    with pytest.raises(ValueError):
        gw.q_lex(-0.1, 0.5)


def test_match_prob_closed():
    assert gw.match_prob_closed("uniform") == 0.5
    assert abs(gw.match_prob_closed("lex") - FOCRS) < 1e-15


def test_closed_form_ode_residual():
    # dq/dx = -q^2 for the uniform closed form, via central differences
    h = 1e-5
    for t in (0.1, 0.5, 0.9):
        fd = (gw.q_uniform(t + h) - gw.q_uniform(t - h)) / (2 * h)
        assert abs(fd + gw.q_uniform(t) ** 2) < 1e-8


def test_lex_partial_derivative_identity():
    # dq(x,y)/dy = -q(x,y) * q(y,x) for the lex closed form
    h = 1e-6
    for x, y in ((0.2, 0.7), (0.9, 0.4)):
        fd = (gw.q_lex(x, y + h) - gw.q_lex(x, y - h)) / (2 * h)
        assert abs(fd + gw.q_lex(x, y) * gw.q_lex(y, x)) < 1e-7


def test_lex_quadrature_matches_constant():
    assert abs(gw.lex_integral_quadrature(100) - FOCRS) < 1e-10
    assert abs(gw.lex_integral_quadrature(40) - FOCRS) < 1e-10


def test_q_table_closed_shapes():
    grid = np.linspace(0.0, 1.0, 5)
    tu = gw.q_table_closed("uniform", grid)
    assert tu.shape == (5,)
    tl = gw.q_table_closed("lex", grid)
    assert tl.shape == (5, 5)
    assert np.allclose(tl[:, 0], 1.0)


# --- explicit sampler ---------------------------------------------------------

def test_sample_gw_replays_and_is_consistent():
    t1 = gw.sample_gw(_rng.stream(5, "tree", 0))
    t2 = gw.sample_gw(_rng.stream(5, "tree", 0))
    assert np.array_equal(t1.parents, t2.parents)
    assert t1.size == t2.size
    assert t1.parents[0] == t1.parents[1] == -1
    # offspring counts match parent pointers when not truncated
    if not t1.truncated:
        counts = np.zeros(t1.size, dtype=np.int64)
        for p in t1.parents[2:]:
            counts[p] += 1
        assert np.array_equal(counts, t1.offspring)


def test_sample_gw_truncates_at_cap():
    trunc = 0
    for i in range(200):
        t = gw.sample_gw(_rng.stream(6, "tree", i), node_cap=4)
        trunc += t.truncated
        assert t.size <= 4 or t.truncated
    assert trunc > 0


def test_greedy_on_gw_rejects_truncated():
    t = gw.GWTree(np.array([-1, -1]), np.array([0, 0]), 2, True)
    with pytest.raises(ValueError):
        gw.greedy_on_gw(t, "uniform", FakeRng([0.5, 0.1, 0.1]))


def test_greedy_on_gw_roots_only_always_match():
    t = _tree([-1, -1])
    out = gw.greedy_on_gw(t, "uniform", FakeRng([0.5, 0.0, 0.0]))
    assert out.matched and out.u_unmatched
    out = gw.greedy_on_gw(t, "lex", FakeRng([0.9, 0.1]))
    assert out.matched


def test_greedy_on_gw_bad_child_blocks_uniform():
    t = _tree([-1, -1, 0])
    # child edge arrives at 0.3 < special 0.5: u is taken
    out = gw.greedy_on_gw(t, "uniform", FakeRng([0.5, 0.0, 0.0, 0.3]))
    assert not out.matched and not out.u_unmatched
    # child edge arrives later: no bad child
    out = gw.greedy_on_gw(t, "uniform", FakeRng([0.5, 0.0, 0.0, 0.7]))
    assert out.matched


def test_greedy_on_gw_grandchild_rescues_uniform():
    t = _tree([-1, -1, 0, 2])
    # grandchild (0.1) steals the child (edge time 0.3) before it can block u
    out = gw.greedy_on_gw(t, "uniform", FakeRng([0.5, 0, 0, 0.3, 0.1]))
    assert out.matched
    # grandchild arrives after the child edge: child still bad for u
    out = gw.greedy_on_gw(t, "uniform", FakeRng([0.5, 0, 0, 0.3, 0.4]))
    assert not out.matched


def test_greedy_on_gw_lex_uses_vertex_seeds():
    t = _tree([-1, -1, 0])
    # child seed 0.3 < v's seed 0.5: (u,w) precedes (u,v), u is taken
    out = gw.greedy_on_gw(t, "lex", FakeRng([0.9, 0.5, 0.3]))
    assert not out.matched
    out = gw.greedy_on_gw(t, "lex", FakeRng([0.9, 0.5, 0.7]))
    assert out.matched


def test_explicit_sampler_matches_closed_form():
    hits = used = 0
    for i in range(6000):
        gen = _rng.stream(31, "tree", i)
        tree = gw.sample_gw(gen, node_cap=10 ** 5)
        if tree.truncated:
            continue
        hits += gw.greedy_on_gw(tree, "uniform", gen).matched
        used += 1
    est = hits / used
    assert abs(est - 0.5) < 4 * binomial_sigma(0.5, used) + 0.01


# --- lazy estimators -----------------------------------------------------------

def test_estimate_match_prob_uniform():
    out = gw.estimate_match_prob("uniform", 120_000, seed=3)
    assert abs(out["match_prob"] - 0.5) < 4 * binomial_sigma(0.5, out["used"])
    assert out["truncated_fraction"] < 1e-4
    assert out["ci_low"] < 0.5 < out["ci_high"]
    # u/v exchangeability under the uniform order
    sym_tol = 4 * binomial_sigma(0.5, out["used"]) * math.sqrt(2)
    assert abs(out["u_unmatched_rate"] - out["v_unmatched_rate"]) < sym_tol


def test_estimate_match_prob_lex():
    out = gw.estimate_match_prob("lex", 120_000, seed=4)
    assert abs(out["match_prob"] - FOCRS) < 4 * binomial_sigma(FOCRS, out["used"])


def test_estimate_match_prob_is_deterministic():
    a = gw.estimate_match_prob("uniform", 30_000, seed=9)
    b = gw.estimate_match_prob("uniform", 30_000, seed=9)
    assert a == b


def test_estimate_q_uniform_grid():
    grid = np.linspace(0.0, 1.0, 6)
    qf = gw.estimate_q("uniform", grid, 40_000, seed=5)
    closed = gw.q_table_closed("uniform", grid)
    for i, t in enumerate(grid):
        tol = 5 * binomial_sigma(closed[i], 40_000) + 1e-9
        assert abs(qf.values[i] - closed[i]) <= tol
    assert qf.values[0] == 1.0  # q(0): no child can precede time 0


def test_estimate_q_lex_grid():
    grid = np.array([0.0, 0.5, 1.0])
    qf = gw.estimate_q("lex", grid, 30_000, seed=6)
    closed = gw.q_table_closed("lex", grid)
    assert np.allclose(qf.values[:, 0], 1.0)  # y=0: nothing precedes
    for i in range(3):
        for j in range(3):
            tol = 5 * binomial_sigma(closed[i, j], 30_000) + 1e-9
            assert abs(qf.values[i, j] - closed[i, j]) <= tol


# --- size and shape statistics --------------------------------------------------

def test_tree_size_walk_matches_pmf():
    sizes, trunc = gw.sample_tree_sizes(50_000, node_cap=10 ** 4, seed=7)
    p2 = float((sizes == 2).mean())
    assert abs(p2 - E2) < 4 * binomial_sigma(E2, 50_000) + 1e-3
    p3 = float((sizes == 3).mean())
    assert abs(p3 - math.exp(-3.0) * 2.0) < 4 * binomial_sigma(p3, 50_000) + 1e-3
    # critical-walk tail decays like cap^{-1/2}
    assert 0.0 < float(trunc.mean()) < 2.5e-2
    assert (sizes[trunc] == 10 ** 4 + 1).all()


def test_truncation_fraction_at_default_cap():
    _, trunc = gw.sample_tree_sizes(20_000, node_cap=10 ** 6, seed=7)
    assert float(trunc.mean()) < 2.5e-3


def test_shape_signatures():
    assert gw.tree_shape_signature(_tree([-1, -1])) == gw.SHAPE_LIBRARY["single_edge"]
    assert gw.tree_shape_signature(_tree([-1, -1, 0])) == gw.SHAPE_LIBRARY["path_u"]
    assert gw.tree_shape_signature(_tree([-1, -1, 1, 1])) == gw.SHAPE_LIBRARY["cherry_v"]
    assert gw.shape_size(gw.SHAPE_LIBRARY["single_edge"]) == 2
    assert gw.shape_size(gw.SHAPE_LIBRARY["cherry_v"]) == 4


def test_shape_closed_probs():
    assert gw.SHAPE_CLOSED_PROB["single_edge"] == pytest.approx(E2)
    assert gw.SHAPE_CLOSED_PROB["path_u"] == pytest.approx(math.exp(-3.0))
    assert gw.SHAPE_CLOSED_PROB["cherry_v"] == pytest.approx(math.exp(-4.0) / 2.0)


def test_estimate_shape_probs():
    out = gw.estimate_shape_probs(60_000, seed=8)
    for name, closed in gw.SHAPE_CLOSED_PROB.items():
        est = out[name]["estimate"]
        assert abs(est - closed) < 4 * binomial_sigma(closed, 60_000)


def test_compare_to_instance_small():
    inst = complete_bipartite(50)
    rows = gw.compare_to_instance(inst, target_edge=0, trials=20_000, seed=9)
    by_shape = {r["shape"]: r for r in rows}
    assert set(by_shape) == set(gw.SHAPE_LIBRARY)
    for r in rows:
        assert r["epsilon"] == pytest.approx(1.0 / 50.0)
        assert r["bound"] > 3 * r["epsilon"] * r["size"] ** 2  # plus 4 sigma
        assert r["ok"] == (r["gap"] <= r["bound"])
        assert r["ok"], r
    single = by_shape["single_edge"]
    assert abs(single["p_tree"] - E2) < 4 * binomial_sigma(E2, 20_000)
    assert single["closed_form"] == pytest.approx(E2)
