"""Instance families: shapes, loads, layout conventions, determinism."""
import numpy as np
import pytest

from crslab import generators as G
from crslab.instances import validate


def test_path_shape():
    inst = G.path(2, 0.5)
    assert inst.edge_count == 2
    assert inst.vertex_count == 3
    assert validate(inst).ok
    with pytest.raises(ValueError):
        G.path(0, 0.5)
    with pytest.raises(ValueError):
        G.path(3, 0.6)


def test_cycle_shape():
    inst = G.cycle(31, 0.5)
    assert inst.edge_count == 31
    assert validate(inst).ok
    assert validate(inst).one_regular
    with pytest.raises(ValueError):
        G.cycle(2, 0.5)
    with pytest.raises(ValueError):
        G.cycle(5, 0.51)


def test_star_gadget_shape():
    inst = G.star_gadget(12)
    assert inst.edge_count == 25
    assert inst.vertex_count == 26
    assert inst.metadata["center_edge"] == "0"
    assert np.allclose(inst.xs, 1.0 / 13.0)
    # both center endpoints carry full load 13 * (1/13) = 1
    deg = inst.fractional_degrees
    assert abs(deg[0] - 1.0) < 1e-12
    assert abs(deg[1] - 1.0) < 1e-12
    assert validate(inst).ok


def test_general_hard_layout_and_loads():
    n = 8
    inst = G.general_hard(n)
    assert inst.edge_count == n + n * (n - 1) // 2 + n * (n - 2)
    deg = inst.fractional_degrees
    # every spoke is exactly 1-regular: 1/n + (n-1)/(n(n-1)) + (n-2)/n
    assert np.allclose(deg[1:n + 1], 1.0)
    assert validate(inst).ok
    # hub edges first, then clique, then leaf blocks
    assert inst.us[0] == 0 and inst.vs[0] == 1
    assert inst.us[n] == 1 and inst.vs[n] == 2
    assert int(inst.us[n + n * (n - 1) // 2]) == 1


def test_tree_hard_layout_and_loads():
    n = 9
    inst = G.tree_hard(n)
    assert inst.edge_count == n + n * (n - 1)
    deg = inst.fractional_degrees
    assert np.allclose(deg[1:n + 1], 1.0)
    assert abs(deg[0] - 1.0) < 1e-12
    assert validate(inst).ok


def test_complete_bipartite():
    inst = G.complete_bipartite(10)
    assert inst.edge_count == 100
    assert validate(inst).one_regular
    # bipartite: left endpoints 0..9, right 10..19
    assert inst.us.max() < 10 <= inst.vs.min()


def test_er_one_regular_deterministic_and_capped():
    a = G.er_one_regular(100, seed=5)
    b = G.er_one_regular(100, seed=5)
    assert np.array_equal(a.us, b.us) and np.array_equal(a.vs, b.vs)
    c = G.er_one_regular(100, seed=6)
    assert not (np.array_equal(a.us, c.us) and np.array_equal(a.vs, c.vs))
    assert a.edge_count == 100  # round(2.0 * 100 / 2)
    assert validate(a).ok
    assert np.allclose(a.xs, 0.01)


def test_er_one_regular_scales():
    inst = G.er_one_regular(2000, seed=0)
    assert inst.edge_count == 2000
    assert validate(inst).ok
