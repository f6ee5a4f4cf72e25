import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from l1fault.errors import GraphError, NotBipartiteError
from l1fault.graph import (
    bipartition,
    build_graph,
    chain_graph,
    check_weak_connectivity,
    grid_graph,
    incidence_matrix,
    neighbors,
    numerical_rank,
)

from conftest import random_connected_graph


def test_single_edge_graph():
    g = build_graph(2, [(1, 2)])
    assert g.N == 1
    assert g.edges == ((1, 2),)


def test_three_node_chain():
    g = build_graph(3, [(1, 2), (2, 3)])
    assert g.M == 3 and g.N == 2
    assert g.degree(2) == 2


@pytest.mark.parametrize(
    "M, edges",
    [(3, [(1, 1)]), (3, [(1, 4)]), (3, [(0, 1)]), (3, [(1, 2), (2, 1)]), (0, []), (3, [(1, 2, 3)])],
)
def test_build_graph_rejects_bad_input(M, edges):
    with pytest.raises(GraphError):
        build_graph(M, edges)


def test_incidence_single_edge():
    np.testing.assert_array_equal(incidence_matrix(chain_graph(2)), [[1.0], [-1.0]])


def test_incidence_chain3():
    D = incidence_matrix(chain_graph(3))
    np.testing.assert_array_equal(D, [[1, 0], [-1, 1], [0, -1]])


def test_incidence_empty_edges():
    assert incidence_matrix(build_graph(4, [])).shape == (4, 0)


def test_connectivity_examples():
    assert check_weak_connectivity(chain_graph(3)) == (True, 2)
    assert check_weak_connectivity(build_graph(4, [(1, 2)]))[0] is False
    assert check_weak_connectivity(build_graph(1, [])) == (True, 0)


def test_bipartition_chain():
    p = bipartition(chain_graph(3))
    assert p.class_one == {1, 3} and p.class_two == {2}


def test_bipartition_triangle_names_edge():
    with pytest.raises(NotBipartiteError, match=r"edge \("):
        bipartition(build_graph(3, [(1, 2), (2, 3), (3, 1)]))


def test_bipartition_star():
    p = bipartition(build_graph(5, [(1, j) for j in range(2, 6)]))
    assert p.class_one == {1} and p.class_two == {2, 3, 4, 5}


def test_bipartition_disconnected():
    with pytest.raises(GraphError):
        bipartition(build_graph(3, [(1, 2)]))


def test_grid_bipartition_checkerboard():
    p = bipartition(grid_graph(3, 3))
    assert p.class_one == {1, 3, 5, 7, 9}


def test_neighbors_examples():
    g = chain_graph(3)
    assert neighbors(g, 2) == {1, 3}
    assert neighbors(g, 1) == {2}
    with pytest.raises(GraphError):
        neighbors(g, 9)


@settings(max_examples=40, deadline=None)
@given(M=st.integers(2, 10), seed=st.integers(0, 10_000))
def test_connected_graph_incidence_rank_and_kernel(M, seed):
    g = random_connected_graph(np.random.default_rng(seed), M)
    D = incidence_matrix(g)
    assert numerical_rank(D) == M - 1
    np.testing.assert_allclose(D.T @ (2.5 * np.ones(M)), 0.0, atol=1e-12)
    s = np.linalg.svd(D.T, compute_uv=False)
    nullity = M - int(np.sum(s > 1e-8 * s[0]))
    assert nullity == 1


@settings(max_examples=30, deadline=None)
@given(M=st.integers(2, 10), seed=st.integers(0, 10_000))
def test_bipartition_is_valid_and_deterministic(M, seed):
    g = random_connected_graph(np.random.default_rng(seed), M, extra=0.0)  # trees are bipartite
    p = bipartition(g)
    assert 1 in p.class_one
    assert p.class_one | p.class_two == set(g.nodes)
    for i, j in g.edges:
        assert p.class_of(i) != p.class_of(j)
    assert bipartition(g) == p
