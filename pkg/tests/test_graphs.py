import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distopt import graphs as G


def nx_graph(g):
    h = nx.Graph()
    h.add_nodes_from(range(g.M))
    h.add_edges_from(g.edges)
    return h


def test_parse_edge_list_roundtrip():
    text = "4 3\n2 1\n3 2\n4 3\n"
    g = G.parse_edge_list(text)
    assert g.M == 4 and g.edges == ((1, 0), (2, 1), (3, 2))
    assert g.to_edge_list() == text


@pytest.mark.parametrize("text, msg", [
    ("3 2\n1 2\n3 2\n", "i > j"),
    ("3 3\n2 1\n3 2\n", "header declares"),
    ("3\n2 1\n", "header"),
    ("", "empty"),
])
def test_parse_edge_list_errors(text, msg):
    with pytest.raises(G.GraphError, match=msg):
        G.parse_edge_list(text)


def test_disconnected_rejected():
    with pytest.raises(G.GraphError, match="not connected"):
        G.Graph(4, ((1, 0), (3, 2)))


def test_example_path3():
    g = G.generate("path", 3)
    gm = G.matrices(g)
    # edges sorted as (1,0), (2,1); +1 at the larger endpoint
    np.testing.assert_array_equal(gm.F, [[-1, 1, 0], [0, -1, 1]])
    np.testing.assert_array_equal(gm.B, np.abs(gm.F))
    np.testing.assert_array_equal(np.diag(gm.P), [1, 2, 1])
    lap = G.normalized_laplacian(g)
    ref = np.array([[1, -1 / np.sqrt(2), 0], [-1 / np.sqrt(2), 1, -1 / np.sqrt(2)],
                    [0, -1 / np.sqrt(2), 1]])
    np.testing.assert_allclose(lap, ref, atol=1e-15)


@pytest.mark.parametrize("kind", ["path", "cycle", "star", "complete", "grid"])
@pytest.mark.parametrize("M", [4, 9, 16])
def test_normalized_laplacian_matches_networkx(kind, M):
    g = G.generate(kind, M)
    ref = nx.normalized_laplacian_matrix(nx_graph(g), nodelist=range(M)).toarray()
    np.testing.assert_allclose(G.normalized_laplacian(g), ref, atol=1e-12)


@pytest.mark.parametrize("M", [4, 9, 16, 25, 64])
def test_spectral_closed_forms(M):
    for kind, ref in [
        ("complete", np.r_[0.0, np.full(M - 1, M / (M - 1))]),
        ("star", np.r_[0.0, np.ones(M - 2), 2.0]),
        ("path", 1 - np.cos(np.pi * np.arange(M) / (M - 1))),
        ("cycle", 1 - np.cos(2 * np.pi * np.arange(M) / M)),
    ]:
        ev = np.linalg.eigvalsh(G.normalized_laplacian(G.generate(kind, M)))
        np.testing.assert_allclose(ev, np.sort(ref), atol=1e-9)
    s = G.spectral(G.normalized_laplacian(G.generate("complete", M)))
    assert s.xi == pytest.approx(1.0, abs=1e-9)
    s = G.spectral(G.normalized_laplacian(G.generate("star", M)))
    assert s.xi == pytest.approx(0.5, abs=1e-9)
    s = G.spectral(G.normalized_laplacian(G.generate("grid", M)))
    assert s.xi >= 1.0 / M


def test_distances_and_diameter_match_networkx():
    for seed in range(5):
        g = G.generate("random_geometric", 20, {"radius": 0.4}, seed=seed)
        h = nx_graph(g)
        ref = dict(nx.all_pairs_shortest_path_length(h))
        D = np.array([[ref[i][j] for j in range(g.M)] for i in range(g.M)])
        np.testing.assert_array_equal(g.distances, D)
        assert g.diameter == nx.diameter(h)


def test_random_geometric_deterministic():
    a = G.generate("random_geometric", 15, {"radius": 0.5}, seed=3)
    b = G.generate("random_geometric", 15, {"radius": 0.5}, seed=3)
    assert a.edges == b.edges


@pytest.mark.parametrize("M, D", [(9, 3), (12, 4), (10, 5), (7, 6)])
def test_path_star_diameter(M, D):
    g = G.generate("path_star", M, {"D": D})
    assert g.diameter == D
    assert sum(1 + len(leaves) for leaves in g.meta["groups"]) == M


def test_degree_uniformity_k():
    assert G.degree_uniformity_k(G.generate("complete", 6)) == 1
    assert G.degree_uniformity_k(G.generate("cycle", 6)) == 1
    # star: mean degree 2(M-1)/M over min degree 1, below 2
    assert G.degree_uniformity_k(G.generate("star", 6)) < 2
    assert G.degree_uniformity_k(G.generate("path", 6)) < 2


def test_generalized_laplacian_entrywise():
    g = G.generate("random_geometric", 8, seed=1)
    rng = np.random.default_rng(0)
    ups = rng.uniform(0.5, 2, g.M)
    s2 = rng.uniform(0.5, 2, g.E)
    LG = G.generalized_laplacian(g, ups, s2)
    ref = np.zeros((g.M, g.M))
    for k, (i, j) in enumerate(g.edges):
        ref[i, i] += s2[k] / ups[i] ** 2
        ref[j, j] += s2[k] / ups[j] ** 2
        ref[i, j] = ref[j, i] = -s2[k] / (ups[i] * ups[j])
    np.testing.assert_allclose(LG, ref, atol=1e-12)


def test_tilde_laplacian_uniform_path3():
    g = G.generate("path", 3)
    L = np.ones(3)
    K = np.ones(g.E)
    Lt = G.generalized_laplacian(g, np.sqrt(g.degrees * L), K)
    np.testing.assert_allclose(Lt, G.normalized_laplacian(g), atol=1e-12)


def test_closed_form_unknown_kind():
    assert G.laplacian_eigs_closed_form("grid", 9) is None


def test_longest_shortest_path():
    g = G.generate("path_star", 12, {"D": 4})
    p = G.longest_shortest_path(g)
    assert len(p) == g.diameter + 1
    assert g.distances[p[0], p[-1]] == g.diameter


@st.composite
def connected_graphs(draw):
    M = draw(st.integers(2, 12))
    # random spanning tree plus extra edges
    edges = set()
    for v in range(1, M):
        u = draw(st.integers(0, v - 1))
        edges.add((v, u))
    extra = draw(st.lists(st.tuples(st.integers(0, M - 1), st.integers(0, M - 1)), max_size=15))
    for a, b in extra:
        if a != b:
            edges.add((max(a, b), min(a, b)))
    return G.Graph(M, tuple(edges))


@settings(max_examples=60, deadline=None)
@given(connected_graphs())
def test_incidence_invariants(g):
    gm = G.matrices(g)
    assert np.abs(gm.F @ np.ones(g.M)).max() < 1e-12
    np.testing.assert_allclose(0.5 * (gm.F.T @ gm.F + gm.B.T @ gm.B), gm.P, atol=1e-12)
    rng = np.random.default_rng(g.E)
    s2 = rng.uniform(0.1, 3.0, g.E)
    S = np.diag(s2)
    Delta = 0.5 * (gm.F.T @ S @ gm.F + gm.B.T @ S @ gm.B)
    gw = G.matrices(g, s2)
    np.testing.assert_allclose(Delta, gw.Delta, atol=1e-12)
    np.testing.assert_allclose(gm.laplacian, G.normalized_laplacian(g), atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(connected_graphs())
def test_spectral_invariants(g):
    lap = G.normalized_laplacian(g)
    s = G.spectral(lap)
    assert 0 < s.lambda_min_nonzero <= s.lambda_max <= 2 + 1e-12
    assert 0 < s.xi <= 1
    FtF = G.matrices(g).F.T @ G.matrices(g).F
    lmin_ftf = G.spectral(FtF).lambda_min_nonzero
    assert s.lambda_min_nonzero <= lmin_ftf + 1e-9
    assert s.lambda_min_nonzero >= 1.0 / (g.diameter * g.degrees.sum()) - 1e-12
