"""Undirected graphs, their scaled incidence matrices and spectral summaries."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

KINDS = ("path", "cycle", "star", "complete", "grid", "random_geometric",
         "path_star", "from_edge_list")


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    """Connected, undirected, unweighted graph.

    Nodes are 0-based internally. Edges are stored as ``(i, j)`` with
    ``i > j`` and sorted lexicographically, which fixes the row layout of
    every edge-by-node matrix.
    """

    M: int
    edges: tuple
    kind: str = "custom"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.M < 2:
            raise GraphError("need at least 2 nodes")
        canon = set()
        for i, j in self.edges:
            if i == j:
                raise GraphError(f"self-loop at node {i}")
            if not (0 <= i < self.M and 0 <= j < self.M):
                raise GraphError(f"edge ({i},{j}) out of range")
            e = (max(i, j), min(i, j))
            if e in canon:
                raise GraphError(f"duplicate edge {e}")
            canon.add(e)
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        if not _connected(self.M, self.edges):
            raise GraphError("graph is not connected")

    @property
    def E(self) -> int:
        return len(self.edges)

    @cached_property
    def neighbors(self) -> tuple:
        nb = [[] for _ in range(self.M)]
        for i, j in self.edges:
            nb[i].append(j)
            nb[j].append(i)
        return tuple(tuple(sorted(n)) for n in nb)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(n) for n in self.neighbors], dtype=float)

    @cached_property
    def distances(self) -> np.ndarray:
        """All-pairs hop distances by repeated BFS."""
        return np.array([_bfs(self.neighbors, s) for s in range(self.M)])

    @cached_property
    def diameter(self) -> int:
        return int(self.distances.max())

    def edge_index(self) -> dict:
        return {e: k for k, e in enumerate(self.edges)}

    def to_edge_list(self) -> str:
        lines = [f"{self.M} {self.E}"]
        lines += [f"{i + 1} {j + 1}" for i, j in self.edges]
        return "\n".join(lines) + "\n"


def _bfs(nb, s):
    dist = [-1] * len(nb)
    dist[s] = 0
    q = deque([s])
    while q:
        u = q.popleft()
        for v in nb[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


def _connected(M, edges) -> bool:
    nb = [[] for _ in range(M)]
    for i, j in edges:
        nb[i].append(j)
        nb[j].append(i)
    return min(_bfs(nb, 0)) >= 0


def parse_edge_list(text: str) -> Graph:
    """Parse the ``M E`` header plus 1-based ``i j`` lines format."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            rows.append((lineno, line.split()))
    if not rows:
        raise GraphError("empty edge list")
    lineno, head = rows[0]
    if len(head) != 2:
        raise GraphError(f"line {lineno}: expected 'M E' header")
    M, E = int(head[0]), int(head[1])
    edges = []
    for lineno, tok in rows[1:]:
        if len(tok) != 2:
            raise GraphError(f"line {lineno}: expected 'i j'")
        i, j = int(tok[0]), int(tok[1])
        if i <= j:
            raise GraphError(f"line {lineno}: edge must satisfy i > j")
        edges.append((i - 1, j - 1))
    if len(edges) != E:
        raise GraphError(f"header declares {E} edges, found {len(edges)}")
    return Graph(M, tuple(edges), kind="from_edge_list")


def generate(kind: str, M: int, opts: Optional[dict] = None, seed: int = 0) -> Graph:
    """Build a connected graph of a named family.

    Parameters
    ----------
    kind : str
        One of ``KINDS``.
    M : int
        Number of nodes (ignored for ``from_edge_list``).
    opts : dict, optional
        ``radius`` for random_geometric, ``D`` for path_star,
        ``path`` or ``text`` for from_edge_list.
    seed : int
        Seed for random families.
    """
    opts = dict(opts or {})
    if kind == "from_edge_list":
        if "text" in opts:
            return parse_edge_list(opts["text"])
        with open(opts["path"]) as fh:
            return parse_edge_list(fh.read())
    if M < 2:
        raise GraphError("M must be >= 2")
    if kind == "path":
        edges = [(i + 1, i) for i in range(M - 1)]
    elif kind == "cycle":
        if M < 3:
            raise GraphError("cycle needs M >= 3")
        edges = [(i + 1, i) for i in range(M - 1)] + [(M - 1, 0)]
    elif kind == "star":
        edges = [(i, 0) for i in range(1, M)]
    elif kind == "complete":
        edges = [(i, j) for i in range(M) for j in range(i)]
    elif kind == "grid":
        n = int(round(np.sqrt(M)))
        if n * n != M:
            raise GraphError(f"grid needs a square node count, got {M}")
        edges = []
        for r in range(n):
            for c in range(n):
                v = r * n + c
                if c + 1 < n:
                    edges.append((v + 1, v))
                if r + 1 < n:
                    edges.append((v + n, v))
    elif kind == "random_geometric":
        return _random_geometric(M, float(opts.get("radius", 0.5)), seed,
                                 int(opts.get("max_retries", 100)))
    elif kind == "path_star":
        return _path_star(M, int(opts["D"]))
    else:
        raise GraphError(f"unknown graph kind {kind!r}")
    return Graph(M, tuple(edges), kind=kind)


def _random_geometric(M, radius, seed, max_retries):
    if not 0 < radius < 1:
        raise GraphError("radius must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    for attempt in range(max_retries):
        pts = rng.random((M, 2))
        dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        edges = [(i, j) for i in range(M) for j in range(i) if dist[i, j] < radius]
        if _connected(M, edges):
            return Graph(M, tuple(edges), kind="random_geometric",
                         meta={"radius": radius, "attempts": attempt + 1,
                               "points": pts})
    raise GraphError(f"random geometric graph with radius {radius} stayed "
                     f"disconnected after {max_retries} placements")


def _path_star(M, D):
    if D < 2 or D > M - 1:
        raise GraphError(f"path_star needs 2 <= D <= M-1, got D={D}, M={M}")
    n_path = D - 1
    n_rest = M - n_path
    # distribute leaves round-robin, both path ends first so that
    # the two extreme groups are nonempty whenever possible
    order = [0, n_path - 1] + list(range(1, n_path - 1)) if n_path > 1 else [0]
    groups = [[] for _ in range(n_path)]
    for k in range(n_rest):
        groups[order[k % len(order)]].append(n_path + k)
    edges = [(i + 1, i) for i in range(n_path - 1)]
    for hub, leaves in enumerate(groups):
        edges += [(leaf, hub) for leaf in leaves]
    g = Graph(M, tuple(edges), kind="path_star",
              meta={"D": D, "groups": [list(x) for x in groups]})
    if g.diameter != D:
        raise GraphError(f"cannot realise diameter {D} with M={M}")
    return g


@dataclass
class GraphMatrices:
    A: np.ndarray
    F: np.ndarray
    B: np.ndarray
    P: np.ndarray
    Delta: np.ndarray
    sigma2: np.ndarray

    @property
    def laplacian(self) -> np.ndarray:
        """Normalized Laplacian A^T A."""
        return self.A.T @ self.A


def incidence(g: Graph) -> np.ndarray:
    """Signed 0/1 incidence with +1 at the larger endpoint (this is F)."""
    F = np.zeros((g.E, g.M))
    for k, (i, j) in enumerate(g.edges):
        F[k, i] = 1.0
        F[k, j] = -1.0
    return F


def matrices(g: Graph, edge_weights: Optional[Sequence[float]] = None) -> GraphMatrices:
    """Incidence-derived matrices, with optional edge weights Sigma^2."""
    d = g.degrees
    F = incidence(g)
    A = F / np.sqrt(d)[None, :]
    B = np.abs(F)
    s2 = np.ones(g.E) if edge_weights is None else np.asarray(edge_weights, float)
    if s2.shape != (g.E,) or np.any(s2 <= 0):
        raise ValueError("edge weights must be a positive vector of length E")
    Delta = np.zeros(g.M)
    np.add.at(Delta, [i for i, _ in g.edges], s2)
    np.add.at(Delta, [j for _, j in g.edges], s2)
    return GraphMatrices(A=A, F=F, B=B, P=np.diag(d), Delta=np.diag(Delta), sigma2=s2)


def pinv_diag(v) -> np.ndarray:
    """Elementwise pseudo-inverse of a diagonal given as a vector."""
    v = np.asarray(v, float)
    out = np.zeros_like(v)
    nz = v != 0
    out[nz] = 1.0 / v[nz]
    return out


def generalized_laplacian(g: Graph, upsilon, sigma2) -> np.ndarray:
    """Upsilon^{-1} F^T Sigma^2 F Upsilon^{-1} for diagonal inputs given as vectors.

    Zero entries of ``upsilon`` are inverted as zero (pseudo-inverse).
    """
    F = incidence(g)
    s2 = np.asarray(sigma2, float)
    ui = pinv_diag(upsilon)
    G = F.T @ (s2[:, None] * F)
    return ui[:, None] * G * ui[None, :]


def weighted_laplacian(g: Graph, sigma2) -> np.ndarray:
    """F^T Sigma^2 F."""
    return generalized_laplacian(g, np.ones(g.M), sigma2)


def normalized_laplacian(g: Graph) -> np.ndarray:
    return generalized_laplacian(g, np.sqrt(g.degrees), np.ones(g.E))


@dataclass(frozen=True)
class SpectralSummary:
    lambda_max: float
    lambda_min_nonzero: float
    xi: float
    eigenvalues: np.ndarray = field(compare=False, repr=False)


def spectral(Msym: np.ndarray, zero_tol: Optional[float] = None) -> SpectralSummary:
    """Largest and smallest nonzero eigenvalue of a symmetric PSD matrix.

    Eigenvalues below ``zero_tol`` (default ``1e-9 * lambda_max``) count as zero.
    """
    Msym = np.asarray(Msym, float)
    if not np.allclose(Msym, Msym.T, atol=1e-10, rtol=0):
        raise ValueError("matrix is not symmetric")
    w = np.linalg.eigvalsh(0.5 * (Msym + Msym.T))
    lmax = float(w[-1])
    tol = 1e-9 * lmax if zero_tol is None else zero_tol
    nz = w[w > tol]
    if lmax <= 0 or nz.size == 0:
        raise ValueError("degenerate matrix: all eigenvalues are numerically zero")
    lmin = float(nz[0])
    return SpectralSummary(lmax, lmin, lmin / lmax, w)


def degree_uniformity_k(g: Graph) -> float:
    """Smallest k with k*P >= mean(d)*I."""
    d = g.degrees
    return float(d.mean() / d.min())


def laplacian_eigs_closed_form(kind: str, M: int) -> Optional[np.ndarray]:
    """Known spectra of the normalized Laplacian, sorted ascending."""
    m = np.arange(M)
    if kind == "complete":
        w = np.r_[0.0, np.full(M - 1, M / (M - 1))]
    elif kind == "star":
        w = np.r_[0.0, np.ones(M - 2), 2.0]
    elif kind == "path":
        w = 1 - np.cos(np.pi * m / (M - 1))
    elif kind == "cycle":
        w = 1 - np.cos(2 * np.pi * m / M)
    else:
        return None
    return np.sort(w)


def longest_shortest_path(g: Graph) -> list:
    """Node sequence of a shortest path realising the diameter."""
    dist = g.distances
    s, t = np.unravel_index(np.argmax(dist), dist.shape)
    path = [int(t)]
    while path[-1] != s:
        u = path[-1]
        path.append(min(v for v in g.neighbors[u] if dist[s, v] == dist[s, u] - 1))
    return path[::-1]


def from_edges(M: int, edges: Iterable, kind: str = "custom") -> Graph:
    return Graph(M, tuple((int(i), int(j)) for i, j in edges), kind=kind)
