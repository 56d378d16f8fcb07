"""Parameter rules for the primal-dual method and the filtered method."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import graphs as G
from ..problems import ProblemInstance


class ParameterError(ValueError):
    pass


@dataclass
class Structure:
    """Graph data shared by both parameter sets (vector form of diagonals)."""

    graph: G.Graph
    L: np.ndarray
    F: np.ndarray = field(init=False, repr=False)
    B: np.ndarray = field(init=False, repr=False)
    ei: np.ndarray = field(init=False, repr=False)
    ej: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.F = G.incidence(self.graph)
        self.B = np.abs(self.F)
        self.ei = np.array([i for i, _ in self.graph.edges], dtype=int)
        self.ej = np.array([j for _, j in self.graph.edges], dtype=int)

    @property
    def M(self):
        return self.graph.M

    @property
    def K(self) -> np.ndarray:
        """Edge weights sqrt(L_i L_j)."""
        return np.sqrt(self.L[self.ei] * self.L[self.ej])


def _psd_margin(diag_or_mat) -> float:
    A = np.asarray(diag_or_mat, float)
    if A.ndim == 1:
        return float(A.min())
    return float(np.linalg.eigvalsh(0.5 * (A + A.T))[0])


def neighbor_slots(g: G.Graph, edge_weights):
    """Padded neighbor table (M, dmax) of indices and matching edge weights."""
    dmax = int(g.degrees.max())
    idx = np.zeros((g.M, dmax), dtype=int)
    w = np.zeros((g.M, dmax))
    eidx = g.edge_index()
    for i in range(g.M):
        for k, j in enumerate(g.neighbors[i]):
            idx[i, k] = j
            w[i, k] = edge_weights[eidx[(max(i, j), min(i, j))]]
        # padded slots point at the node itself with weight zero
        idx[i, len(g.neighbors[i]):] = i
    return idx, w


@dataclass
class DGPDAParams:
    struct: Structure
    sigma2: np.ndarray
    beta2: np.ndarray
    beta2_scalar: float
    W_lmax: float
    LG_lmin: float
    kappa: float = 0.0
    c: float = 0.0
    nbr_idx: np.ndarray = field(default=None, repr=False)
    nbr_w: np.ndarray = field(default=None, repr=False)

    @property
    def M(self):
        return self.struct.M

    @property
    def Delta(self) -> np.ndarray:
        d = np.zeros(self.M)
        np.add.at(d, self.struct.ei, self.sigma2)
        np.add.at(d, self.struct.ej, self.sigma2)
        return d

    @property
    def H(self) -> np.ndarray:
        B = self.struct.B
        return B.T @ (self.sigma2[:, None] * B) + np.diag(self.beta2)

    @property
    def sigma2_sum(self):
        return float(self.sigma2.sum())

    def psd_margins(self) -> dict:
        L, M = self.struct.L, self.M
        main = (0.5 * (self.Delta + self.beta2) - L / M
                - 4 * self.kappa / M ** 2 * L * L / self.beta2 - 2 * self.c * L / M)
        return {"main": _psd_margin(main),
                "upsilon": _psd_margin(self.beta2 - L * L / self.beta2 / M ** 2)}

    def kappa_bound(self) -> float:
        v = 2 * self.Delta / self.beta2 + 1.0
        return float(v.max() / self.LG_lmin)


def dgpda_params(problem: ProblemInstance, graph: G.Graph, validate: bool = True) -> DGPDAParams:
    """Edge weights sigma^2_ij = beta^2 sqrt(L_i L_j)/sqrt(d_i d_j), Upsilon^2 = beta^2 L.

    beta^2 = 80 max{lambda_max(W), 1} / (min{lambda_min_nz(L_G), 1} M) where
    L_G is the generalized Laplacian with node scaling L^{1/2} and edge
    weights sqrt(L_i L_j)/sqrt(d_i d_j), and W is the diagonal matrix with
    W_ii = sqrt(L_i/d_i) sum_{q~i} sqrt(L_q/d_q).
    """
    L = problem.profile.per_node
    if np.any(L <= 0):
        raise ParameterError("the primal-dual method needs every L_i > 0")
    st = Structure(graph, L)
    d = graph.degrees
    M = graph.M
    base = st.K / np.sqrt(d[st.ei] * d[st.ej])
    LG = G.generalized_laplacian(graph, np.sqrt(L), base)
    lg = G.spectral(LG).lambda_min_nonzero
    r = np.sqrt(L / d)
    W = np.array([r[i] * sum(r[q] for q in graph.neighbors[i]) for i in range(M)])
    wmax = float(W.max())
    b2 = 80.0 * max(wmax, 1.0) / (min(lg, 1.0) * M)
    sigma2 = b2 * base
    p = DGPDAParams(st, sigma2, b2 * L, b2, wmax, lg)
    p.nbr_idx, p.nbr_w = neighbor_slots(graph, sigma2)
    H = p.H
    w, U = np.linalg.eigh(H)
    Hm = (U * (1 / np.sqrt(w))) @ U.T
    Lw = G.weighted_laplacian(graph, sigma2)
    p.kappa = 1.0 / G.spectral(Hm @ Lw @ Hm).lambda_min_nonzero
    p.c = max(6 * p.kappa, 1.0)
    if validate:
        m = p.psd_margins()
        scale = max(1.0, float(np.max(p.beta2)))
        if min(m.values()) < -1e-9 * scale:
            raise ParameterError(f"parameter feasibility check failed: {m}")
    return p


def chebyshev_alphas(rho0: float, Q: int) -> np.ndarray:
    """alpha_1 = 2, alpha_{t+1} = 4/(4 - rho0^2 alpha_t); returns alpha_1..alpha_Q."""
    a = np.empty(max(Q, 1))
    a[0] = 2.0
    for t in range(1, len(a)):
        a[t] = 4.0 / (4.0 - rho0 * rho0 * a[t - 1])
    return a


def chebyshev_Q(eta: float, xi_R: float) -> int:
    """Smallest integer Q >= 1 with 4 rho^{2Q} <= eta under the sqrt(xi) rate."""
    return max(1, math.ceil(-0.25 * math.log(eta / 4.0) * math.sqrt(1.0 / xi_R)))


@dataclass
class XFilterParams:
    struct: Structure
    sigma2: np.ndarray
    beta2: np.ndarray
    choice: str
    Lsub_lmin: float
    Lsub_xi: float
    R: np.ndarray = field(default=None, repr=False)
    lam_min_R: float = 0.0
    lam_max_R: float = 0.0
    xi_R: float = 0.0
    tau: float = 0.0
    rho0: float = 0.0
    kappa: float = 0.0
    c: float = 0.0
    theta: float = 0.0
    eta: float = 0.0
    Q: int = 1
    log_factor: float = 0.0
    alphas: np.ndarray = field(default=None, repr=False)
    nbr_idx: np.ndarray = field(default=None, repr=False)
    nbr_w: np.ndarray = field(default=None, repr=False)

    @property
    def M(self):
        return self.struct.M

    @property
    def beta2_inv(self) -> np.ndarray:
        return G.pinv_diag(self.beta2)

    @property
    def Y2R(self) -> np.ndarray:
        """Upsilon^2 R = F^T Sigma^2 F + Upsilon^2 (symmetric)."""
        return G.weighted_laplacian(self.struct.graph, self.sigma2) + np.diag(self.beta2)

    def psd_margin(self) -> float:
        L, M, k, c = self.struct.L, self.M, self.kappa, self.c
        A = ((0.25 - 3 * k - c) * self.Y2R
             - np.diag((1 + 2 * c) * L / M + 6 * k / M ** 2 * L * L * self.beta2_inv))
        return _psd_margin(A)

    def with_Q(self, Q: int) -> "XFilterParams":
        """Copy with a different inner iteration count."""
        from dataclasses import replace
        return replace(self, Q=int(Q), alphas=chebyshev_alphas(self.rho0, int(Q)))


def xfilter_params(problem: ProblemInstance, graph: G.Graph, choice: str = "I",
                   validate: bool = True, Q: Optional[int] = None) -> XFilterParams:
    """Choice I: Sigma^2 = 48*96k/(sum d * lmin(Lt)) K, Upsilon^2 = 96k/sum(d) P^{1/2} L P^{1/2}.

    Choice II: Sigma^2 = 48*96/(M lmin(Lh)) K, Upsilon^2 = 96/M L.
    Here Lt, Lh are generalized Laplacians with edge weights K = sqrt(L_i L_j)
    and node scaling (P L)^{1/2}, L^{1/2} respectively.

    Nodes with L_i = 0 are inverted through the pseudo-inverse; spectral
    quantities of diagonal matrices are then taken over the positive entries.
    """
    L = problem.profile.per_node
    st = Structure(graph, L)
    M = graph.M
    d = graph.degrees
    _check_components(graph, L)
    K = st.K
    choice = str(choice).upper()
    if choice == "I":
        k = G.degree_uniformity_k(graph)
        Lsub = G.generalized_laplacian(graph, np.sqrt(d * L), K)
        s = G.spectral(Lsub)
        sigma2 = 48 * 96 * k / (d.sum() * s.lambda_min_nonzero) * K
        beta2 = 96 * k / d.sum() * d * L
    elif choice == "II":
        Lsub = G.generalized_laplacian(graph, np.sqrt(L), K)
        s = G.spectral(Lsub)
        sigma2 = 48 * 96 / (M * s.lambda_min_nonzero) * K
        beta2 = 96.0 / M * L
    else:
        raise ParameterError(f"unknown parameter choice {choice!r}")
    p = XFilterParams(st, sigma2, beta2, choice, s.lambda_min_nonzero, s.xi)
    bi = p.beta2_inv
    Lw = G.weighted_laplacian(graph, sigma2)
    p.R = bi[:, None] * Lw + np.eye(M)
    # R is similar to I + Upsilon^{-1} F^T Sigma^2 F Upsilon^{-1}
    LG = G.generalized_laplacian(graph, np.sqrt(beta2), sigma2)
    wG = G.spectral(LG)
    p.lam_min_R = 1.0
    p.lam_max_R = 1.0 + wG.lambda_max
    p.xi_R = p.lam_min_R / p.lam_max_R
    p.tau = 2.0 / (p.lam_min_R + p.lam_max_R)
    p.rho0 = (1 - p.xi_R) / (1 + p.xi_R)
    p.kappa = 1.0 / wG.lambda_min_nonzero
    p.c = 8 * p.kappa
    pos = beta2[beta2 > 0]
    y2r = G.spectral(p.Y2R, zero_tol=0.0 if np.all(beta2 > 0) else None)
    xi_y2 = float(pos.min() / pos.max())
    p.theta = y2r.xi * xi_y2 * min(1.0, float(pos.min()))
    denom = 16 + 128 * M * max(y2r.lambda_max, 1.0)
    p.eta = p.theta ** 2 / (4 + 32 * M * max(y2r.lambda_max, 1.0))
    p.log_factor = -0.25 * math.log(p.theta ** 2 / denom) * math.sqrt(1 / p.xi_R)
    p.Q = max(1, math.ceil(p.log_factor)) if Q is None else int(Q)
    p.alphas = chebyshev_alphas(p.rho0, p.Q)
    p.nbr_idx, p.nbr_w = neighbor_slots(graph, sigma2)
    if validate:
        m = p.psd_margin()
        if m < -1e-9 * max(1.0, float(beta2.max())):
            raise ParameterError(f"parameter feasibility check failed: margin {m}")
    return p


def _check_components(graph, L):
    """At least one node must carry a nonzero function."""
    if np.all(L == 0):
        raise ParameterError("all Lipschitz constants are zero")
