import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from distopt import graphs as G
from distopt import problems as P
from distopt.algorithms import (ParameterError, chebyshev_Q, chebyshev_alphas, chebyshev_solve,
                                contraction_ratio, dgpda_params, xfilter_params)


def uniform_problem(M, U=0.3, S=2):
    c = np.zeros((M, S))
    return P.quadratic_problem(c, np.full(M, U / 2))


def classification(M, seed=0):
    return P.classification_instance(M, 20, 4, seed=seed)


# --- primal-dual parameters ------------------------------------------------

@pytest.mark.parametrize("kind", ["complete", "cycle"])
def test_dgpda_uniform_regular(kind):
    M, U = 6, 0.3
    g = G.generate(kind, M)
    p = dgpda_params(uniform_problem(M, U), g)
    # W_ii = sqrt(U/d) * d * sqrt(U/d) = U
    assert p.W_lmax == pytest.approx(U)
    LG = G.generalized_laplacian(g, np.sqrt(np.full(M, U)), np.full(g.E, U) / g.degrees[0])
    np.testing.assert_allclose(LG, G.normalized_laplacian(g), atol=1e-12)
    if kind == "complete":
        np.testing.assert_allclose(p.sigma2, p.beta2_scalar * U / (M - 1), rtol=1e-12)


def test_dgpda_beta_formula():
    g = G.generate("random_geometric", 10, seed=0)
    prob = classification(10)
    p = dgpda_params(prob, g)
    L, d = prob.profile.per_node, g.degrees
    r = np.sqrt(L / d)
    W = np.array([r[i] * sum(r[q] for q in g.neighbors[i]) for i in range(10)])
    K = np.array([math.sqrt(L[i] * L[j] / (d[i] * d[j])) for i, j in g.edges])
    lg = G.spectral(G.generalized_laplacian(g, np.sqrt(L), K)).lambda_min_nonzero
    b2 = 80 * max(W.max(), 1) / (min(lg, 1) * 10)
    assert p.beta2_scalar == pytest.approx(b2, rel=1e-12)
    np.testing.assert_allclose(p.sigma2, b2 * K, rtol=1e-12)
    np.testing.assert_allclose(p.beta2, b2 * L, rtol=1e-12)


def test_dgpda_kappa_and_feasibility():
    for seed in range(5):
        g = G.generate("random_geometric", 10, seed=seed)
        p = dgpda_params(classification(10, seed), g)
        # kappa from its definition with a dense matrix square root
        S = np.diag(np.sqrt(p.sigma2))
        F = G.matrices(g).F
        Hinv = np.linalg.inv(p.H)
        ref = 1 / G.spectral(S @ F @ Hinv @ F.T @ S).lambda_min_nonzero
        assert p.kappa == pytest.approx(ref, rel=1e-8)
        assert p.kappa <= p.kappa_bound() * (1 + 1e-10)
        assert p.c == max(6 * p.kappa, 1)
        assert min(p.psd_margins().values()) >= -1e-9


def test_dgpda_rejects_zero_L():
    base = G.generate("random_geometric", 12, {"radius": 0.45}, seed=2)
    g, inst = P.hard_instance(12, 3, 0.5, 0.1, "general_graph", graph=base)
    with pytest.raises(ParameterError):
        dgpda_params(inst, g)


# --- filtered-method parameters ----------------------------------------------

@pytest.mark.parametrize("choice", ["I", "II"])
def test_xfilter_kappa_and_lambda_min(choice):
    for seed in range(10):
        g = G.generate("random_geometric", 12, seed=seed)
        p = xfilter_params(classification(12, seed), g, choice)
        assert p.kappa == pytest.approx(1 / 48, rel=1e-9)
        ev = np.linalg.eigvals(p.R).real
        assert ev.min() == pytest.approx(1.0, abs=1e-9)
        assert ev.max() == pytest.approx(p.lam_max_R, rel=1e-9)
        assert p.xi_R >= p.Lsub_xi / 50 * (1 - 1e-12)
        assert p.psd_margin() >= -1e-9
        assert p.c == pytest.approx(8 * p.kappa)


def test_xfilter_path_estimate():
    for M in (5, 10, 20):
        g = G.generate("path", M)
        prob = P.classification_instance(M, 10, 3, uniform_L=True)
        p = xfilter_params(prob, g, "I")
        xi = G.spectral(G.normalized_laplacian(g)).xi
        assert p.Lsub_xi == pytest.approx(xi, rel=1e-9)
        assert p.xi_R >= xi / 50 >= 1 / (50 * M * M)


def test_xfilter_choice_formulas():
    g = G.generate("star", 7)
    prob = classification(7)
    L, d = prob.profile.per_node, g.degrees
    k = d.mean() / d.min()
    p = xfilter_params(prob, g, "I")
    np.testing.assert_allclose(p.beta2, 96 * k / d.sum() * d * L, rtol=1e-12)
    p2 = xfilter_params(prob, g, "II")
    np.testing.assert_allclose(p2.beta2, 96 / 7 * L, rtol=1e-12)
    K = np.array([math.sqrt(L[i] * L[j]) for i, j in g.edges])
    np.testing.assert_allclose(p2.sigma2 / K, p2.sigma2[0] / K[0], rtol=1e-12)


def test_xfilter_Q_and_theta():
    g = G.generate("random_geometric", 10, seed=0)
    p = xfilter_params(classification(10), g)
    Y2R = np.diag(p.beta2) @ p.R
    ev = np.linalg.eigvalsh(0.5 * (Y2R + Y2R.T))
    theta = ev.min() / ev.max() * p.beta2.min() / p.beta2.max() * min(1, p.beta2.min())
    assert p.theta == pytest.approx(theta, rel=1e-8)
    Qreal = -0.25 * math.log(theta ** 2 / (16 + 128 * 10 * max(ev.max(), 1))) * math.sqrt(1 / p.xi_R)
    assert p.Q == math.ceil(Qreal)
    assert p.with_Q(3).Q == 3 and len(p.with_Q(3).alphas) == 3


def test_xfilter_zero_L_pseudoinverse():
    base = G.generate("random_geometric", 12, {"radius": 0.45}, seed=2)
    g, inst = P.hard_instance(12, 3, 0.5, 0.1, "general_graph", graph=base)
    p = xfilter_params(inst, g, "II")
    assert np.all(np.isfinite(p.R)) and p.Q >= 1
    zero = inst.profile.per_node == 0
    assert np.all(p.beta2_inv[zero] == 0)
    allzero = P.quadratic_problem(np.zeros((4, 1)), np.zeros(4))
    with pytest.raises(ParameterError):
        xfilter_params(allzero, G.generate("path", 4))


def test_unknown_choice():
    with pytest.raises(ParameterError):
        xfilter_params(classification(4), G.generate("path", 4), "III")


# --- Chebyshev -----------------------------------------------------------------

def test_alphas_sequence():
    for rho in (0.1, 0.5, 0.9, 0.999):
        a = chebyshev_alphas(rho, 5000)
        assert a[0] == 2
        assert np.all((a[1:] > 1) & (a[1:] < 4))
        # starting from 2 the recursion decreases monotonically to its fixed point
        assert np.all(np.diff(a) <= 0)
        fixed = 2 * (1 - math.sqrt(1 - rho * rho)) / (rho * rho)
        assert a[-1] == pytest.approx(fixed, rel=1e-6)


def test_chebyshev_identity_one_step():
    d = np.array([[1.0], [2.0], [3.0]])
    u = chebyshev_solve(np.eye(3), d, np.zeros((3, 1)), 1, 1.0, 0.0)
    np.testing.assert_array_equal(u, d)


def test_chebyshev_diag_example():
    R = np.diag([1.0, 2.0])
    d = np.array([1.0, 2.0])
    xi = 0.5
    tau, rho = 2 / 3, (1 - xi) / (1 + xi)
    for eta in (1e-2, 1e-6):
        Q = chebyshev_Q(eta, xi)
        ratio = contraction_ratio(R, d, np.zeros(2), Q, tau, rho, np.ones(2))
        assert ratio <= eta
    u = chebyshev_solve(R, d, np.zeros(2), 40, tau, rho)
    np.testing.assert_allclose(u, [1, 1], atol=1e-12)


def test_chebyshev_callable_matches_matrix():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((5, 5))
    R = A @ A.T + np.eye(5)
    ev = np.linalg.eigvalsh(R)
    tau, xi = 2 / (ev[0] + ev[-1]), ev[0] / ev[-1]
    d, u0 = rng.standard_normal((5, 2)), rng.standard_normal((5, 2))
    a = chebyshev_solve(R, d, u0, 7, tau, (1 - xi) / (1 + xi))
    b = chebyshev_solve(lambda u: R @ u, d, u0, 7, tau, (1 - xi) / (1 + xi))
    np.testing.assert_array_equal(a, b)
    with pytest.raises(ValueError):
        chebyshev_solve(R, d, u0, 0, tau, 0.5)


def _orth_krylov(R, v, k):
    """Orthonormal basis of span{v, Rv, ..., R^k v}."""
    V = [v / np.linalg.norm(v)]
    for _ in range(k):
        w = R @ V[-1]
        for q in V:
            w = w - (q @ w) * q
        V.append(w / np.linalg.norm(w))
    return np.array(V).T


def test_chebyshev_krylov_space():
    rng = np.random.default_rng(1)
    M, Q = 20, 4
    g = G.generate("random_geometric", M, seed=1)
    p = xfilter_params(classification(M), g)
    d, u0 = rng.standard_normal(M), rng.standard_normal(M)
    uq = chebyshev_solve(p.R, d, u0, Q, p.tau, p.rho0)
    B, _ = np.linalg.qr(np.c_[_orth_krylov(p.R, u0, Q), _orth_krylov(p.R, d, Q - 1)])
    assert B.shape[1] == 2 * Q + 1 < M
    resid = uq - B @ (B.T @ uq)
    assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(uq)
    # a generic vector is far from this subspace
    z = rng.standard_normal(M)
    assert np.linalg.norm(z - B @ (B.T @ z)) > 0.1 * np.linalg.norm(z)


@pytest.mark.parametrize("eta", [1e-2, 1e-4])
def test_chebyshev_contraction_rgg20(eta):
    rng = np.random.default_rng(0)
    g = G.generate("random_geometric", 20, seed=4)
    p = xfilter_params(classification(20, 4), g)
    Q = chebyshev_Q(eta, p.xi_R)
    assert Q == math.ceil(-0.25 * math.log(eta / 4) * math.sqrt(1 / p.xi_R))
    ratio = contraction_ratio(p.R, rng.standard_normal((20, 3)), rng.standard_normal((20, 3)),
                              Q, p.tau, p.rho0, p.beta2)
    assert ratio <= eta


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 30), st.floats(1e-3, 1.0), st.floats(1e-8, 0.5))
def test_chebyshev_contraction_random_spectrum(n, xi, eta):
    rng = np.random.default_rng(n)
    ev = np.r_[1.0, 1.0 / xi, rng.uniform(1.0, 1.0 / xi, max(n - 2, 0))][:n] if n >= 2 else [1.0]
    Qm, _ = np.linalg.qr(rng.standard_normal((n, n)))
    R = Qm @ np.diag(ev) @ Qm.T
    lo, hi = min(ev), max(ev)
    x = lo / hi
    Q = chebyshev_Q(eta, x)
    ratio = contraction_ratio(R, rng.standard_normal(n), rng.standard_normal(n), Q,
                              2 / (lo + hi), (1 - x) / (1 + x), np.ones(n))
    assert ratio <= eta * (1 + 1e-6) + 1e-20
