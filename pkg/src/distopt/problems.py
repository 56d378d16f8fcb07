"""Local objective families behind a common value/gradient oracle interface."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import graphs as G

E1 = 1.0 - np.exp(-1.0)


@dataclass(frozen=True)
class LipschitzProfile:
    per_node: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.per_node, float)
        if v.ndim != 1 or np.any(v < 0):
            raise ValueError("Lipschitz constants must be a nonnegative vector")
        object.__setattr__(self, "per_node", v)

    @property
    def mean(self) -> float:
        return float(self.per_node.mean())

    @property
    def max(self) -> float:
        return float(self.per_node.max())

    @property
    def min(self) -> float:
        return float(self.per_node.min())

    @property
    def L(self) -> np.ndarray:
        return np.diag(self.per_node)

    @classmethod
    def uniform(cls, M, U):
        return cls(np.full(M, float(U)))


class ProblemInstance:
    """M smooth local functions f_i : R^S -> R; f is their average.

    Subclasses implement ``values`` and ``grads`` on an (M, S) stack, with
    row i evaluated by f_i. ``grads`` returns the local gradients without
    the 1/M factor; the gradient of f is ``grads(X) / M``.
    """

    family = "generic"

    def __init__(self, M: int, S: int, profile: LipschitzProfile,
                 lower_bound: Optional[float] = None, meta: Optional[dict] = None):
        self.M = M
        self.S = S
        self.profile = profile
        self.lower_bound = lower_bound
        self.meta = dict(meta or {})

    def values(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grads(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def value(self, i: int, x: np.ndarray) -> float:
        X = np.zeros((self.M, self.S))
        X[i] = x
        return float(self.values(X)[i])

    def grad(self, i: int, x: np.ndarray) -> np.ndarray:
        X = np.zeros((self.M, self.S))
        X[i] = x
        return self.grads(X)[i]

    def f(self, X) -> float:
        return float(np.mean(self.values(X)))

    def fbar(self, y) -> float:
        """Average of the local functions at a common point y."""
        return self.f(np.tile(y, (self.M, 1)))

    def grad_fbar(self, y) -> np.ndarray:
        return self.grads(np.tile(y, (self.M, 1))).mean(axis=0)

    @property
    def d0(self) -> np.ndarray:
        return self.grads(np.zeros((self.M, self.S)))

    def describe(self) -> dict:
        return {"family": self.family, "M": self.M, "S": self.S,
                "L": self.profile.per_node.tolist(),
                "lower_bound": self.lower_bound, **{k: v for k, v in self.meta.items()
                                                     if isinstance(v, (int, float, str))}}


class CallableProblem(ProblemInstance):
    """Instance from plain per-node callables; handy for small tests."""

    family = "callable"

    def __init__(self, funcs, grads, S, L, lower_bound=None, meta=None):
        super().__init__(len(funcs), S, LipschitzProfile(np.asarray(L, float)),
                         lower_bound, meta)
        self._f = list(funcs)
        self._g = list(grads)

    def values(self, X):
        return np.array([self._f[i](X[i]) for i in range(self.M)])

    def grads(self, X):
        return np.array([np.asarray(self._g[i](X[i]), float).reshape(self.S)
                         for i in range(self.M)])


def quadratic_problem(centers, weights=None, lower_bound=0.0) -> CallableProblem:
    """f_i(x) = w_i * ||x - c_i||^2 ; L_i = 2 w_i."""
    C = np.atleast_2d(np.asarray(centers, float))
    if C.shape[0] == 1 and np.ndim(centers) == 1:
        C = C.T
    M, S = C.shape
    w = np.ones(M) if weights is None else np.asarray(weights, float)
    funcs = [lambda x, c=C[i], a=w[i]: float(a * np.sum((x - c) ** 2)) for i in range(M)]
    grads = [lambda x, c=C[i], a=w[i]: 2 * a * (x - c) for i in range(M)]
    return CallableProblem(funcs, grads, S, 2 * np.abs(w), lower_bound=lower_bound,
                           meta={"kind": "quadratic"})


# ---------------------------------------------------------------------------
# zero-chain construction

def psi(w, order=0):
    """Psi(w) = 1 - exp(-w^2) for w > 0, else 0 (and its derivatives)."""
    w = np.asarray(w, float)
    pos = w > 0
    e = np.exp(-np.where(pos, w, 0.0) ** 2)
    if order == 0:
        out = np.where(pos, 1.0 - e, 0.0)
    elif order == 1:
        out = np.where(pos, 2.0 * w * e, 0.0)
    elif order == 2:
        # right limit 2 at the origin
        out = np.where(pos, (2.0 - 4.0 * w * w) * e, 0.0)
        out = np.where(w == 0, 2.0, out)
    else:
        raise ValueError("order must be 0, 1 or 2")
    return out


def phi(w, order=0):
    """Phi(w) = 4 arctan(w) + 2 pi (and its derivatives)."""
    w = np.asarray(w, float)
    if order == 0:
        return 4.0 * np.arctan(w) + 2.0 * np.pi
    if order == 1:
        return 4.0 / (1.0 + w * w)
    if order == 2:
        return -8.0 * w / (1.0 + w * w) ** 2
    raise ValueError("order must be 0, 1 or 2")


def psi_phi(w, order=0):
    return psi(w, order), phi(w, order)


def chain_coefficients(T: int, roles, scale) -> np.ndarray:
    """Weights of the chain links Theta(., j), j = 1..T, for each node.

    ``roles`` holds 'A' (first third), 'B' (middle), 'C' (last third) or
    'D' (zero function); ``scale`` multiplies every link of a node.
    """
    M = len(roles)
    C = np.zeros((M, T))
    half = T // 2
    for i, role in enumerate(roles):
        if role == "D":
            continue
        C[i, 0] = 1.0
        if role == "A":
            C[i, [2 * j - 1 for j in range(1, half + 1)]] = 3.0
        elif role == "C":
            C[i, [2 * j for j in range(1, half + 1)]] = 3.0
        C[i] *= scale[i]
    return C


def chain_value(X, C):
    """h_i(x_i) = sum_j C[i, j-1] Theta(x_i, j) for a stack X of shape (M, T)."""
    X = np.atleast_2d(X)
    theta = np.empty_like(X)
    theta[:, 0] = -psi(1.0) * phi(X[:, 0])
    if X.shape[1] > 1:
        a, b = X[:, :-1], X[:, 1:]
        theta[:, 1:] = psi(-a) * phi(-b) - psi(a) * phi(b)
    return np.sum(C * theta, axis=1)


def chain_grad(X, C):
    X = np.atleast_2d(X)
    g = np.zeros_like(X)
    g[:, 0] = C[:, 0] * (-psi(1.0) * phi(X[:, 0], 1))
    if X.shape[1] > 1:
        a, b = X[:, :-1], X[:, 1:]
        w = C[:, 1:]
        # link j couples coordinates j-1 (a) and j (b)
        da = -psi(-a, 1) * phi(-b) - psi(a, 1) * phi(b)
        db = -psi(-a) * phi(-b, 1) - psi(a) * phi(b, 1)
        g[:, :-1] += w * da
        g[:, 1:] += w * db
    return g


class HardInstance(ProblemInstance):
    """Scaled zero-chain functions f_i(x) = (150 pi eps/U) h_i(x U / (75 pi sqrt(2 eps)))."""

    family = "hard"

    def __init__(self, M, T, U, eps, roles, scale, meta=None):
        scale = np.asarray(scale, float)
        L = U * np.where(np.asarray(roles) == "D", 0.0, scale)
        super().__init__(M, T, LipschitzProfile(L), meta=meta)
        self.T, self.U, self.eps = T, U, eps
        self.roles = list(roles)
        self.C = chain_coefficients(T, roles, scale)
        self.outer = 150.0 * np.pi * eps / U
        self.inner = U / (75.0 * np.pi * np.sqrt(2.0 * eps))
        self.lower_bound = (self.f(np.zeros((M, T)))
                            - self.outer * 10.0 * np.pi * T * float(scale.max()))

    def values(self, X):
        return self.outer * chain_value(np.asarray(X, float) * self.inner, self.C)

    def grads(self, X):
        return (self.outer * self.inner) * chain_grad(np.asarray(X, float) * self.inner, self.C)

    def h_values(self, X):
        return chain_value(X, self.C)

    def h_grads(self, X):
        return chain_grad(X, self.C)


def _thirds(n):
    k = n // 3
    return ["A"] * k + ["B"] * (n - 2 * k) + ["C"] * k


def hard_instance(M: int, T: int, U: float, eps: float, layout="path", D=None,
                  graph: Optional[G.Graph] = None):
    """Zero-chain hard instance and the graph it lives on.

    Parameters
    ----------
    M : int
        Node count, a multiple of 3.
    T : int
        Odd chain length (the per-node dimension).
    U, eps : float
        Uniform Lipschitz constant in (0, 1) and target accuracy.
    layout : {'path', 'path_star', 'general_graph'}
        For 'path_star' pass ``D``; for 'general_graph' pass ``graph``.

    Returns
    -------
    (Graph, HardInstance)
    """
    if M % 3:
        raise ValueError("M must be a multiple of 3")
    if T < 1 or T % 2 == 0:
        raise ValueError("T must be an odd positive integer")
    if not 0 < U < 1:
        raise ValueError("U must lie in (0, 1)")
    if eps <= 0:
        raise ValueError("eps must be positive")
    scale = np.ones(M)
    if layout == "path":
        g = G.generate("path", M)
        roles = _thirds(M)
    elif layout == "path_star":
        g = G.generate("path_star", M, {"D": D})
        # order nodes along the main path, each hub followed by its leaves
        order = []
        for hub, leaves in enumerate(g.meta["groups"]):
            order += [hub] + leaves
        roles = [None] * M
        for pos, node in enumerate(order):
            roles[node] = _thirds(M)[pos]
    elif layout == "general_graph":
        if graph is None:
            raise ValueError("general_graph layout needs a graph")
        g = graph
        if g.M != M:
            raise ValueError("graph node count differs from M")
        path = G.longest_shortest_path(g)
        n = len(path)
        if n < 3:
            raise ValueError("longest path too short for three node sets")
        roles = ["D"] * M
        for node, role in zip(path, _thirds(n)):
            roles[node] = role
            scale[node] = M / n
    else:
        raise ValueError(f"unknown layout {layout!r}")
    meta = {"T": T, "U": U, "eps": eps, "layout": layout, "roles": roles}
    return g, HardInstance(M, T, U, eps, roles, scale, meta)


# ---------------------------------------------------------------------------
# binary classification with a smooth non-convex regularizer

class ClassificationInstance(ProblemInstance):
    family = "classification"

    def __init__(self, V, y, lambda_reg=1e-3, alpha=1.0, L=None, meta=None):
        V = np.asarray(V, float)
        y = np.asarray(y, float)
        if V.ndim != 3 or y.shape != V.shape[:2]:
            raise ValueError("expected features (M, B, K) and labels (M, B)")
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        M, B, K = V.shape
        self.V, self.y = V, y
        self.lam, self.alpha = float(lambda_reg), float(alpha)
        # rows pre-multiplied by labels: margin_j = y_j v_j^T x
        self._YV = V * y[:, :, None]
        if L is None:
            L = self.analytic_lipschitz()
        super().__init__(M, K, LipschitzProfile(L), lower_bound=0.0, meta=meta)

    @property
    def B(self):
        return self.V.shape[1]

    def analytic_lipschitz(self) -> np.ndarray:
        """lambda_max(V_i^T V_i)/(4B) + 2 lambda alpha, an upper bound per node."""
        B = self.V.shape[1]
        top = np.array([np.linalg.eigvalsh(Vi.T @ Vi)[-1] for Vi in self.V])
        return top / (4.0 * B) + 2.0 * self.lam * self.alpha

    def values(self, X):
        z = np.einsum("mbk,mk->mb", self._YV, X)
        loss = np.logaddexp(0.0, -z).mean(axis=1)
        ax2 = self.alpha * X * X
        return loss + self.lam * np.sum(ax2 / (1.0 + ax2), axis=1)

    def grads(self, X):
        z = np.einsum("mbk,mk->mb", self._YV, X)
        s = 0.5 * (1.0 - np.tanh(0.5 * z))  # sigmoid(-z), overflow free
        g = -np.einsum("mbk,mb->mk", self._YV, s) / self.V.shape[1]
        ax2 = self.alpha * X * X
        return g + 2.0 * self.lam * self.alpha * X / (1.0 + ax2) ** 2


def classification_instance(M: int, B: int, K: int, lambda_reg: float = 1e-3,
                            alpha: float = 1.0, seed: int = 0,
                            data_file: Optional[str] = None,
                            lipschitz: str = "analytic",
                            uniform_L: bool = False) -> ClassificationInstance:
    """Logistic loss plus lambda*sum(alpha x^2/(1+alpha x^2)) on each node.

    Synthetic data: standard normal features and labels uniform on {-1, 1}.
    A data file is a CSV with the label in the first column; its rows are
    dealt to nodes in order, B per node.

    ``lipschitz`` selects the per-node constants: 'analytic' uses the
    curvature bound of the logistic term, 'sampled' uses
    ``estimate_gradient_lipschitz`` (radius 10, 2000 pairs, times 1.1).
    ``uniform_L`` replaces every constant by the largest one.
    """
    if B < 1 or K < 1:
        raise ValueError("B and K must be positive")
    if data_file is None:
        rng = np.random.default_rng(seed)
        V = rng.standard_normal((M, B, K))
        y = rng.choice(np.array([-1.0, 1.0]), size=(M, B))
    else:
        raw = np.loadtxt(data_file, delimiter=",", ndmin=2)
        if raw.shape[1] != K + 1:
            raise ValueError(f"data file has {raw.shape[1] - 1} features, expected {K}")
        if raw.shape[0] < M * B:
            raise ValueError(f"data file has {raw.shape[0]} rows, need {M * B}")
        raw = raw[: M * B]
        y = raw[:, 0].reshape(M, B)
        V = raw[:, 1:].reshape(M, B, K)
    meta = {"B": B, "K": K, "lambda": lambda_reg, "alpha": alpha, "seed": seed}
    inst = ClassificationInstance(V, y, lambda_reg, alpha, meta=meta)
    if lipschitz == "sampled":
        L = np.array([1.1 * estimate_gradient_lipschitz(
            lambda x, i=i: inst.grad(i, x), K, 2000, 10.0, seed + i) for i in range(M)])
        inst.profile = LipschitzProfile(L)
    elif lipschitz != "analytic":
        raise ValueError(f"unknown Lipschitz rule {lipschitz!r}")
    if uniform_L:
        inst.profile = LipschitzProfile.uniform(M, inst.profile.max)
    return inst


# ---------------------------------------------------------------------------
# activation functions with gradient-Lipschitz claims

@dataclass
class ScalarOracle:
    name: str
    dim: int
    value: Callable
    grad: Callable
    bound: float


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _sinc_grad(x):
    x = float(x)
    if abs(x) < 1e-4:
        return -x / 3.0 + x ** 3 / 30.0
    return (x * np.cos(x) - np.sin(x)) / (x * x)


def _hinge_value(x):
    x1, x2 = x
    return -x1 * x2 + max(0.0, x1 - 1) ** 2 + max(0.0, -x1 - 1) ** 2


def _hinge_grad(x):
    x1, x2 = x
    return np.array([-x2 + 2 * max(0.0, x1 - 1) - 2 * max(0.0, -x1 - 1), -x1])


def activation_suite() -> list:
    """Scalar test functions paired with their gradient-Lipschitz bounds.

    The bound for log(1+x^2) is its exact curvature maximum 2 (attained at 0);
    every other bound is the value usually quoted for that function.
    """
    s = lambda f: (lambda x: float(f(np.asarray(x, float).reshape(-1)[0])))
    gs = lambda f: (lambda x: np.array([f(np.asarray(x, float).reshape(-1)[0])]))
    return [
        ScalarOracle("sigmoid", 1, s(_sigmoid), gs(lambda t: _sigmoid(t) * (1 - _sigmoid(t))), 1.0),
        ScalarOracle("arctan", 1, s(np.arctan), gs(lambda t: 1 / (1 + t * t)), 1.0),
        ScalarOracle("tanh", 1, s(np.tanh), gs(lambda t: 1 - np.tanh(t) ** 2), 1.0),
        ScalarOracle("logit", 1, s(lambda t: 0.5 * (1 + np.tanh(t / 2))),
                     gs(lambda t: 0.25 * (1 - np.tanh(t / 2) ** 2)), 1.0),
        ScalarOracle("log1p_sq", 1, s(lambda t: np.log1p(t * t)),
                     gs(lambda t: 2 * t / (1 + t * t)), 2.0),
        ScalarOracle("sin", 1, s(np.sin), gs(np.cos), 1.0),
        ScalarOracle("cos", 1, s(np.cos), gs(lambda t: -np.sin(t)), 1.0),
        ScalarOracle("sinc", 1, s(lambda t: np.sinc(t / np.pi)), gs(_sinc_grad), 1.0),
        ScalarOracle("bilinear_hinge", 2, lambda x: float(_hinge_value(np.asarray(x, float))),
                     lambda x: _hinge_grad(np.asarray(x, float)), np.sqrt(2.0) + 1.0),
    ]


def estimate_gradient_lipschitz(grad, dim: int, n_samples: int = 2000,
                                radius: float = 1.0, seed: int = 0,
                                center=None) -> float:
    """Largest observed ||grad(x) - grad(z)|| / ||x - z|| over random pairs.

    Pairs are drawn uniformly from the ball of ``radius`` around ``center``.
    Half of the pairs are close together so that local curvature peaks are
    seen, the rest are independent draws.
    """
    if n_samples < 100:
        raise ValueError("need at least 100 sample pairs")
    rng = np.random.default_rng(seed)
    c = np.zeros(dim) if center is None else np.asarray(center, float)

    def ball(n):
        v = rng.standard_normal((n, dim))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        return c + radius * v * rng.random((n, 1)) ** (1.0 / dim)

    X = ball(n_samples)
    Z = ball(n_samples)
    half = n_samples // 2
    Z[:half] = X[:half] + 1e-3 * radius * (Z[:half] - c) / radius
    best = 0.0
    for x, z in zip(X, Z):
        dx = np.linalg.norm(x - z)
        if dx == 0:
            continue
        best = max(best, float(np.linalg.norm(np.asarray(grad(x)) - np.asarray(grad(z))) / dx))
    return best


def finite_difference_check(problem: ProblemInstance, n_points: int = 20,
                            scale: float = 1.0, seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        X = scale * rng.standard_normal((problem.M, problem.S))
        g = problem.grads(X)
        num = np.zeros_like(X)
        for s in range(problem.S):
            h = 1e-6 * np.maximum(1.0, np.abs(X[:, s]))
            Xp, Xm = X.copy(), X.copy()
            Xp[:, s] += h
            Xm[:, s] -= h
            num[:, s] = (problem.values(Xp) - problem.values(Xm)) / (2 * h)
        err = np.linalg.norm(g - num, axis=1) / np.maximum(1e-8, np.linalg.norm(g, axis=1))
        worst = max(worst, float(err.max()))
    return worst


def sampled_infimum(problem: ProblemInstance, n_starts: int = 5, seed: int = 0) -> float:
    """Upper estimate of inf f; the objective is separable across nodes.

    Each local function is minimised independently from several starts
    with L-BFGS, and the per-node minima are averaged.
    """
    from scipy.optimize import minimize

    rng = np.random.default_rng(seed)
    best = np.full(problem.M, np.inf)
    for i in range(problem.M):
        starts = [np.zeros(problem.S)] + [rng.standard_normal(problem.S) for _ in range(n_starts - 1)]
        for x0 in starts:
            res = minimize(lambda x: problem.value(i, x), x0,
                           jac=lambda x: problem.grad(i, x), method="L-BFGS-B")
            best[i] = min(best[i], float(res.fun))
    return float(best.mean())
