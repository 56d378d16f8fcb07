"""Stationarity measures, potentials, complexity bounds and trajectory checks."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np

from . import graphs as G

RECORD_FIELDS = ("run_id", "algo", "graph_kind", "M", "outer_iter", "comm_rounds",
                 "grad_evals", "grad_avg_norm_sq", "consensus_weighted", "h_star",
                 "e_val", "potential", "wall_ms")


@dataclass
class RunRecord:
    run_id: str
    algo: str
    graph_kind: str
    M: int
    outer_iter: int
    comm_rounds: int
    grad_evals: int
    grad_avg_norm_sq: float
    consensus_weighted: float
    h_star: float
    e_val: float
    potential: float
    wall_ms: float

    def row(self) -> list:
        return [getattr(self, k) for k in RECORD_FIELDS]


@lru_cache(maxsize=64)
def lambda_min_FtF(graph: G.Graph) -> float:
    """Smallest nonzero eigenvalue of F^T F (= that of P^{1/2} A^T A P^{1/2})."""
    return G.spectral(G.weighted_laplacian(graph, np.ones(graph.E))).lambda_min_nonzero


def _edge_arrays(graph):
    ei = np.fromiter((i for i, _ in graph.edges), int, graph.E)
    ej = np.fromiter((j for _, j in graph.edges), int, graph.E)
    return ei, ej


def edge_sq_diffs(X, graph, ei=None, ej=None) -> np.ndarray:
    if ei is None:
        ei, ej = _edge_arrays(graph)
    D = X[ei] - X[ej]
    return np.einsum("es,es->e", D, D)


def stationarity(X, problem, graph, grads=None) -> dict:
    """Local and global first-order measures at a stack of iterates X (M, S).

    consensus_weighted = sum_{i~j} sqrt(L_i L_j) ||x_i - x_j||^2 / (M lmin(F^T F)).
    The global measure is ||grad fbar(y)||^2 at the average iterate y.
    """
    X = np.asarray(X, float)
    M = problem.M
    g = problem.grads(X) if grads is None else grads
    gavg = g.mean(axis=0)
    ei, ej = _edge_arrays(graph)
    L = problem.profile.per_node
    cons = float(np.sum(np.sqrt(L[ei] * L[ej]) * edge_sq_diffs(X, graph, ei, ej))
                 / (M * lambda_min_FtF(graph)))
    gn = float(gavg @ gavg)
    y = X.mean(axis=0)
    gg = problem.grad_fbar(y)
    return {"grad_avg_norm_sq": gn, "consensus_weighted": cons,
            "local_measure": gn + cons, "global_measure": float(gg @ gg)}


class Recorder:
    """Builds RunRecords incrementally, keeping running minima."""

    def __init__(self, run_id, algo, problem, graph, sigma2=None):
        self.run_id, self.algo = run_id, algo
        self.problem, self.graph = problem, graph
        self.sigma2 = sigma2
        self.ei, self.ej = _edge_arrays(graph)
        L = problem.profile.per_node
        self.K = np.sqrt(L[self.ei] * L[self.ej])
        self.cscale = 1.0 / (problem.M * lambda_min_FtF(graph))
        self.records: list = []
        self.h_star = math.inf
        self.e_min = math.inf
        self._t0 = None

    def start(self, t0):
        self._t0 = t0

    def add(self, r, comm, grads_count, X, g, potential=math.nan, now=0.0) -> RunRecord:
        gavg = g.mean(axis=0)
        gn = float(gavg @ gavg)
        sq = edge_sq_diffs(X, self.graph, self.ei, self.ej)
        cons = float(np.sum(self.K * sq) * self.cscale)
        self.h_star = min(self.h_star, gn + cons)
        e_val = math.nan
        if self.sigma2 is not None:
            e_val = gn + float(np.sum(self.sigma2 * sq))
            self.e_min = min(self.e_min, e_val)
        rec = RunRecord(self.run_id, self.algo, self.graph.kind, self.problem.M, int(r),
                        int(comm), int(grads_count), gn, cons, self.h_star, e_val,
                        float(potential), (now - self._t0) * 1e3 if self._t0 else 0.0)
        self.records.append(rec)
        return rec

    def reached(self, target, measure) -> bool:
        if target is None:
            return False
        v = self.h_star if measure == "h_star" else self.e_min
        return v <= target


# ---------------------------------------------------------------------------
# potentials

def sqnorm(X, w=None) -> float:
    """||X||^2_W for a diagonal weight vector (node or edge) or a full matrix."""
    X = np.asarray(X, float)
    if w is None:
        return float(np.sum(X * X))
    w = np.asarray(w, float)
    if w.ndim == 1:
        return float(np.sum(w[:, None] * X * X))
    return float(np.sum(X * (w @ X)))


def augmented_lagrangian(problem, X, lam, F, sigma2) -> float:
    FX = F @ X
    return problem.f(X) + float(np.sum(lam * FX)) + 0.5 * sqnorm(FX, sigma2)


def potential_dgpda(problem, params, x_new, x_old, lam_new) -> float:
    """AL + (2 kappa/M^2)||Y^{-1} L dx||^2 + (c/2)(||Sigma F x||^2 + ||dx||^2_{H + L/M})."""
    st = params.struct
    M, L = st.M, st.L
    dx = x_new - x_old
    al = augmented_lagrangian(problem, x_new, lam_new, st.F, params.sigma2)
    t1 = 2 * params.kappa / M ** 2 * sqnorm(dx, L * L / params.beta2)
    HL = params.H + np.diag(L / M)
    t2 = 0.5 * params.c * (sqnorm(st.F @ x_new, params.sigma2) + sqnorm(dx, HL))
    return al + t1 + t2


def potential_xfilter(problem, params, x_new, x_old, lam_new) -> float:
    """AL + (3k/M^2)||Y^{-1}L dx||^2 + (3k/8)||dx||^2_{Y2R} + (c/2)(||SFx||^2 + ||dx||^2_{Y2 + Y2R/4 + L/M})."""
    st = params.struct
    M, L = st.M, st.L
    k, c = params.kappa, params.c
    dx = x_new - x_old
    Y2R = params.Y2R
    al = augmented_lagrangian(problem, x_new, lam_new, st.F, params.sigma2)
    t1 = 3 * k / M ** 2 * sqnorm(dx, L * L * params.beta2_inv)
    t2 = 3 * k / 8 * sqnorm(dx, Y2R)
    W = np.diag(params.beta2 + L / M) + 0.25 * Y2R
    t3 = 0.5 * c * (sqnorm(st.F @ x_new, params.sigma2) + sqnorm(dx, W))
    return al + t1 + t2 + t3


class PotentialEvaluator:
    """Potential with the weight matrices assembled once per run."""

    def __init__(self, problem, params, algo):
        st = params.struct
        M, L = st.M, st.L
        self.problem, self.F, self.sigma2 = problem, st.F, params.sigma2
        self.c = params.c
        if algo == "dgpda":
            self.wdiag = 2 * params.kappa / M ** 2 * L * L / params.beta2
            self.W = 0.5 * params.c * (params.H + np.diag(L / M))
        else:
            Y2R = params.Y2R
            k = params.kappa
            self.wdiag = 3 * k / M ** 2 * L * L * params.beta2_inv
            self.W = (3 * k / 8 * Y2R
                      + 0.5 * params.c * (np.diag(params.beta2 + L / M) + 0.25 * Y2R))

    def __call__(self, x_new, x_old, lam_new) -> float:
        dx = x_new - x_old
        FX = self.F @ x_new
        s2 = self.sigma2[:, None]
        al = self.problem.f(x_new) + float(np.sum(lam_new * FX)) + 0.5 * float(np.sum(s2 * FX * FX))
        return (al + sqnorm(dx, self.wdiag) + sqnorm(dx, self.W)
                + 0.5 * self.c * float(np.sum(s2 * FX * FX)))


def potential(states, r, algo, params, problem) -> float:
    """P^{r+1} (or its filtered counterpart) from stored states r and r+1."""
    a, b = states[r], states[r + 1]
    fn = potential_dgpda if algo == "dgpda" else potential_xfilter
    return fn(problem, params, b["x"], a["x"], b["lam"])


def initial_potential_bound(problem, x0, factor) -> float:
    """f(x0) + (factor/M) d0^T L^{-1} d0 (factor 2 or 5)."""
    d0 = problem.d0
    Li = G.pinv_diag(problem.profile.per_node)
    return problem.f(x0) + factor / problem.M * sqnorm(d0, Li)


# ---------------------------------------------------------------------------
# complexity bounds

LB_CONST = 1650 * math.pi ** 2


def lower_bound_iters(gap: float, U: float, eps: float, xi: Optional[float] = None,
                      D: Optional[int] = None, M: Optional[int] = None,
                      form: str = "xi") -> float:
    """Iteration lower bound from the zero-chain construction.

    ``gap`` is f(0) - inf f + ||d0||^2/(M U) (or its L^{-1}-weighted version
    with U = mean L). Forms: 'xi' uses 1/(3 sqrt(xi)), 'diameter' uses D/3,
    'path_star' uses sqrt((D-1)/(2M))/(3 sqrt(xi)). The floor applies only
    to the bracket.
    """
    if gap <= 0 or U <= 0 or eps <= 0:
        raise ValueError("inputs must be positive")
    bracket = math.floor(gap * U / LB_CONST / eps)
    if form == "xi":
        return bracket / (3 * math.sqrt(xi))
    if form == "diameter":
        return D / 3 * bracket
    if form == "path_star":
        return math.sqrt((D - 1) / (2 * M)) / (3 * math.sqrt(xi)) * bracket
    raise ValueError(f"unknown form {form!r}")


def hard_gap(problem, inf_f: float) -> float:
    """f(0) - inf f + ||d0||^2_{L^{-1}} / M for a zero-chain instance."""
    Li = G.pinv_diag(problem.profile.per_node)
    X0 = np.zeros((problem.M, problem.S))
    return problem.f(X0) - inf_f + sqnorm(problem.d0, Li) / problem.M


@dataclass
class UpperBound:
    algo: str
    C1: float
    C2: float
    iters: float
    rounds: float
    detail: dict = field(default_factory=dict)


def upper_bound_iters(algo: str, problem, graph, params, eps: float, x0=None,
                      f_low: Optional[float] = None) -> UpperBound:
    """Iteration budget to reach e(T) <= eps from the rate theorem.

    Primal-dual: C1 = 8(f(x0) - f_low + (2/M) d0^T L^{-1} d0), C2 = 4 sum sigma^2 + sum beta^2 + 4.
    Filtered: C1 = f(x0) - f_low + (5/M) d0^T L^{-1} d0, C2 = 128(sum beta^2 + 3 + 1/(32 kappa)),
    and total rounds multiply the outer budget by the Chebyshev length factor.
    """
    M = problem.M
    if f_low is None:
        f_low = problem.lower_bound
    if f_low is None:
        raise ValueError("a lower bound on f is required")
    if x0 is None:
        x0 = np.zeros((M, problem.S))
    Li = G.pinv_diag(problem.profile.per_node)
    q = sqnorm(problem.d0, Li) / M
    f0 = problem.f(x0)
    if algo == "dgpda":
        C1 = 8 * (f0 - f_low + 2 * q)
        C2 = 4 * params.sigma2.sum() + params.beta2.sum() + 4
        T = C1 * C2 / eps
        return UpperBound(algo, C1, C2, T, T)
    if algo == "xfilter":
        C1 = f0 - f_low + 5 * q
        C2 = 128 * (params.beta2.sum() + 3 + 1 / (32 * params.kappa))
        T = C1 * C2 / eps
        return UpperBound(algo, C1, C2, T, T * params.log_factor,
                          {"log_factor": params.log_factor, "Q": params.Q})
    raise ValueError(f"no upper bound for {algo!r}")


def specialization_constants(kind: str, M: int, U: float, params_dgpda=None,
                             params_xfilter=None) -> dict:
    """Closed-form constants for uniform L_i = U next to the computed ones."""
    out = {"kind": kind, "M": M, "U": U}
    if params_dgpda is not None:
        C2 = 4 * params_dgpda.sigma2.sum() + params_dgpda.beta2.sum() + 4
        out["dgpda_C2"] = float(C2)
        if kind == "complete":
            out["dgpda_C2_closed"] = 400 * U + 4
        elif kind == "cycle":
            out["dgpda_C2_closed"] = 240 * U * M ** 2 + 4
    if params_xfilter is not None:
        p = params_xfilter
        C2 = 128 * (p.beta2.sum() + 3 + 1 / (32 * p.kappa))
        out["xfilter_C2"] = float(C2)
        out["xfilter_C2_over_sqrt_xi"] = float(C2 / math.sqrt(p.Lsub_xi))
        base = 12500 * U + 2560
        factor = {"complete": 1.0, "star": math.sqrt(2), "grid": math.sqrt(M),
                  "path": M, "cycle": M}.get(kind)
        if factor is not None:
            out["xfilter_closed"] = base * factor
    return out


# ---------------------------------------------------------------------------
# trajectory inequalities

@dataclass
class Check:
    name: str
    r: int
    lhs: float
    rhs: float
    scale: float

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def ok(self) -> bool:
        return self.margin >= -1e-8 * max(abs(self.lhs), abs(self.rhs), self.scale)


@dataclass
class InequalityReport:
    algo: str
    checks: list

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def by_name(self) -> dict:
        out = {}
        for c in self.checks:
            s = out.setdefault(c.name, {"n": 0, "failures": 0, "min_rel_margin": math.inf})
            s["n"] += 1
            s["failures"] += 0 if c.ok else 1
            rel = c.margin / max(abs(c.lhs), abs(c.rhs), c.scale, 1e-300)
            s["min_rel_margin"] = min(s["min_rel_margin"], rel)
        return out

    def first_failure(self) -> Optional[Check]:
        return next((c for c in self.checks if not c.ok), None)

    def table(self) -> str:
        lines = [f"{'inequality':<22}{'count':>7}{'fail':>6}{'min rel margin':>18}"]
        for name, s in self.by_name().items():
            lines.append(f"{name:<22}{s['n']:>7}{s['failures']:>6}{s['min_rel_margin']:>18.3e}")
        return "\n".join(lines)

    def jsonl(self) -> str:
        return "\n".join(json.dumps({"inequality": c.name, "iteration": c.r, "lhs": c.lhs,
                                     "rhs": c.rhs, "margin": c.margin, "ok": c.ok})
                         for c in self.checks) + "\n"


def check_trajectory_inequalities(states, params, algo, problem, f_low=None) -> InequalityReport:
    """Evaluate the per-iteration descent inequalities on a stored trajectory.

    ``states`` is the list kept by a run with ``keep_states``: element 0 is
    the starting point x^{-1} = 0 and element r+1 holds x^r, lam^r (and d^r
    for the filtered method).
    """
    if algo == "dgpda":
        checks = _check_dgpda(states, params, problem, f_low)
    elif algo == "xfilter":
        checks = _check_xfilter(states, params, problem, f_low)
    else:
        raise ValueError(f"no inequalities for {algo!r}")
    return InequalityReport(algo, checks)


def _al(problem, st, params, s):
    return augmented_lagrangian(problem, s["x"], s["lam"], st.F, params.sigma2)


def _check_dgpda(states, p, problem, f_low):
    st = p.struct
    M, L, F = st.M, st.L, st.F
    H = p.H
    Delta = p.Delta
    s2inv = 1.0 / p.sigma2
    LYi = L * L / p.beta2  # diag of L Y^{-2} L
    x = [s["x"] for s in states]  # x[k] = x^{k-1}
    P = [potential_dgpda(problem, p, x[k + 1], x[k], states[k + 1]["lam"])
         for k in range(len(states) - 1)]  # P[k] = P^{k}... indexed by r = k
    checks = []
    if f_low is None:
        f_low = problem.lower_bound
    bound0 = initial_potential_bound(problem, x[1], 2.0)
    checks.append(Check("P0_upper", 0, P[0], bound0, abs(bound0)))
    for k in range(1, len(states) - 1):
        # r = k - 1 ; states k -> x^{r}, k+1 -> x^{r+1}
        r = k - 1
        xr, xn, xp = x[k], x[k + 1], x[k - 1]
        dx, dxp = xn - xr, xr - xp
        w = dx - dxp
        dlam = states[k + 1]["lam"] - states[k]["lam"]
        lhs = sqnorm(dlam, s2inv)
        a = sqnorm(dxp, LYi) / M ** 2
        b = sqnorm(w, H)
        checks.append(Check("y_diff", r, lhs, 2 * p.kappa * (a + b), 0.0))
        al_n, al_o = _al(problem, st, p, states[k + 1]), _al(problem, st, p, states[k])
        rhs = (-0.5 * sqnorm(dx, Delta + 2 * p.beta2 - L / M)
               + p.kappa * (2 / M ** 2 * sqnorm(dxp, LYi) + 2 * b))
        checks.append(Check("descent", r, al_n - al_o, rhs, max(abs(al_n), abs(al_o))))
        dec = P[k - 1] - P[k]
        rhs = 0.25 * sqnorm(dx, Delta + p.beta2) + p.kappa * b
        checks.append(Check("final_descent", r, rhs, dec, max(abs(P[k - 1]), abs(P[k]))))
        # optimality of the x-update
        g = problem.grads(xr) / M
        res = (g + F.T @ states[k]["lam"] + F.T @ (p.sigma2[:, None] * (F @ xn)) + H @ dx)
        checks.append(Check("opt_residual", r, float(np.abs(res).max()), 0.0,
                            1e-0 * max(1.0, float(np.abs(g).max()))))
    if f_low is not None:
        for k, v in enumerate(P[1:], start=1):
            checks.append(Check("P_lower", k, f_low, v, abs(v)))
    return checks


def _check_xfilter(states, p, problem, f_low):
    st = p.struct
    M, L, F = st.M, st.L, st.F
    bi = p.beta2_inv
    Y2R = p.Y2R
    R = p.R
    Ybi = np.sqrt(bi)
    s2inv = G.pinv_diag(p.sigma2)
    LYi = L * L * bi
    k_ = p.kappa
    x = [s["x"] for s in states]
    d = [s["d"] for s in states]
    # eps^{r+1} = x^{r+1} - R^{-1} d^r ; store by state index of x^{r+1}
    Rinv = np.linalg.inv(R)
    eps = [None] + [x[k] - Rinv @ d[k - 1] for k in range(1, len(states))]
    P = [potential_xfilter(problem, p, x[k + 1], x[k], states[k + 1]["lam"])
         for k in range(len(states) - 1)]
    checks = []
    if f_low is None:
        f_low = problem.lower_bound
    bound0 = initial_potential_bound(problem, x[1], 5.0)
    checks.append(Check("P0_upper", 0, P[0], bound0, abs(bound0)))
    for k in range(1, len(states)):
        r = k - 2  # this state holds x^{r+1}
        xn, xr = x[k], x[k - 1]
        dx = xn - xr
        nx = sqnorm(dx, Y2R)
        e = eps[k]
        Y2Re = Y2R @ e
        checks.append(Check("eps_a", r, sqnorm(Y2Re), nx / (16 * M), 0.0))
        checks.append(Check("eps_b", r, sqnorm(e, Y2R), nx / (16 * M), 0.0))
        checks.append(Check("eps_c", r, sqnorm(R @ e, p.beta2), nx / (16 * M), 0.0))
        checks.append(Check("eps_d", r, float(np.sum(Y2Re * dx)), 3 * nx / 16, 0.0))
        # error relation and tracking identity
        et = xr - Rinv @ d[k - 1]
        checks.append(Check("error_relation", r, float(np.abs(e - et - dx).max()), 0.0,
                            1e-2 * max(1.0, float(np.abs(xn).max()))))
        if k >= 2:
            ep = eps[k - 1]
            nxp = sqnorm(xr - x[k - 2], Y2R)
            checks.append(Check("eps_e", r, float(np.sum((Y2R @ ep) * dx)), nxp / 8 + nx / 16, 0.0))
        g = problem.grads(xn) / M
        ident = d[k] - (xn - bi[:, None] * g - bi[:, None] * (F.T @ states[k]["lam"]))
        checks.append(Check("tracking_identity", r, float(np.abs(ident).max()), 0.0,
                            1e-0 * max(1.0, float(np.abs(d[k]).max()))))
        if k >= 2:
            rr = k - 2  # transition x^{rr} -> x^{rr+1}
            xp = x[k - 2]
            dxp = xr - xp
            w = dx - dxp
            dlam = states[k]["lam"] - states[k - 1]["lam"]
            ep = eps[k - 1]
            de = R @ (e - ep)
            a = 3 * sqnorm(dxp, LYi) / M ** 2
            b = 3 * sqnorm(w, p.beta2)
            cc = 3 * sqnorm(de, p.beta2)
            checks.append(Check("y_diff_plus", rr, sqnorm(dlam, s2inv), k_ * (a + b + cc), 0.0))
            al_n, al_o = _al(problem, st, p, states[k]), _al(problem, st, p, states[k - 1])
            rhs = (-0.5 * (nx - sqnorm(dx, L / M)) + float(np.sum(Y2Re * dx))
                   + k_ * (a + b + cc))
            checks.append(Check("descent_plus", rr, al_n - al_o, rhs, max(abs(al_n), abs(al_o))))
            dec = P[k - 2] - P[k - 1]
            rhs = nx / 8 + k_ * sqnorm(w, p.beta2)
            checks.append(Check("final_descent_plus", rr, rhs, dec,
                                max(abs(P[k - 2]), abs(P[k - 1]))))
    if f_low is not None:
        for k, v in enumerate(P[1:], start=1):
            checks.append(Check("P_lower", k, f_low, v, abs(v)))
    return checks
