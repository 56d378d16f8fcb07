"""Self-contained verification suites used by ``distopt verify``."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List

import numpy as np

from . import graphs as G
from . import metrics
from . import problems as P
from . import simulator as sim
from .algorithms import (Stopping, chebyshev_Q, dgpda_params, dgpda_run, dsg_run,
                         xfilter_params, xfilter_run)
from .algorithms.chebyshev import contraction_ratio


@dataclass
class Result:
    suite: str
    name: str
    ok: bool
    value: float
    limit: float
    sense: str = "<="

    @property
    def margin(self) -> float:
        d = self.limit - self.value
        return d if self.sense == "<=" else -d

    def line(self) -> str:
        tag = "ok  " if self.ok else "FAIL"
        return (f"{tag} {self.suite:<10} {self.name:<46} {self.value:.6g} {self.sense} "
                f"{self.limit:.6g} (margin {self.margin:.3g})")


def _le(suite, name, value, limit):
    value, limit = float(value), float(limit)
    return Result(suite, name, bool(value <= limit), value, limit)


# ---------------------------------------------------------------------------

def suite_graph(sizes=(4, 9, 16, 25, 64)) -> List[Result]:
    out = []
    for M in sizes:
        for kind in ("complete", "star", "path", "cycle"):
            if kind == "cycle" and M < 3:
                continue
            g = G.generate(kind, M)
            ev = np.linalg.eigvalsh(G.normalized_laplacian(g))
            ref = np.sort(G.laplacian_eigs_closed_form(kind, M))
            out.append(_le("graph", f"{kind} M={M} eigenvalues", np.abs(ev - ref).max(), 1e-9))
            gm = G.matrices(g)
            half = 0.5 * (gm.F.T @ gm.F + gm.B.T @ gm.B)
            out.append(_le("graph", f"{kind} M={M} (FtF+BtB)/2 = P",
                           np.abs(half - gm.P).max(), 1e-12))
            out.append(_le("graph", f"{kind} M={M} F1 = 0", np.abs(gm.F.sum(axis=1)).max(), 1e-12))
        g = G.generate("grid", M)
        xi = G.spectral(G.normalized_laplacian(g)).xi
        out.append(_le("graph", f"grid M={M} 1/M - xi", 1.0 / M - xi, 0.0))
    return out


def suite_instance(seed: int = 0) -> List[Result]:
    out = []
    prob = P.classification_instance(6, 20, 5, seed=seed)
    out.append(_le("instance", "classification gradient vs differences",
                   P.finite_difference_check(prob, 5, seed=seed), 1e-5))
    g, hard = P.hard_instance(9, 5, 0.5, 0.1)
    out.append(_le("instance", "hard instance gradient vs differences",
                   P.finite_difference_check(hard, 5, scale=3.0, seed=seed), 1e-5))
    d0 = float(metrics.sqnorm(hard.d0)) / hard.M
    ref = 32 * hard.eps * (1 - math.exp(-1)) ** 2
    out.append(_le("instance", "||d0||^2/M closed form", abs(d0 - ref), 1e-12))
    w = np.linspace(-50, 50, 20001)
    out.append(_le("instance", "Psi in [0,1)", -min(P.psi(w).min(), 1 - P.psi(w).max()), 0.0))
    out.append(_le("instance", "0 < Phi < 4 pi", -min(P.phi(w).min(), 4 * np.pi - P.phi(w).max()), 0.0))
    _, h3 = P.hard_instance(3, 3, 0.5, 0.1)
    Lh = P.estimate_gradient_lipschitz(lambda x: _hbar_grad(h3, x), 3, 2000, 3.0, seed)
    out.append(_le("instance", "Lipschitz estimate of mean chain", Lh, 75 * np.pi))
    for fn in P.activation_suite():
        est = P.estimate_gradient_lipschitz(fn.grad, fn.dim, 2000, 3.0, seed)
        out.append(_le("instance", f"activation {fn.name}", est, fn.bound * 1.001))
    return out


def _hbar_grad(inst, x):
    """Gradient of the node-average chain function at one shared point."""
    X = np.tile(np.asarray(x, float), (inst.M, 1))
    return inst.h_grads(X).mean(axis=0)


def suite_chebyshev(n_graphs: int = 20, seed: int = 0) -> List[Result]:
    out = []
    rng = np.random.default_rng(seed)
    for k in range(n_graphs):
        M = int(rng.integers(5, 51))
        g = G.generate("random_geometric", M, {"radius": 0.5}, seed=seed + k)
        prob = P.classification_instance(M, 10, 3, seed=seed + k)
        p = xfilter_params(prob, g)
        d = rng.standard_normal((M, 3))
        u0 = rng.standard_normal((M, 3))
        for eta in (1e-2, 1e-4):
            Q = chebyshev_Q(eta, p.xi_R)
            ratio = contraction_ratio(p.R, d, u0, Q, p.tau, p.rho0, p.beta2)
            out.append(_le("chebyshev", f"graph {k} M={M} eta={eta:g} Q={Q}", ratio, eta))
    return out


def suite_trajectory(seed: int = 0, outer: int = 200, iters: int = 500) -> List[Result]:
    g = G.generate("random_geometric", 10, {"radius": 0.5}, seed=seed)
    prob = P.classification_instance(10, 50, 10, seed=seed)
    f_low = P.sampled_infimum(prob, 3, seed)
    out = []
    for algo in ("xfilter", "dgpda"):
        if algo == "xfilter":
            p = xfilter_params(prob, g)
            res = xfilter_run(prob, g, p, Stopping(max_rounds=10 ** 9, max_outer=outer - 1,
                                                   keep_states=True))
        else:
            p = dgpda_params(prob, g)
            res = dgpda_run(prob, g, p, Stopping(max_rounds=iters, keep_states=True))
        rep = metrics.check_trajectory_inequalities(res.states, p, algo, prob, f_low)
        for name, s in rep.by_name().items():
            # value is the negated relative margin; the checker allows 1e-8
            out.append(Result("trajectory", f"{algo} {name} ({s['n']} checks)",
                              s["failures"] == 0, -s["min_rel_margin"], 1e-8))
    return out


def suite_zero_chain(M: int = 9, T: int = 5, U: float = 0.5, eps: float = 0.1) -> List[Result]:
    g, prob = P.hard_instance(M, T, U, eps)
    out = []
    runs = {
        "dgpda": lambda st: dgpda_run(prob, g, dgpda_params(prob, g), st),
        "xfilter": lambda st: xfilter_run(prob, g, xfilter_params(prob, g), st),
        "dsg": lambda st: dsg_run(prob, g, stopping=st),
    }
    programs = {
        "dgpda": lambda: sim.DGPDAProgram(dgpda_params(prob, g)),
        "xfilter": lambda: sim.XFilterProgram(xfilter_params(prob, g)),
        "dsg": lambda: sim.DSGProgram(g, 1.0 / prob.profile.max),
    }
    t_max = M // 3
    for algo, make in programs.items():
        states, _, _ = sim.run_rounds(make(), g, None, t_max, prob, T)
        top = sim.max_support_index(states)
        out.append(_le("zero_chain", f"{algo} highest nonzero index after {t_max} rounds", top, 2))
    for algo, run in runs.items():
        res = run(Stopping(max_rounds=2000, keep_states=True, record_potential=False))
        worst = math.inf
        for rec, st in zip(res.records, _states_for(res)):
            if np.mean(st["x"][:, T - 1]) == 0.0:
                worst = min(worst, rec.grad_avg_norm_sq + rec.consensus_weighted)
        out.append(Result("zero_chain", f"{algo} min local measure while x[T]=0",
                          bool(worst > eps), worst, eps, ">"))
    return out


def _states_for(res):
    """States aligned with records: the iterate each record describes."""
    return res.states[2:] if res.algo == "dgpda" else res.states[1:]


SUITES: Dict[str, Callable[[], List[Result]]] = {
    "graph": suite_graph,
    "instance": suite_instance,
    "chebyshev": suite_chebyshev,
    "trajectory": suite_trajectory,
    "zero_chain": suite_zero_chain,
}


def run_suite(name: str) -> List[Result]:
    if name == "all":
        out = []
        for fn in SUITES.values():
            out += fn()
        return out
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name]()
