"""Distributed gradient primal-dual method (per-node two-step recursion)."""
from __future__ import annotations

import numpy as np

from .. import metrics
from .common import RunResult, Stopping, check_finite, clock, neighbor_sum
from .params import DGPDAParams, dgpda_params


def dgpda_initial(g0, denom, M):
    """x^0 = -(2 Delta + Upsilon^2)^{-1} grad f(0)."""
    return -(g0 / M) / denom


def dgpda_step(x, x_prev, g, g_prev, s_cur, s_prev, delta, beta2, denom, M):
    """One node update; works on single rows or on the whole (M, S) stack.

    s_cur, s_prev are sigma^2-weighted neighbor sums of x^r and x^{r-1}.
    """
    inner = ((g - g_prev) / M - 2.0 * s_cur - beta2 * x + beta2 * x_prev
             + s_prev + delta * x_prev)
    return x - inner / denom


def dgpda_run(problem, graph, params: DGPDAParams = None, stopping: Stopping = None,
              run_id: str = "0") -> RunResult:
    """Run the primal-dual method from x^{-1} = 0, lambda^{-1} = 0.

    Each iteration uses one communication round and one local gradient.
    Records start at r = 1 with ``comm_rounds = grad_evals = r``. The edge
    duals lambda^r are carried along for potentials and checks only.
    """
    stopping = stopping or Stopping()
    p = params or dgpda_params(problem, graph)
    M, S = problem.M, problem.S
    st = p.struct
    F = st.F
    sig = p.sigma2[:, None]
    delta = p.Delta[:, None]
    b2 = p.beta2[:, None]
    denom = 2.0 * delta + b2
    idx, w = p.nbr_idx, p.nbr_w
    rec = metrics.Recorder(run_id, "dgpda", problem, graph, p.sigma2)
    pot = metrics.PotentialEvaluator(problem, p, "dgpda") if stopping.record_potential else None
    Hmat = p.H if stopping.cross_check else None

    t0 = clock()
    rec.start(t0)
    x_prev = np.zeros((M, S))
    g_prev = problem.grads(x_prev)
    x = dgpda_initial(g_prev, denom, M)
    lam = sig * (F @ x)
    states = [{"x": x_prev, "lam": np.zeros_like(lam)}, {"x": x, "lam": lam}] \
        if stopping.keep_states else None
    s_prev = neighbor_sum(x_prev, idx, w)
    complete = stopping.target is None
    cross = []
    r = 0
    max_outer = stopping.max_outer if stopping.max_outer is not None else np.inf
    while True:
        g = problem.grads(x)
        if r >= 1:
            P = pot(x, x_prev, lam) if pot else np.nan
            rec.add(r, r, r, x, g, P, clock())
            if rec.reached(stopping.target, stopping.measure):
                complete = True
                break
            if r >= stopping.max_rounds or r >= max_outer:
                break
        s_cur = neighbor_sum(x, idx, w)
        x_new = dgpda_step(x, x_prev, g, g_prev, s_cur, s_prev, delta, b2, denom, M)
        check_finite(x_new)
        if Hmat is not None:
            xc = (Hmat @ x - g / M - F.T @ lam) / denom
            cross.append(float(np.abs(xc - x_new).max() / max(1.0, np.abs(x_new).max())))
        lam = lam + sig * (F @ x_new)
        if states is not None:
            states.append({"x": x_new, "lam": lam})
        x_prev, x, g_prev, s_prev = x, x_new, g, s_cur
        r += 1
    res = RunResult("dgpda", rec.records, complete, p, states, x)
    if cross:
        res.extras["cross_check_max"] = max(cross)
    return res
