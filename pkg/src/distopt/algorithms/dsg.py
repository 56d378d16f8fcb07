"""Distributed (sub)gradient baseline with Metropolis mixing."""
from __future__ import annotations

import numpy as np

from .. import metrics
from .common import RunResult, Stopping, check_finite, clock, neighbor_sum
from .params import neighbor_slots


def metropolis_weights(graph):
    """W_ij = 1/(1 + max(d_i, d_j)) on edges, W_ii = 1 - sum_j W_ij."""
    d = graph.degrees
    ew = np.array([1.0 / (1.0 + max(d[i], d[j])) for i, j in graph.edges])
    idx, w = neighbor_slots(graph, ew)
    self_w = 1.0 - w.sum(axis=1)
    return idx, w, self_w


def metropolis_matrix(graph) -> np.ndarray:
    idx, w, sw = metropolis_weights(graph)
    W = np.diag(sw)
    for i in range(graph.M):
        for k, j in enumerate(graph.neighbors[i]):
            W[i, j] = w[i, k]
    return W


def dsg_stepsize(rule, step, r):
    if rule == "constant":
        return step
    if rule == "sqrt":
        return step / np.sqrt(r + 1.0)
    raise ValueError(f"unknown step rule {rule!r}")


def dsg_step(x, nbr, self_w, g, a):
    return self_w * x + nbr - a * g


def dsg_run(problem, graph, step: float = None, rule: str = "constant",
            stopping: Stopping = None, run_id: str = "0", x0=None) -> RunResult:
    """x^{r+1} = W x^r - a_r grad f_i(x_i^r) with a_r = step or step/sqrt(r+1).

    The default step is 1/L_max.
    """
    stopping = stopping or Stopping()
    M, S = problem.M, problem.S
    if step is None:
        step = 1.0 / max(problem.profile.max, 1e-12)
    idx, w, sw = metropolis_weights(graph)
    sw = sw[:, None]
    rec = metrics.Recorder(run_id, "dsg", problem, graph, None)
    t0 = clock()
    rec.start(t0)
    x = np.zeros((M, S)) if x0 is None else np.array(x0, float)
    states = [{"x": x}] if stopping.keep_states else None
    complete = stopping.target is None
    max_outer = stopping.max_outer if stopping.max_outer is not None else np.inf
    r = 0
    while True:
        g = problem.grads(x)
        if r >= 1:
            rec.add(r, r, r, x, g, np.nan, clock())
            if rec.reached(stopping.target, stopping.measure):
                complete = True
                break
            if r >= stopping.max_rounds or r >= max_outer:
                break
        x = dsg_step(x, neighbor_sum(x, idx, w), sw, g, dsg_stepsize(rule, step, r))
        check_finite(x)
        if states is not None:
            states.append({"x": x})
        r += 1
    return RunResult("dsg", rec.records, complete, None, states, x,
                     {"step": step, "rule": rule})
