"""Bulk-synchronous round simulator for node programs.

Every round each node broadcasts one vector to its neighbors; after a
barrier each node combines its own state with the messages it received.
A combine callback sees its inbox through ``Inbox``, which refuses reads
of non-neighbor messages.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

from . import graphs as G
from .algorithms.chebyshev import cheb_first, cheb_next
from .algorithms.common import local_neighbor_sum
from .algorithms.dgpda import dgpda_initial, dgpda_step
from .algorithms.dsg import dsg_step, dsg_stepsize, metropolis_weights
from .algorithms.xfilter import predict, r_apply, track


class ContractViolation(RuntimeError):
    pass


class Inbox(Mapping):
    """Read-only view of the messages delivered to one node."""

    def __init__(self, owner, messages: dict):
        self._owner = owner
        self._m = messages

    def __getitem__(self, j):
        if j not in self._m:
            raise ContractViolation(f"node {self._owner} read a message from non-neighbor {j}")
        return self._m[j]

    def __iter__(self):
        return iter(sorted(self._m))

    def __len__(self):
        return len(self._m)

    def total(self):
        return sum((self._m[j] for j in sorted(self._m)), start=0.0)


class LocalOracle:
    """Gradient access for one node; counts calls unless muted."""

    def __init__(self, problem, i):
        self.problem, self.i = problem, i
        self.calls = 0
        self.muted = False

    def grad(self, x):
        if not self.muted:
            self.calls += 1
        return self.problem.grad(self.i, x)

    def value(self, x):
        return self.problem.value(self.i, x)


@dataclass
class NodeContext:
    i: int
    neighbors: tuple
    M: int
    S: int
    oracle: Optional[LocalOracle]
    b1: dict = field(default_factory=dict)


@dataclass
class RoundTrace:
    t: int
    messages: np.ndarray
    grad_flags: np.ndarray
    delivered: dict
    coefficients: Optional[dict] = None

    def to_json(self) -> str:
        return json.dumps({"round": self.t,
                           "message_norms": [float(v) for v in np.linalg.norm(self.messages, axis=1)],
                           "grad_flags": [bool(b) for b in self.grad_flags]})


@dataclass
class Counters:
    rounds: int = 0
    grad_evals: int = 0
    init_grad_evals: int = 0
    per_node: Optional[np.ndarray] = None


class NodeProgram:
    """Base class; subclasses implement init, broadcast and combine."""

    name = "node_program"

    def init(self, ctx: NodeContext) -> dict:
        raise NotImplementedError

    def broadcast(self, state: dict, ctx: NodeContext) -> np.ndarray:
        raise NotImplementedError

    def combine(self, state: dict, inbox: Inbox, ctx: NodeContext, t: int) -> dict:
        raise NotImplementedError

    def primal(self, state: dict) -> np.ndarray:
        return state["x"]


def _flatten(state) -> np.ndarray:
    parts = []
    for k in sorted(state):
        v = state[k]
        if isinstance(v, np.ndarray) and v.dtype.kind == "f":
            parts.append(v.ravel())
    return np.concatenate(parts) if parts else np.zeros(0)


def _audit_combine(program, state, inbox_msgs, ctx, t, base_out):
    """Finite-difference Jacobian of the combine output w.r.t. each neighbor message."""
    base = _flatten(base_out)
    coeffs = {}
    if ctx.oracle is not None:
        ctx.oracle.muted = True
    try:
        for j in sorted(inbox_msgs):
            v = inbox_msgs[j]
            h = 1e-4 * max(1.0, float(np.abs(v).max()))
            J = np.zeros((base.size, v.size))
            for s in range(v.size):
                pert = dict(inbox_msgs)
                vp = v.copy()
                vp[s] += h
                pert[j] = vp
                out = program.combine(copy.deepcopy(state), Inbox(ctx.i, pert), ctx, t)
                J[:, s] = (_flatten(out) - base) / h
            coeffs[j] = J
    finally:
        if ctx.oracle is not None:
            ctx.oracle.muted = False
    return coeffs


def run_rounds(program: NodeProgram, graph: G.Graph, init=None, n_rounds: int = 1,
               problem=None, S: Optional[int] = None, b1: Optional[dict] = None,
               audit: bool = False, observer=None):
    """Execute ``n_rounds`` synchronous rounds of a node program.

    Parameters
    ----------
    program : NodeProgram
    graph : Graph
    init : list of dict, optional
        Initial per-node states; by default ``program.init`` builds them.
    n_rounds : int
    problem : ProblemInstance, optional
        Source of the per-node gradient oracles.
    S : int, optional
        Message dimension when no problem is given.
    b1 : dict, optional
        Network constants made available to every node before round 1.
    audit : bool
        Record finite-difference combine coefficients per node and neighbor.
    observer : callable, optional
        Called as ``observer(t, states)`` after every round (t = 0 after init).

    Returns
    -------
    (states, traces, counters)
    """
    M = graph.M
    S = problem.S if problem is not None else (S or 1)
    consts = {"M": M, "D": graph.diameter}
    consts.update(b1 or {})
    ctxs = [NodeContext(i, graph.neighbors[i], M, S,
                        LocalOracle(problem, i) if problem is not None else None, consts)
            for i in range(M)]
    states = [program.init(c) for c in ctxs] if init is None else [dict(s) for s in init]
    counters = Counters()
    counters.init_grad_evals = sum(c.oracle.calls for c in ctxs if c.oracle)
    if observer:
        observer(0, states)
    traces = []
    for t in range(1, n_rounds + 1):
        before = np.array([c.oracle.calls if c.oracle else 0 for c in ctxs])
        msgs = [np.array(program.broadcast(states[i], ctxs[i]), float) for i in range(M)]
        new_states = []
        coeffs = {} if audit else None
        delivered = {}
        for i in range(M):
            inbox_msgs = {j: msgs[j] for j in graph.neighbors[i]}
            delivered[i] = tuple(sorted(inbox_msgs))
            snapshot = copy.deepcopy(states[i]) if audit else None
            out = program.combine(states[i], Inbox(i, inbox_msgs), ctxs[i], t)
            if audit:
                coeffs[i] = _audit_combine(program, snapshot, inbox_msgs, ctxs[i], t, out)
            new_states.append(out)
        states = new_states
        after = np.array([c.oracle.calls if c.oracle else 0 for c in ctxs])
        traces.append(RoundTrace(t, np.vstack(msgs), after > before, delivered, coeffs))
        counters.rounds += 1
        if observer:
            observer(t, states)
    per = np.array([c.oracle.calls if c.oracle else 0 for c in ctxs])
    counters.per_node = per
    counters.grad_evals = int(per.sum())
    return states, traces, counters


def audit_class_A_prime(traces, rtol: float = 1e-6):
    """True iff every audited combine used neighbor messages only through their sum.

    Returns ``(ok, first_violation)`` where the violation is
    ``(round, node, neighbor_a, neighbor_b)``.
    """
    for tr in traces:
        if tr.coefficients is None:
            raise ValueError("trace was recorded without auditing")
        for i in sorted(tr.coefficients):
            c = tr.coefficients[i]
            js = sorted(c)
            for a, b in zip(js, js[1:]):
                Ja, Jb = c[a], c[b]
                scale = max(float(np.abs(Ja).max()), float(np.abs(Jb).max()), 1e-12)
                if np.abs(Ja - Jb).max() > rtol * scale + 1e-9:
                    return False, (tr.t, i, a, b)
    return True, None


def check_delivery(traces, graph) -> bool:
    """Messages crossed exactly the graph's edges in every round."""
    return all(tr.delivered[i] == graph.neighbors[i] for tr in traces for i in range(graph.M))


def dump_traces(traces, path):
    with open(path, "w") as fh:
        for tr in traces:
            fh.write(tr.to_json() + "\n")


# ---------------------------------------------------------------------------
# node programs

class FloodProgram(NodeProgram):
    """Spread a token from one source; records the first round it arrives."""

    name = "flood"

    def __init__(self, source=0):
        self.source = source

    def init(self, ctx):
        has = 1.0 if ctx.i == self.source else 0.0
        return {"token": np.array([has]), "first": 0 if has else -1}

    def broadcast(self, state, ctx):
        return state["token"]

    def combine(self, state, inbox, ctx, t):
        got = max([float(inbox[j][0]) for j in ctx.neighbors] + [float(state["token"][0])])
        first = state["first"]
        if first < 0 and got > 0:
            first = t
        return {"token": np.array([got]), "first": first}


class DGPDAProgram(NodeProgram):
    """Per-node primal-dual recursion; message = current iterate."""

    name = "dgpda"

    def __init__(self, params):
        self.p = params
        self.delta = params.Delta
        self.nw = params.nbr_w

    def init(self, ctx):
        i, p = ctx.i, self.p
        d = self.delta[i]
        b2 = p.beta2[i]
        denom = 2.0 * d + b2
        x_prev = np.zeros(ctx.S)
        g0 = ctx.oracle.grad(x_prev)
        return {"x": dgpda_initial(g0, denom, ctx.M), "x_prev": x_prev, "g_prev": g0,
                "s_prev": local_neighbor_sum([], [], ctx.S)}

    def broadcast(self, state, ctx):
        return state["x"]

    def combine(self, state, inbox, ctx, t):
        i = ctx.i
        d = self.delta[i]
        b2 = self.p.beta2[i]
        w = self.nw[i, :len(ctx.neighbors)]
        s_cur = local_neighbor_sum(w, [inbox[j] for j in ctx.neighbors], ctx.S)
        x = state["x"]
        g = ctx.oracle.grad(x)
        x_new = dgpda_step(x, state["x_prev"], g, state["g_prev"], s_cur, state["s_prev"],
                           d, b2, 2.0 * d + b2, ctx.M)
        return {"x": x_new, "x_prev": x, "g_prev": g, "s_prev": s_cur}


class XFilterProgram(NodeProgram):
    """Per-node filtered method: Q filtering rounds then one tracking round."""

    name = "xfilter"

    def __init__(self, params):
        self.p = params
        delta = np.zeros(params.M)
        np.add.at(delta, params.struct.ei, params.sigma2)
        np.add.at(delta, params.struct.ej, params.sigma2)
        self.delta = delta
        self.binv = params.beta2_inv
        self.nw = params.nbr_w

    def init(self, ctx):
        x = np.zeros(ctx.S)
        g = ctx.oracle.grad(x)
        xt = predict(x, g, self.binv[ctx.i], ctx.M)
        return {"x": x, "xt": xt, "d": xt.copy(), "u": x, "u_prev": x, "q": 0}

    def broadcast(self, state, ctx):
        return state["u"] if state["q"] < self.p.Q else state["x_new"]

    def combine(self, state, inbox, ctx, t):
        p, i = self.p, ctx.i
        w = self.nw[i, :len(ctx.neighbors)]
        nbr = local_neighbor_sum(w, [inbox[j] for j in ctx.neighbors], ctx.S)
        s = dict(state)
        q = state["q"]
        if q < p.Q:
            u = state["u"]
            Ru = r_apply(u, nbr, self.delta[i], self.binv[i])
            if q == 0:
                u_new = cheb_first(u, Ru, s["d"], p.tau)
            else:
                u_new = cheb_next(u, Ru, state["u_prev"], s["d"], p.tau, p.alphas[q])
            s["u_prev"], s["u"] = u, u_new
            s["q"] = q + 1
            if q + 1 == p.Q:
                s["x_new"] = u_new
            return s
        # tracking round
        x_new = state["x_new"]
        g = ctx.oracle.grad(x_new)
        xt_new = predict(x_new, g, self.binv[i], ctx.M)
        s["d"] = track(state["d"], xt_new, state["xt"], x_new, nbr, self.delta[i], self.binv[i])
        s["x"], s["xt"], s["u"], s["u_prev"], s["q"] = x_new, xt_new, x_new, x_new, 0
        del s["x_new"]
        return s


class DSGProgram(NodeProgram):
    name = "dsg"

    def __init__(self, graph, step, rule="constant"):
        idx, w, sw = metropolis_weights(graph)
        self.w, self.sw = w, sw
        self.step, self.rule = step, rule

    def init(self, ctx):
        return {"x": np.zeros(ctx.S), "r": 0}

    def broadcast(self, state, ctx):
        return state["x"]

    def combine(self, state, inbox, ctx, t):
        i = ctx.i
        w = self.w[i, :len(ctx.neighbors)]
        nbr = local_neighbor_sum(w, [inbox[j] for j in ctx.neighbors], ctx.S)
        g = ctx.oracle.grad(state["x"])
        a = dsg_stepsize(self.rule, self.step, state["r"])
        return {"x": dsg_step(state["x"], nbr, self.sw[i], g, a), "r": state["r"] + 1}


def max_support_index(states) -> int:
    """Largest 1-based coordinate index that is nonzero in any state vector."""
    top = 0
    for s in states:
        for v in s.values():
            if isinstance(v, np.ndarray) and v.ndim == 1 and v.dtype.kind == "f":
                nz = np.nonzero(v)[0]
                if nz.size:
                    top = max(top, int(nz[-1]) + 1)
    return top
