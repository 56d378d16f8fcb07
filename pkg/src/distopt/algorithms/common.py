from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np


class DivergenceError(FloatingPointError):
    pass


@dataclass
class Stopping:
    """Run budget and optional accuracy target.

    ``max_rounds`` bounds communication rounds; ``max_outer`` bounds outer
    iterations. ``measure`` is 'h_star' or 'e_val'.
    """

    max_rounds: int = 1000
    max_outer: Optional[int] = None
    target: Optional[float] = None
    measure: str = "h_star"
    keep_states: bool = False
    cross_check: bool = False
    record_potential: bool = True


@dataclass
class RunResult:
    algo: str
    records: list
    complete: bool
    params: object = None
    states: Optional[list] = None
    x: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)

    @property
    def last(self):
        return self.records[-1] if self.records else None

    def first_reaching(self, target, measure="h_star"):
        for rec in self.records:
            v = rec.h_star if measure == "h_star" else rec.e_val
            if v <= target:
                return rec
        return None


def neighbor_sum(X, idx, w):
    """sum_k w[i, k] X[idx[i, k]] accumulated slot by slot.

    The fixed accumulation order lets a single-node evaluation reproduce
    the batched result exactly.
    """
    acc = np.zeros_like(X)
    for k in range(idx.shape[1]):
        acc = acc + w[:, k, None] * X[idx[:, k]]
    return acc


def local_neighbor_sum(weights, vectors, S):
    acc = np.zeros(S)
    for w, v in zip(weights, vectors):
        acc = acc + w * v
    return acc


def check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DivergenceError("non-finite iterate")


def clock():
    return time.perf_counter()
