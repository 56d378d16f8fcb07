"""Chebyshev semi-iteration for R u = d with known spectral interval."""
from __future__ import annotations

from typing import Callable, Union

import numpy as np

from .common import DivergenceError
from .params import chebyshev_alphas


def cheb_first(u, Ru, d, tau):
    return u - tau * Ru + tau * d


def cheb_next(u1, Ru1, u2, d, tau, alpha):
    return alpha * (u1 - tau * Ru1) + (1.0 - alpha) * u2 + tau * alpha * d


def chebyshev_solve(R: Union[np.ndarray, Callable], d, u0, Q: int, tau: float,
                    rho0: float, alphas=None):
    """Run Q Chebyshev steps from u0 towards the solution of R u = d.

    Parameters
    ----------
    R : array (M, M) or callable
        The system matrix, or a function applying it to an (M, S) block.
    d, u0 : array (M, S) or (M,)
    Q : int
        Number of steps (one application of R each).
    tau : float
        2 / (lambda_min + lambda_max).
    rho0 : float
        (1 - xi) / (1 + xi) with xi = lambda_min / lambda_max.

    Returns
    -------
    u_Q
    """
    if Q < 1:
        raise ValueError("Q must be at least 1")
    apply = R if callable(R) else (lambda u: R @ u)
    if alphas is None:
        alphas = chebyshev_alphas(rho0, Q)
    d = np.asarray(d, float)
    u_prev = np.asarray(u0, float)
    u = cheb_first(u_prev, apply(u_prev), d, tau)
    for q in range(1, Q):
        u, u_prev = cheb_next(u, apply(u), u_prev, d, tau, alphas[q]), u
    if not np.all(np.isfinite(u)):
        raise DivergenceError("Chebyshev iteration produced non-finite values")
    return u


def contraction_ratio(R, d, u0, Q, tau, rho0, weight) -> float:
    """||u_Q - x*||^2_W / ||u0 - x*||^2_W with x* from a dense solve."""
    xs = np.linalg.solve(R, d)
    uq = chebyshev_solve(R, d, u0, Q, tau, rho0)
    w = np.asarray(weight, float).reshape(-1, *([1] * (np.ndim(d) - 1)))
    num = float(np.sum(w * (uq - xs) ** 2))
    den = float(np.sum(w * (u0 - xs) ** 2))
    return num / den
