from .chebyshev import chebyshev_solve, contraction_ratio
from .common import DivergenceError, RunResult, Stopping, neighbor_sum
from .dgpda import dgpda_run, dgpda_step
from .dsg import dsg_run, metropolis_matrix, metropolis_weights
from .params import (DGPDAParams, ParameterError, XFilterParams, chebyshev_alphas,
                     chebyshev_Q, dgpda_params, xfilter_params)
from .xfilter import filter_operator, xfilter_run

__all__ = [
    "chebyshev_solve", "contraction_ratio", "DivergenceError", "RunResult", "Stopping",
    "neighbor_sum", "dgpda_run", "dgpda_step", "dsg_run", "metropolis_matrix",
    "metropolis_weights", "DGPDAParams", "ParameterError", "XFilterParams",
    "chebyshev_alphas", "chebyshev_Q", "dgpda_params", "xfilter_params", "xfilter_run", "filter_operator",
]
