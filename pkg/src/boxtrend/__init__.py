"""Bayesian unobserved-components models with box constraints on latent states.

The trend conditional is sampled by acceptance-rejection Metropolis-Hastings
with a Gaussian proposal centred either at the unconstrained mode or at the
solution of a banded box-constrained quadratic program.
"""

from .banded import BandCholesky, BandedSymMatrix, NotPositiveDefiniteError, band_cholesky, first_diff_gram, quad_form, solve_spd
from .qp import BoxQp, QpResult, enumeration_oracle, kkt_residual, solve_box_qp
from .sampler import ArmhConfig, ChainTrace, RunConfig, Strategy, run_chain

__all__ = [
    "ArmhConfig", "BandCholesky", "BandedSymMatrix", "BoxQp", "ChainTrace", "NotPositiveDefiniteError",
    "QpResult", "RunConfig", "Strategy", "band_cholesky", "enumeration_oracle", "first_diff_gram",
    "kkt_residual", "quad_form", "run_chain", "solve_box_qp", "solve_spd",
]
