"""Pulse-center EPR metrics for the two polarization modes.

X and Y are the mean positions of the U and V photons, P_X and P_Y their total
momenta, so [X, P_X] = [Y, P_Y] = i and the non-commuting pair
(X - Y, P_X - P_Y) obeys <(X-Y)^2><(P_X-P_Y)^2> >= 1. For a separable state
both commuting-pair products <(X+Y)^2><(P_X-P_Y)^2> and
<(X-Y)^2><(P_X+P_Y)^2> are also >= 1; a product below 1 witnesses EPR
entanglement.
"""
from dataclasses import dataclass, asdict
from typing import Optional

from .bethe import PulseCenterState
from .model import SolitonParams

EPR_BOUND = 1.0
# the uncorrelated two-photon state sits exactly on the bound; keep rounding from flagging it
WITNESS_RTOL = 1e-12


@dataclass
class EprMetrics:
    var_sum_half: float  # <((X+Y)/2)^2>
    var_diff_half: float  # <((X-Y)/2)^2>
    p_sum_var: float  # <(P_X+P_Y)^2>
    p_diff_var: float  # <(P_X-P_Y)^2>
    product_dd: float  # <(X-Y)^2><(P_X-P_Y)^2>
    product_ds: float  # <(X+Y)^2><(P_X-P_Y)^2>
    product_sd: float  # <(X-Y)^2><(P_X+P_Y)^2>
    epr_bound: float = EPR_BOUND
    p_diff_source: str = "analytic"

    def as_dict(self):
        return asdict(self)


def p_diff_var_manakov(params: SolitonParams) -> float:
    """<(P_X - P_Y)^2> for B = 1 at any N.

    For B = 1 the density is symmetric under all relabelings, so which ranks
    carry U labels is a uniform random n-subset, independent of positions.
    The variance of a subset sum of the sign sums 2k - N + 1 then gives
    (c/2b)^2 * 4 n m (N + 1) / 3.
    """
    n, m, N = params.n, params.m, params.N
    return (params.c / params.b) ** 2 * n * m * (N + 1) / 3.0


def metrics_from_variances(var_sum_half, var_diff_half, p_sum_var, p_diff_var,
                           p_diff_source="analytic") -> EprMetrics:
    xm2 = 4.0 * var_diff_half
    xp2 = 4.0 * var_sum_half
    return EprMetrics(
        var_sum_half=var_sum_half,
        var_diff_half=var_diff_half,
        p_sum_var=p_sum_var,
        p_diff_var=p_diff_var,
        product_dd=xm2 * p_diff_var,
        product_ds=xp2 * p_diff_var,
        product_sd=xm2 * p_sum_var,
        p_diff_source=p_diff_source,
    )


def epr_metrics_analytic(params: SolitonParams, state: PulseCenterState, q: float,
                         p_diff_var: Optional[float] = None) -> EprMetrics:
    """Metrics for n = m, B = 1 from the covariance closure.

    ``p_diff_var`` may be supplied from a sampler estimate; otherwise the
    exact B = 1 value is used.
    """
    if params.n != params.m:
        raise ValueError("EPR formulas assume n = m")
    if params.B != 1:
        raise ValueError("EPR formulas need the Manakov case B = 1")
    if not q >= 1:
        raise ValueError("q must be >= 1")
    N, b, c = params.N, params.b, params.c
    source = "sampled"
    if p_diff_var is None:
        p_diff_var = p_diff_var_manakov(params)
        source = "analytic"
    return metrics_from_variances(
        var_sum_half=state.dz2 / N ** 2,
        var_diff_half=2.0 * q * b * b / (N ** 3 * c * c),
        p_sum_var=N ** 2 * state.dp ** 2,
        p_diff_var=p_diff_var,
        p_diff_source=source,
    )


@dataclass
class EprWitness:
    entangled: bool
    ratio: float  # smallest commuting-pair product / bound
    pair: str
    product_ds: float
    product_sd: float
    bound: float

    def as_dict(self):
        return asdict(self)


def epr_witness(metrics: EprMetrics) -> EprWitness:
    """Flag EPR entanglement when a commuting-pair product drops strictly below the bound."""
    if metrics.product_ds <= metrics.product_sd:
        pair, prod = "(X+Y, P_X-P_Y)", metrics.product_ds
    else:
        pair, prod = "(X-Y, P_X+P_Y)", metrics.product_sd
    ratio = prod / metrics.epr_bound
    return EprWitness(ratio < 1.0 - WITNESS_RTOL, ratio, pair, metrics.product_ds, metrics.product_sd,
                      metrics.epr_bound)
