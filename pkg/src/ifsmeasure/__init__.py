"""Iterated function systems whose stationary law is a prescribed continuous distribution."""

__version__ = "0.1.0"

from .distributions import (
    CantorUniform,
    ContinuousDistribution,
    EmpiricalSmoothed,
    Exponential,
    TabulatedCdf,
    Triangular,
    Uniform01,
    empirical_smoothed_from_samples,
    eval_cdf,
    eval_quantile,
    parse_dist_spec,
    quantile_by_bisection,
)
from .ifs import (
    AffineMap,
    ComposedMap,
    Ifsp,
    TheoremMap,
    TriangularMap,
    apply_map,
    build_theorem_ifsp,
    compose_ifsp,
    digit_map,
    invariance_residual,
    symmetry_affine_ifsp,
    triangular_ifsp,
)
from .chain import (
    RngStream,
    backward_gap,
    backward_iterate,
    backward_sample_batch,
    digits_to_uniform,
    draw_index,
    simulate_forward,
)
from .stats import KsReport, ks_distance, one_step_stationarity, two_sample_ks
