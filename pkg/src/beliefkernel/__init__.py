"""Convergence of probability measures, stochastic kernels and belief-state reduction of POMDPs."""
from .config import CapExceeded, DEFAULT_CAPS, get_cap
from .measures import (
    REAL_LINE,
    DistributionFunction,
    MetricSpace,
    PiecewiseFunction,
    ProbMeasure,
    ProductSpace,
    SignedMeasure,
    cdf_of_measure,
    dirac,
    hahn_decompose,
    measure_of_set,
    total_variation_of_function,
    tv_distance,
)
from .sets import IntervalSet, PointSet
from .pomdp import (
    Belief,
    PomdpModel,
    bayes_posterior,
    belief_kernel,
    solve_discounted,
    solve_finite_horizon,
)
from .mdmii import MdmiiModel, to_pomdp

__version__ = "0.1.0"
