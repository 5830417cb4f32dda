"""Spectral asymptotics for metastable diffusions in potential wells.

Computes harmonic (low-temperature) spectra of the overdamped Langevin
generator with absorbing boundaries parametrized by per-critical-point
offsets, boundary-corrected exit-rate prefactors, and asymptotically optimal
offsets, and cross-validates them against a grid eigensolver and Monte Carlo
oracles.
"""

__version__ = "0.1.0"

from . import errors
from .potentials import (
    CriticalCatalog,
    CriticalPoint,
    GaussianWells,
    Polynomial1D,
    PolynomialND,
    PotentialModel,
    classify_saddles,
    double_well,
    find_critical_points,
    flow_to_minimum,
    from_config,
    quartic_2d,
    single_well,
)
from .oscillator import (
    MuCache,
    OscillatorEigenvalue,
    hermite_largest_root,
    lambda_local,
    mu,
    mu_asymptotic_neg,
    omega,
)

__all__ = [
    "errors",
    "CriticalCatalog",
    "CriticalPoint",
    "GaussianWells",
    "Polynomial1D",
    "PolynomialND",
    "PotentialModel",
    "classify_saddles",
    "double_well",
    "find_critical_points",
    "flow_to_minimum",
    "from_config",
    "quartic_2d",
    "single_well",
    "MuCache",
    "OscillatorEigenvalue",
    "hermite_largest_root",
    "lambda_local",
    "mu",
    "mu_asymptotic_neg",
    "omega",
    "__version__",
]
