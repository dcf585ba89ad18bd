"""alloylab: numerical laboratory for alloy-type random Schroedinger operators.

The single site potential u = sum_gamma alpha_gamma w(. - gamma) may change
sign. The package builds the Toeplitz change of variables eta = A omega,
the induced densities, finite-difference Hamiltonians on boxes, and the
Monte Carlo experiments around the Wegner estimate, the integrated
density of states and multiscale good boxes.
"""

from .densities import (CommonDensity, DensityModel, conditional_density, make_density,
                        smooth_bump, triangular, uniform)
from .errors import AlloyLabError
from .operator import AlloyModel, GridSpec, SingleSitePotential
from .toeplitz import ConvolutionVector, IndexBox, build_transform

__version__ = "0.1.0"

__all__ = [
    "AlloyLabError",
    "AlloyModel",
    "CommonDensity",
    "ConvolutionVector",
    "DensityModel",
    "GridSpec",
    "IndexBox",
    "SingleSitePotential",
    "build_transform",
    "conditional_density",
    "make_density",
    "smooth_bump",
    "triangular",
    "uniform",
]
