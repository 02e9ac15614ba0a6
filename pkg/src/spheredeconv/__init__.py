"""Deconvolution density estimation and regression on hyperspheres.

Observations on S^d contaminated by random SO(d+1) rotations are corrected
in the harmonic domain: each degree block of the empirical transform is
multiplied by the inverse transform of the known error law before projecting
back to the sphere.  The package provides the corrected kernel estimators,
truncation selection by cross-validation, pointwise confidence intervals
(normal-theory and empirical-likelihood), a Monte Carlo harness, and a CLI.
"""

from .errors import (DegreeOverflowError, DomainError, SingularBlockError,
                     UnsupportedDimensionError, UnsupportedModelError)
from .sphere import (Rotation, RotationQuadrature, SphereGrid, SpherePoint,
                     SphereQuadrature, apply, fibonacci_grid, from_angles,
                     from_coords, product_quadrature, rotation_from_angle,
                     rotation_from_euler, rotation_from_matrix, sample_error,
                     sample_vmf_sphere, so3_quadrature, surface_area, to_angles)
from .harmonics import BasisTable, WignerSmallD, eval_basis, n_dl, wigner_small_d
from .transforms import (ErrorModel, SmoothnessClass, TransformBlocks,
                         big_d_matrix, convolve_check, error_free,
                         forward_transform, gaussian, laplace, operator_norm,
                         rosenthal, transform_blocks, vmf_error)
from .estimators import (Dataset, DeconvKernel, EstimateGrid, density_estimate,
                         kernel_eval, kernel_star_eval, make_kernel,
                         naive_regression_estimate, regression_estimate,
                         select_T_density, select_T_regression)
from .inference import (ConfidenceInterval, ELProfile, an_interval_density,
                        an_interval_regression, el_interval_density,
                        el_interval_regression, el_log_ratio, el_profile)
from .simulation import (SimConfig, SimReport, coverage_study,
                         generate_replicate, mc_study, true_regression)

__version__ = "0.1.0"
