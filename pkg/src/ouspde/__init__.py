"""Spectral tools for OU-type SPDEs with state-dependent noise coefficients."""

__version__ = "0.1.0"

from .basis import (BasisSpec, basis_eval, eigenvalue, even_periodic_extension_eval,
                    fourier_decay_check, project, project_all, reconstruct)
from .fitting import DecayFit, fit_power_law
from .linalg import (TimeCov, conditional_gaussian_params, gaussian_density,
                     jaffard_decay_fit, rate_function, schur_complement_reduce, schur_norm,
                     time_integrated_cov)
from .operators import (ConstantOperator, ConvolutionOperator, CovarianceField,
                        InnerProductOperator, apply_operator, covariance_matrix,
                        toeplitz_split)

from .kernel import (KernelPoint, MCResult, ScalingReport, cutoff_index, diagonal_sum_mc,
                     dij_kernel_fd, kernel_density, moment_mc, perturbation_integral_mc,
                     second_derivative_factor, total_mass_mc, truncate_state)
from .simulator import (ResidualReport, SimConfig, Trajectory, decompose_path, exp_euler_step,
                        heat_semigroup, law_distance, simulate_path, simulate_paths,
                        weak_form_residual)
