"""Numerical laboratory for one-dimensional diffusions with interfaces.

Builds the diffusion attached to a divergence-form operator with
discontinuous coefficients, simulates it through its scale/speed chain,
estimates its local times, solves the matching conservative forward PDE,
and cross-validates the interface predictions.
"""

from .medium import (Interface, MediumSpec, Piece, PhiSequence, ValidationReport,
                     coeff_at, derive_lambdas, phi_sequence,
                     piecewise_constant_medium, validate_model)
from .scale import ScaleSpeed
from .chain import (ChainModel, Grid, absorption_probabilities, build_grid,
                    chain_mean_exit_times, chain_parameters, mean_exit_time)
from .paths import (PathEnsemble, load_ensemble, rescaled_skew_density,
                    save_ensemble, simulate_first_exit, simulate_paths,
                    skew_density_oracle, splitting_estimate,
                    transmission_probability)
from .localtime import (ContinuityProbe, JumpRatioReport, LocalTimeEstimate,
                        continuity_probe, convert_lt, default_epsilons,
                        estimate_ratio, nlt_estimate, nodes_for_probe,
                        predicted_ratio, smlt_direct, window_occupation)
from .fpe import (DensityField, FvSystem, advance, assemble_system, delta_field,
                  expectation_under_p, interface_flux, p_from_q, solve_forward)
from .errors import ConfigError, DomainError, EstimationError, SolverError

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
