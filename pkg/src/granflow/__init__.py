"""Regularized dense granular flow on a staggered grid, with invariant checks."""
from .fields import (Grid, ScalarField, SymTensorField, VectorField, deviator, divergence,
                     gradient, laplacian, sym_gradient, tensor_divergence, tensor_norm)
from .regularization import (RegularizationParams, regularized_shear, regularized_stress,
                             v_eps, v_eps_derivative)
from .rheology import RheologyLaw, dilatancy_rhs, i_eq, inertial_number, yield_coefficient
from .errors import (CFLError, LinearSolveError, NonFiniteError, PhiBoundError,
                     PicardNonConvergence, SolverError)
from .stepper import SimulationConfig, State, StepReport, run, step
from .phi_dynamics import PhiParams, phi_step, skew_inertia

__version__ = "0.1.0"
