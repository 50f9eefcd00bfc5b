"""Layered stratified shallow-water models.

Free-surface n-layer and rigid-lid 3-layer columns in the hydrostatic
(dispersionless) limit: pressure closures, Hamiltonian structure in
canonical and flat coordinates, characteristic/Haantjes analysis, and a
conservative method-of-lines integrator with shock and hyperbolicity
monitoring.
"""

from .core import (CanonicalState, ConfigError, ConstraintViolation,
                   DomainError, FlatState, Grid1D, GridMismatchError,
                   LayerConfig, ModelError, PrimitiveState, SingularMapError,
                   canonical_to_flat, canonical_to_primitive,
                   close_velocity_top, flat_jacobian, flat_to_canonical,
                   primitive_to_canonical, psi, validate,
                   velocities_from_shear)
from .hydrostatics import (ImbalanceResult, bottom_pressure_gradient_pointwise,
                           free_surface_bottom_pressure, layer_pressure,
                           momentum_sum_residual, pressure_imbalance,
                           rigid_lid_bottom_pressure_gradient)
from .quasilinear import (Classification, HaantjesResult, QuasilinearSystem,
                          build_system, classify_grid, classify_hyperbolicity,
                          haantjes, haantjes_tensor, hyperbolic_shear_bound,
                          nijenhuis_tensor, symmetric_char_speeds)
from .hamiltonian import (HamiltonianModel, PoissonOperator,
                          boussinesq_limit_check, evaluate_hamiltonian,
                          flat_poisson_matrix, gradient_fd, involution,
                          involution_jacobian, kinetic_density_boussinesq,
                          kinetic_density_rigid, make_model, poisson_operator)
from .dynamics import (BlowUpError, Discretization, HamiltonianFlow,
                       IntegrationResult, PrimitiveRigidLid3Flow,
                       RunDiagnostics, ShockDetection, canonical_form_residual,
                       integrate, momentum_experiment, symmetric_run)
from .scenarios import Scenario, ScenarioError, load_scenario, parse_scenario

__version__ = "0.1.0"
