"""Synchronization analysis of dispatchable virtual oscillator networks.

The package splits along the natural timescales of the closed loop:

* :mod:`cfsync.coords` - complex angle and complex frequency coordinates
* :mod:`cfsync.network` - admittance assembly and load elimination
* :mod:`cfsync.controllers` - oscillator control laws and setpoints
* :mod:`cfsync.fast` - voltage-dynamics spectral and parametric tests
* :mod:`cfsync.slow` - magnitude/angle regulation around the sync motion
* :mod:`cfsync.sim` - fixed-step simulation of every model variant
* :mod:`cfsync.freqdom` - dynamic-branch tests by the argument principle
* :mod:`cfsync.scenario` - YAML scenario files
* :mod:`cfsync.cli` - the ``cfsync`` command
"""

__version__ = "0.1.0"

from .controllers import (ControlVariant, DvocParams, Setpoints,
                          complex_droop_rhs, converter_rhs,
                          effective_reference, verify_droop_equivalence)
from .coords import (ComplexAngle, ComplexFrequency, angle_from_voltage,
                     angle_series, estimate_complex_frequency,
                     frequency_series, voltage_from_angle)
from .errors import (ConfigurationError, DomainError, NumericalError,
                     UnsupportedConfigurationError)
from .fast import (FastSystem, Spectrum, SyncVerdict, build_fast_system,
                   certified_parametric_condition, check_parametric_condition,
                   check_spectral_condition, eigenspace_distance,
                   eigenvector_spread, lyapunov_v, modal_prediction, spectrum,
                   sync_verdict)
from .freqdom import (BranchModel, RationalTF, ScaledRational,
                      aggregated_admittance, converter_admittance_fast,
                      converter_admittance_slow, coupled_state_matrix,
                      criterion_sync, criterion_voltage, nyquist_curve,
                      rl_branches_from_reduced, state_space_verdict,
                      winding_number)
from .network import (BranchSpec, NetworkModel, NodeRole, ReducedNetwork,
                      SgPartition, algebraic_connectivity, build_admittance,
                      canon3, kron_reduce, linear_power_flow,
                      normalized_power_flow, reduce_network, sg_partition)
from .scenario import Scenario, load_scenario, parse_scenario
from .sim import (GainChange, ModelKind, SetpointChange, SgBoundary,
                  Trajectory, compare_models, detect_sync,
                  exact_linear_trajectory, invariance_metrics, simulate)
from .slow import (Equilibrium, SlowSystem, build_slow_system,
                   error_coordinates, error_dynamics_matrix, error_spectrum,
                   lyapunov_w, lyapunov_w_check, solve_equilibrium,
                   steady_state_frequency, to_center_of_angle)
