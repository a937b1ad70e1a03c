"""Entrained periodic solutions of bilinear control systems, their control
sensitivities and the gain of entrainment."""

from .diagnostics import MeasureKind, contraction_scan, matrix_measure
from .errors import (EntrainError, IllConditionedTransfer, InadmissibleControl, NoConvergence,
                     NonFiniteState, NotHurwitz, NotIrreducible, SingularMatrix,
                     SingularMonodromy, StateLeftDomain, StepSizeUnderflow)
from .flow import Flow, variational_flow
from .goe import (GoeReport, KernelSamples, average_output, goe_exact, goe_first_order,
                  goe_first_order_batch, goe_kernel, optimal_constant_direction,
                  optimal_direction_sign, zero_mean)
from .ode import TimeGrid, Trajectory, integrate, integrate_with_transfer
from .periodic import (MonodromyResult, PeriodicSolution, check_c3, iterate_map, poincare,
                       solve_periodic)
from .sensitivity import (DirectionalSensitivity, dgamma_apply, dgamma_batch, dgamma_constant,
                          directional_state_sensitivities, directional_state_sensitivity)
from .system import (BilinearSystem, ConstantControl, PeriodicControl, augment_drift,
                     control_norm, eval_control, make_system, rhs)

__version__ = "0.1.0"
