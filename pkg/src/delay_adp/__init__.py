"""Optimal control of linear time-delay systems by model-based and
data-driven policy iteration."""

from .adp import (RegressionData, SegmentBoundaries, assemble, excitation_check,
                  run_data_pi, solve_weights)
from .basis import BasisSet, pack, polynomial_basis, reconstruct_kernel, reconstruct_law, unpack
from .config import ExperimentConfig, benchmark_cav, benchmark_metal_cutting
from .errors import BlowUpError, ConfigError, DelayADPError, ExcitationError, NumericalError
from .model_pi import policy_evaluation, policy_improvement, riccati_residual, run_model_pi
from .semidisc import dlqr, policy_value_oracle, semidiscretize, spectral_radius_closed_loop
from .simulation import (DelaySystem, ExplorationSignal, FeedbackLaw, SampledLaw, SegmentState,
                         Trajectory, add_measurement_noise, random_history, simulate)
from .value import ValueKernel, eval_cost, eval_value

__version__ = "0.1.0"
