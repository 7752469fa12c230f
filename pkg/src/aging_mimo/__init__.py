"""Spectral efficiency and frame design for multi-antenna uplinks with aging channels.

Modules
-------
channel      second-order channel statistics and ray realizations
frame        frame plans, power splitting, pilots, signal synthesis
estimation   LMMSE estimation from the current and previous pilots
combining    block operator algebra, MMSE combining, instantaneous SINR
detequiv     deterministic-equivalent SINR and spectral efficiency
bounds       Monte-Carlo spectral efficiency and capacity bounds
optimizer    frame-plan, power and beamformer optimization
cli          scenario files and the ``aging-mimo`` command
"""

__version__ = "0.1.0"

from .channel import (AngularSpectrum, ArrayGeometry, KroneckerStats, MobilityModel, RayStats,
                      correlation_numeric, correlation_uniform, correlation_vonmises, covariance,
                      sample_channel)
from .detequiv import DetEquivConfig, slot_se
from .errors import (AgingMimoError, ConvergenceError, IntegrationError, NumericalError,
                     ScenarioError, SingularNormalizationError, SingularSystemError)
from .frame import FramePlan, PowerBudget, UserConfig
from .optimizer import OptimizerConfig, opt_resource
from .scenario import Scenario

__all__ = [
    "AngularSpectrum", "ArrayGeometry", "KroneckerStats", "MobilityModel", "RayStats",
    "correlation_numeric", "correlation_uniform", "correlation_vonmises", "covariance",
    "sample_channel", "DetEquivConfig", "slot_se", "AgingMimoError", "ConvergenceError",
    "IntegrationError", "NumericalError", "ScenarioError", "SingularNormalizationError",
    "SingularSystemError", "FramePlan", "PowerBudget", "UserConfig", "OptimizerConfig",
    "opt_resource", "Scenario",
]
