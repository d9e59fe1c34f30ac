"""Closed-loop discrimination between competing opsin photocurrent models.

The loop stimulates a reference system (a lab preparation or a hidden
simulation), refits two candidate kinetic models to each new measurement,
and designs the next stimulus to pull the candidates' predictions apart,
stopping once exactly one candidate explains the data or the better fit has
settled.
"""

__version__ = "0.1.0"

from .control import (AscentInfo, ControlDesignConfig, ControlMemory, design_control,
                      first_pulse, objective, objective_gradient)
from .discrimination import (DiscriminationReport, IterationRecord, MatchRecord,
                             StoppingThresholds, TournamentResult, Verdict,
                             VerdictStatus, canonical_json, record_to_dict,
                             report_to_dict, run_discrimination, stopping_verdict,
                             tournament)
from .errors import (ConfigurationError, ContractError, IntegrationDivergedError,
                     OpsinLoopError, ProtocolError, ReferenceFailure)
from .estimation import (Dataset, FitConfig, FitReport, fit, loss, loss_and_gradient,
                         loss_gradient)
from .grid import (ControlSignal, ObservationSeries, TimeGrid, box_pulse,
                   constant_signal, piecewise_constant, random_piecewise_constant,
                   trapezoid)
from .kinetics import (ModelInstance, ModelKind, drift, drift_full, observation_gains,
                       observe, random_instance, random_parameters, rest_state,
                       table_instance, table_params)
from .reference import ReferenceCapabilities, ReferenceSystem, SimulatedReference
from .simulate import (NoiseOverdriveWarning, SimOutput, StochasticConfig,
                       StochasticEnsemble, simulate, simulate_clamped,
                       simulate_stochastic)
from .wire import ReferenceServer, RemoteReference, connect, serve

__all__ = [
    "__version__",
    "AscentInfo", "ControlDesignConfig", "ControlMemory", "design_control",
    "first_pulse", "objective", "objective_gradient",
    "DiscriminationReport", "IterationRecord", "MatchRecord", "StoppingThresholds",
    "TournamentResult", "Verdict", "VerdictStatus", "canonical_json",
    "record_to_dict", "report_to_dict", "run_discrimination", "stopping_verdict",
    "tournament",
    "ConfigurationError", "ContractError", "IntegrationDivergedError",
    "OpsinLoopError", "ProtocolError", "ReferenceFailure",
    "Dataset", "FitConfig", "FitReport", "fit", "loss", "loss_and_gradient",
    "loss_gradient",
    "ControlSignal", "ObservationSeries", "TimeGrid", "box_pulse",
    "constant_signal", "piecewise_constant", "random_piecewise_constant", "trapezoid",
    "ModelInstance", "ModelKind", "drift", "drift_full", "observation_gains",
    "observe", "random_instance", "random_parameters", "rest_state",
    "table_instance", "table_params",
    "ReferenceCapabilities", "ReferenceSystem", "SimulatedReference",
    "NoiseOverdriveWarning", "SimOutput", "StochasticConfig", "StochasticEnsemble",
    "simulate", "simulate_clamped", "simulate_stochastic",
    "ReferenceServer", "RemoteReference", "connect", "serve",
]
