"""Delay-efficient federated learning: delay model, planner and simulator."""

from .delay_model import (
    ConvergenceParams,
    LearningParams,
    convergence_bound,
    local_rounds,
    overall_time,
    round_time,
    rounds_to_converge,
    stepsize,
)
from .errors import (
    ConfigError,
    DeflError,
    DivergenceError,
    DomainError,
    InternalConsistencyError,
    PlannerError,
    SimulationDiverged,
)
from .planner import (
    KktCertificate,
    OracleGrid,
    Plan,
    PlanInputs,
    closed_form_plan,
    kkt_residuals,
    objective_eval,
    oracle_plan,
    round_batch,
)
from .system_model import (
    DeviceProfile,
    Fleet,
    GpuClockModel,
    WirelessSystem,
    bottleneck_device,
    effective_frequency,
    fleet_comm_time,
    fleet_compute_time,
    local_step_time,
    noise_power_from_density,
    uplink_time,
)

__version__ = "0.1.0"
