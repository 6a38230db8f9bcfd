"""Wind-farm wake simulation, graph-transformer power surrogates and GA yaw steering."""

__version__ = "0.1.0"

from .turbine import V80, TurbineSpec, get_turbine  # noqa: E402
from .wake import (  # noqa: E402
    FarmScenario,
    FlowConditions,
    SimulationResult,
    WakeParams,
    beta_of_ct,
    gaussian_deficit,
    jimenez_deflection,
    make_scenario,
    sample_wake_field,
    simulate_farm,
    wake_sigma,
)

__all__ = [
    "V80", "TurbineSpec", "get_turbine", "FarmScenario", "FlowConditions",
    "SimulationResult", "WakeParams", "beta_of_ct", "gaussian_deficit",
    "jimenez_deflection", "make_scenario", "sample_wake_field", "simulate_farm",
    "wake_sigma",
]
