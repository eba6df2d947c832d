"""Cell-level stochastic SEIR simulator with layered contacts."""

from .model import (
    COMPARTMENTS, LAYERS, ConfigError, ContactStructure, EpiRates, OutcomeSummary,
    PopulationConfig, PopulationState, build_population, calibrate_beta,
    default_contacts, effective_contacts,
)
from .simulate import Simulator, apply_vaccination, simulate, step_day, supply_array

__all__ = [
    "COMPARTMENTS", "LAYERS", "ConfigError", "ContactStructure", "EpiRates",
    "OutcomeSummary", "PopulationConfig", "PopulationState", "Simulator",
    "apply_vaccination", "build_population", "calibrate_beta", "default_contacts",
    "effective_contacts", "simulate", "step_day", "supply_array",
]
