"""Two-stage stochastic siting of battery-exchange stations on a power grid."""
from .core import Instance, load_instance, dump_instance, validate_instance
from .formulation import ModelConfig, build_extensive_form
from .scenarios import assign_renewables, sample_scenario_set

__version__ = "0.1.0"

__all__ = ["Instance", "ModelConfig", "assign_renewables", "build_extensive_form",
           "dump_instance", "load_instance", "sample_scenario_set", "validate_instance"]
