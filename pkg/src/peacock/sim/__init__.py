"""Simulated UEFI DXE environment and scenario interpreter."""

from .crc import crc32
from .environment import (
    HaltedBoot,
    ImageDescriptor,
    ScenarioReferenceError,
    ServiceTable,
    SimEnvironment,
    UnknownService,
    apply_external_hook,
    build_environment,
    compute_table_crc32,
    remove_external_hook,
)
from .scenario import BUILTIN_SCENARIOS, Scenario, load_scenario, run_scenario, scenario_from_dict

__all__ = [
    "BUILTIN_SCENARIOS", "HaltedBoot", "ImageDescriptor", "Scenario", "ScenarioReferenceError",
    "ServiceTable", "SimEnvironment", "UnknownService", "apply_external_hook", "build_environment",
    "compute_table_crc32", "crc32", "load_scenario", "remove_external_hook", "run_scenario",
    "scenario_from_dict",
]
