from .generator import ForgeConfig, capacity, generate_dataset, generate_raw_scenario, generate_scenario
from .io import ScenarioFormatError, iter_scenarios, read_scenarios, write_scenarios
from .labels import MANEUVERS, YIELD_CLASSES, LabelConfig, label_lanes, label_maneuver, maneuver_conditions
from .maps import MAP_KINDS, build_map
from .noise import NoiseSpec, inject_noise
from .scenario import Scenario, frame_scenario, label_scenario

__all__ = [
    "MANEUVERS",
    "MAP_KINDS",
    "YIELD_CLASSES",
    "ForgeConfig",
    "LabelConfig",
    "NoiseSpec",
    "Scenario",
    "ScenarioFormatError",
    "build_map",
    "capacity",
    "frame_scenario",
    "generate_dataset",
    "generate_raw_scenario",
    "generate_scenario",
    "inject_noise",
    "iter_scenarios",
    "label_lanes",
    "label_maneuver",
    "label_scenario",
    "maneuver_conditions",
    "read_scenarios",
    "write_scenarios",
]
