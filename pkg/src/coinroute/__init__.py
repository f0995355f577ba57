"""Wave-based simulation of routing policies on small Braess-prone networks."""
from .engine import GLOBAL_PER_PACKET, SUM_OVER_SOURCES, Network, SimConfig, WaveState, run_wave
from .routing import FK, ISPA, MB, PolicyConfig, Simulation, TrainingStore, run_policy
from .topology import BenchmarkId, CostFunction, NetworkSpec, build_benchmark, validate_network

__version__ = "0.1.0"

__all__ = [
    "BenchmarkId", "CostFunction", "FK", "GLOBAL_PER_PACKET", "ISPA", "MB", "Network", "NetworkSpec",
    "PolicyConfig", "SUM_OVER_SOURCES", "SimConfig", "Simulation", "TrainingStore", "WaveState",
    "build_benchmark", "run_policy", "run_wave", "validate_network",
]
