"""Agent-based and replicator models of cooperation, punishment and norm emergence."""

from .config import ConfigError, ModelConfig, load_config
from .engine import MetricsRecord, run_generation, run_simulation
from .harness import AggregateResult, SweepSpec, run_sweep

__all__ = [
    "AggregateResult",
    "ConfigError",
    "MetricsRecord",
    "ModelConfig",
    "SweepSpec",
    "load_config",
    "run_generation",
    "run_simulation",
    "run_sweep",
]
__version__ = "0.1.0"
