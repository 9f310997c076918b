"""Distributed threshold count tracking: algorithms, simulator and experiments."""

from .errors import (
    ConfigError,
    DTrackError,
    EmptySample,
    InvalidPlayerId,
    ParseError,
    StreamExhausted,
)
from .protocol import (
    AlgorithmConfig,
    Message,
    MessageKind,
    RoundStats,
    RunReport,
    run_algorithm,
    run_framework,
)
from .strategies import Algorithm
from .workload import SyntheticSource, TraceSource, exact_probabilities, load_trace

__version__ = "0.1.0"

__all__ = [
    "Algorithm",
    "AlgorithmConfig",
    "ConfigError",
    "DTrackError",
    "EmptySample",
    "InvalidPlayerId",
    "Message",
    "MessageKind",
    "ParseError",
    "RoundStats",
    "RunReport",
    "StreamExhausted",
    "SyntheticSource",
    "TraceSource",
    "exact_probabilities",
    "load_trace",
    "run_algorithm",
    "run_framework",
]
