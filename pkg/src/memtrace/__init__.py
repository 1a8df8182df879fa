"""Memory traces as history features for reinforcement learning."""

from .trace_core import History, MemoryTrace, ObservationSpace, trace_of_history, window_of_history

__all__ = ["History", "MemoryTrace", "ObservationSpace", "trace_of_history", "window_of_history"]
__version__ = "0.1.0"
