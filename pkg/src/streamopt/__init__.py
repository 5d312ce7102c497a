"""streamopt: pass-efficient graph optimization over replayable streams.

Box-simplex games solved in O(n) workspace drive approximate maximum
matchings, optimal transport, transshipment, and shortest paths, with sparse
certificates and metered pass/space budgets.
"""
from .config import PipelineConfig, SolverConfig, load_config
from .stream import (EdgeRecord, ResourceMeter, RowRecord, SparseFlow,
                     StreamSource, emit_stream, for_each_pass, open_stream)

__all__ = [
    "EdgeRecord", "RowRecord", "StreamSource", "ResourceMeter", "SparseFlow",
    "open_stream", "for_each_pass", "emit_stream",
    "PipelineConfig", "SolverConfig", "load_config",
]

__version__ = "0.1.0"
