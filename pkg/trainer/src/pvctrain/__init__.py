"""pvctrain: training side of the hybrid-context point-cloud entropy model."""

from .fixtures import emit_parity_fixtures
from .network import HybridEntropyNet, load_arrays, state_to_arrays
from .training import SampleBank, TrainConfig, TrainResult, bce_on, export_pvw, train

__all__ = [
    "HybridEntropyNet",
    "SampleBank",
    "TrainConfig",
    "TrainResult",
    "bce_on",
    "emit_parity_fixtures",
    "export_pvw",
    "load_arrays",
    "state_to_arrays",
    "train",
]
