"""Entropy models: uniform, adaptive context-hash baseline, hybrid neural net."""

from .base import (
    HASH_BUCKET_BITS,
    HASH_SEED,
    EntropyModel,
    Probability,
    hash_context,
    hash_rows,
    quantize_p1,
    quantize_p1_array,
)
from .baseline import AdaptiveModel, UniformModel
from .neural import ABLATION_MODES, NeuralModel
from .weights import (
    ARCH_HYBRID_V1,
    BN_EPS,
    ModelWeights,
    architecture_arrays,
    load_weights,
    save_weights,
    synthetic_weights,
    weights_from_bytes,
)

MODEL_NAMES = {0: "uniform", 1: "adaptive", 2: "neural", 3: "neural/voxel-only", 4: "neural/point-only"}


def make_model(name: str, weights: ModelWeights | None = None, mode: str = "hybrid"):
    """Model factory used by the CLI; neural requires a loaded weight set."""
    from ..errors import ConfigError

    if name == "uniform":
        return UniformModel()
    if name == "adaptive":
        return AdaptiveModel()
    if name == "neural":
        if weights is None:
            raise ConfigError("the neural model requires a weights file")
        return NeuralModel(weights, mode=mode)
    raise ConfigError(f"unknown model {name!r} (expected uniform, adaptive or neural)")


__all__ = [
    "ABLATION_MODES",
    "ARCH_HYBRID_V1",
    "AdaptiveModel",
    "BN_EPS",
    "EntropyModel",
    "HASH_BUCKET_BITS",
    "HASH_SEED",
    "MODEL_NAMES",
    "ModelWeights",
    "NeuralModel",
    "Probability",
    "UniformModel",
    "architecture_arrays",
    "hash_context",
    "hash_rows",
    "load_weights",
    "make_model",
    "quantize_p1",
    "quantize_p1_array",
    "save_weights",
    "synthetic_weights",
    "weights_from_bytes",
]
