"""pvcodec: octree point-cloud geometry codec with hybrid-context entropy models."""

from .codec import Bitstream, EncodeReport, ablation_variant, decode, encode, replay_contexts
from .errors import ConfigError, FormatError, ModelError, ParseError, PvcError
from .metrics import DistortionReport, chamfer, d1_psnr, d2_psnr, evaluate
from .models import (
    AdaptiveModel,
    ModelWeights,
    NeuralModel,
    UniformModel,
    load_weights,
    make_model,
    save_weights,
    synthetic_weights,
)
from .octree import build_levels, deserialize, reconstruct_points, serialize
from .pcio import PointCloud, RawPointCloud, dequantize, quantize, read_point_cloud, write_point_cloud

__version__ = "0.1.0"

__all__ = [
    "AdaptiveModel",
    "Bitstream",
    "ConfigError",
    "DistortionReport",
    "EncodeReport",
    "FormatError",
    "ModelError",
    "ModelWeights",
    "NeuralModel",
    "ParseError",
    "PointCloud",
    "PvcError",
    "RawPointCloud",
    "UniformModel",
    "ablation_variant",
    "build_levels",
    "chamfer",
    "d1_psnr",
    "d2_psnr",
    "decode",
    "dequantize",
    "deserialize",
    "encode",
    "evaluate",
    "load_weights",
    "make_model",
    "quantize",
    "read_point_cloud",
    "reconstruct_points",
    "replay_contexts",
    "save_weights",
    "serialize",
    "synthetic_weights",
    "write_point_cloud",
]
