"""Lung-ultrasound CNN engine: preprocessing, 10x augmentation, a VGG-style
network with transfer-learning training, portable LUSW weight files, an
offline NDJSON inference service and a per-layer edge benchmark."""

from .arch import (
    CLASS_LABELS,
    DEFAULT_ARCH,
    LayerKind,
    LayerSpec,
    NetworkSpec,
    infer_shapes,
    param_count,
    parse_arch,
    render_arch,
)
from .estimator import LungUltrasoundClassifier
from .network import Prediction, forward, init_params
from .tensor import ConvParams, DenseParams, Mode, Padding, PoolParams, Tensor, tensor
from .training import Metrics, TrainConfig, evaluate, grad_check, train
from .weights_io import WeightStore, load, save

__version__ = "0.1.0"

__all__ = [
    "CLASS_LABELS",
    "DEFAULT_ARCH",
    "ConvParams",
    "DenseParams",
    "LayerKind",
    "LayerSpec",
    "LungUltrasoundClassifier",
    "Metrics",
    "Mode",
    "NetworkSpec",
    "Padding",
    "PoolParams",
    "Prediction",
    "Tensor",
    "TrainConfig",
    "WeightStore",
    "evaluate",
    "forward",
    "grad_check",
    "infer_shapes",
    "init_params",
    "load",
    "param_count",
    "parse_arch",
    "render_arch",
    "save",
    "tensor",
    "train",
]
