"""Forward pass: parameter initialization, layer execution, predictions.

Parameter tensors are named ``<kind><stageIdx>_<layerIdx>/<kernels|weights|bias>``
with 0-based indices, e.g. ``conv0_1/kernels`` for the second conv of the
first stage. ReLU follows every convolution and every dense layer except the
final one; the softmax head turns the final FC(2) logits into class
probabilities. Class order is pinned: unit 0 = "covid", unit 1 = "healthy",
and argmax ties resolve to the first label.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import ops
from .arch import ExpandedLayer, LayerKind, NetworkSpec, expand_layers
from .errors import MissingWeightError, ShapeError
from .tensor import ConvParams, DenseParams, Mode, PoolParams, Tensor
from .weights_io import WeightStore

POOL_PARAMS = PoolParams(window=2, stride=2)


@dataclass
class Prediction:
    label: str
    probabilities: dict[str, float]
    latency_s: float


@dataclass
class LayerRun:
    """Per-layer record of one forward pass (inputs kept only on request)."""

    layer: ExpandedLayer
    seconds: float
    x_in: Tensor | None = None
    pre_activation: Tensor | None = None


def init_params(spec: NetworkSpec, seed: int) -> WeightStore:
    """He-normal kernels/weights (std = sqrt(2/fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    store = WeightStore()
    for layer in expand_layers(spec):
        if layer.kind is LayerKind.CONV:
            c_in, c_out = layer.in_dims[2], layer.out_dims[2]
            std = np.sqrt(2.0 / (9 * c_in))
            kernels = rng.normal(0.0, std, size=(3, 3, c_in, c_out))
            store.add(f"{layer.name}/kernels", kernels.astype(np.float32))
            store.add(f"{layer.name}/bias", np.zeros(c_out, dtype=np.float32))
        elif layer.kind is LayerKind.DENSE:
            n_in, n_out = layer.in_dims[0], layer.out_dims[0]
            std = np.sqrt(2.0 / n_in)
            weights = rng.normal(0.0, std, size=(n_in, n_out))
            store.add(f"{layer.name}/weights", weights.astype(np.float32))
            store.add(f"{layer.name}/bias", np.zeros(n_out, dtype=np.float32))
    return store


def conv_param_names(spec: NetworkSpec) -> set[str]:
    """Names of every conv parameter tensor; the transfer-learning freeze mask."""
    names = set()
    for layer in expand_layers(spec):
        if layer.kind is LayerKind.CONV:
            names.add(f"{layer.name}/kernels")
            names.add(f"{layer.name}/bias")
    return names


def _fetch(store: WeightStore, name: str) -> np.ndarray:
    if name not in store:
        raise MissingWeightError(name)
    return store[name]


def layer_params(store: WeightStore, layer: ExpandedLayer) -> ConvParams | DenseParams | None:
    if layer.kind is LayerKind.CONV:
        return ConvParams(
            kernels=_fetch(store, f"{layer.name}/kernels"),
            bias=_fetch(store, f"{layer.name}/bias"),
        )
    if layer.kind is LayerKind.DENSE:
        return DenseParams(
            weights=_fetch(store, f"{layer.name}/weights"),
            bias=_fetch(store, f"{layer.name}/bias"),
        )
    return None


def forward_trace(
    spec: NetworkSpec,
    store: WeightStore,
    image: Tensor,
    mode: Mode = Mode.FAST,
    keep: bool = False,
) -> tuple[Tensor, list[LayerRun]]:
    """Run all layers, returning final logits and per-layer timing records.

    With ``keep=True`` each record also retains the layer input and conv/dense
    pre-activation, which is what the backward pass consumes.
    """
    expanded = expand_layers(spec)
    if spec.input_dims is not None and tuple(image.shape) != tuple(spec.input_dims):
        raise ShapeError(
            f"image dims {tuple(image.shape)} do not match network input {spec.input_dims}"
        )
    x = image
    runs = []
    for idx, layer in enumerate(expanded):
        params = layer_params(store, layer)
        is_last = idx == len(expanded) - 1
        t0 = time.perf_counter()
        pre = None
        if layer.kind is LayerKind.CONV:
            pre = ops.conv2d(x, params, mode)
            out = ops.relu(pre)
        elif layer.kind is LayerKind.MAXPOOL:
            out = ops.maxpool2d(x, POOL_PARAMS, mode)
        elif layer.kind is LayerKind.FLATTEN:
            out = ops.flatten(x)
        else:
            pre = ops.dense(x, params)
            out = pre if is_last else ops.relu(pre)
        seconds = time.perf_counter() - t0
        runs.append(
            LayerRun(
                layer,
                seconds,
                x_in=x if keep else None,
                pre_activation=pre if keep else None,
            )
        )
        x = out
    return x, runs


def class_probabilities(spec: NetworkSpec, logits: Tensor) -> np.ndarray:
    if logits.ndim != 1 or logits.shape[0] != len(spec.class_labels):
        raise ShapeError(
            f"network produced {tuple(logits.shape)} logits for "
            f"{len(spec.class_labels)} classes; final layer must be FC({len(spec.class_labels)})"
        )
    return ops.softmax(logits)


def forward(
    spec: NetworkSpec, store: WeightStore, image: Tensor, mode: Mode = Mode.FAST
) -> Prediction:
    """Full forward pass with softmax head; ties pick the first class label."""
    t0 = time.perf_counter()
    logits, _ = forward_trace(spec, store, image, mode)
    probs = class_probabilities(spec, logits)
    latency = time.perf_counter() - t0
    label = spec.class_labels[int(np.argmax(probs))]
    return Prediction(
        label=label,
        probabilities={name: float(p) for name, p in zip(spec.class_labels, probs)},
        latency_s=latency,
    )
