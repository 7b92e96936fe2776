"""Backpropagation, SGD with momentum, transfer-learning freeze mask,
gradient checking and evaluation metrics.

Freezing is an update-time policy: backward always produces gradients for
every parameter tensor, and sgd_step skips the ones named in the freeze
mask. Transfer mode freezes all conv tensors, so only the dense head moves.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dataset as dataset_mod
from . import ops
from .arch import LayerKind, NetworkSpec
from .errors import ManifestError, ShapeError
from .network import class_probabilities, forward_trace, layer_params, conv_param_names
from .tensor import Mode, PoolParams, Tensor
from .weights_io import WeightStore

PROB_CLAMP = 1e-12

GradientSet = dict[str, np.ndarray]


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float = 0.01
    momentum: float = 0.9
    batch_size: int = 8
    transfer_mode: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise ShapeError("epochs must be >= 0")
        if self.learning_rate <= 0:
            raise ShapeError("learning rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ShapeError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise ShapeError("batch size must be positive")


@dataclass(frozen=True)
class Metrics:
    """Binary metrics with "covid" as the positive class.

    Confusion rows are true classes (covid, healthy), columns predictions.
    """

    accuracy: float
    sensitivity: float
    specificity: float
    confusion: tuple[tuple[int, int], tuple[int, int]]


def metrics_from_confusion(confusion) -> Metrics:
    (tp, fn), (fp, tn) = confusion
    total = tp + fn + fp + tn
    if total == 0:
        raise ShapeError("empty confusion matrix")
    sensitivity = tp / (tp + fn) if tp + fn else 0.0
    specificity = tn / (tn + fp) if tn + fp else 0.0
    return Metrics(
        accuracy=(tp + tn) / total,
        sensitivity=sensitivity,
        specificity=specificity,
        confusion=((tp, fn), (fp, tn)),
    )


def cross_entropy(probabilities: Tensor, true_label_index: int) -> float:
    """-log p[true], with p clamped to >= 1e-12."""
    if not 0 <= true_label_index < probabilities.shape[0]:
        raise ShapeError(f"label index {true_label_index} out of range")
    return float(-np.log(max(float(probabilities[true_label_index]), PROB_CLAMP)))


def backward(
    spec: NetworkSpec,
    store: WeightStore,
    batch_images: list[Tensor],
    batch_labels: list[int],
    mode: Mode = Mode.FAST,
) -> tuple[float, GradientSet]:
    """Mean cross-entropy over the batch and its gradient for every parameter.

    ``store`` may be any mapping of name -> array; the gradient arrays match
    the parameter dtypes, so a float64 mapping yields float64 gradients (used
    by the gradient-check harness).
    """
    if not batch_images:
        raise ShapeError("empty batch")
    if len(batch_images) != len(batch_labels):
        raise ShapeError("batch images/labels length mismatch")
    n = len(batch_images)
    grads: GradientSet = {}
    total_loss = 0.0
    for image, label in zip(batch_images, batch_labels):
        logits, runs = forward_trace(spec, store, image, mode, keep=True)
        probs = class_probabilities(spec, logits)
        total_loss += cross_entropy(probs, label)
        dout = probs.copy()
        dout[label] -= 1.0
        dout /= n
        for idx in range(len(runs) - 1, -1, -1):
            run = runs[idx]
            layer = run.layer
            is_last = idx == len(runs) - 1
            if layer.kind is LayerKind.CONV:
                dout = ops.relu_backward(run.pre_activation, dout)
                params = layer_params(store, layer)
                dout, dk, db = ops.conv2d_backward(run.x_in, params, dout)
                _accumulate(grads, f"{layer.name}/kernels", dk)
                _accumulate(grads, f"{layer.name}/bias", db)
            elif layer.kind is LayerKind.MAXPOOL:
                dout = ops.maxpool2d_backward(run.x_in, _POOL, dout)
            elif layer.kind is LayerKind.FLATTEN:
                dout = dout.reshape(run.x_in.shape)
            else:
                if not is_last:
                    dout = ops.relu_backward(run.pre_activation, dout)
                params = layer_params(store, layer)
                dout, dw, db = ops.dense_backward(run.x_in, params, dout)
                _accumulate(grads, f"{layer.name}/weights", dw)
                _accumulate(grads, f"{layer.name}/bias", db)
    return total_loss / n, grads


_POOL = PoolParams(window=2, stride=2)


def _accumulate(grads: GradientSet, name: str, value: np.ndarray) -> None:
    if name in grads:
        grads[name] += value
    else:
        grads[name] = value


def _batch_loss(spec, store, images, labels, mode=Mode.FAST) -> float:
    total = 0.0
    for image, label in zip(images, labels):
        logits, _ = forward_trace(spec, store, image, mode)
        total += cross_entropy(class_probabilities(spec, logits), label)
    return total / len(images)


def grad_check(
    spec: NetworkSpec,
    store: WeightStore,
    sample: tuple[Tensor, int] | None = None,
    epsilon: float = 1e-4,
    max_params: int = 200,
    seed: int = 0,
) -> float:
    """Max relative error between analytic gradients and 64-bit central
    differences over up to ``max_params`` randomly sampled scalar parameters.

    relative error = |g_a - g_fd| / max(|g_a|, |g_fd|, 1e-8)
    """
    rng = np.random.default_rng(seed)
    if sample is None:
        image = rng.random(spec.input_dims)
        label = int(rng.integers(0, len(spec.class_labels)))
    else:
        image, label = sample
    image = np.asarray(image, dtype=np.float64)
    store64 = {name: np.asarray(v, dtype=np.float64) for name, v in store.items()}
    _, grads = backward(spec, store64, [image], [label])

    coords = [(name, i) for name, v in store64.items() for i in range(v.size)]
    if len(coords) > max_params:
        picked = rng.choice(len(coords), size=max_params, replace=False)
        coords = [coords[i] for i in picked]

    worst = 0.0
    for name, i in coords:
        flat = store64[name].reshape(-1)
        orig = flat[i]
        flat[i] = orig + epsilon
        loss_plus = _batch_loss(spec, store64, [image], [label])
        flat[i] = orig - epsilon
        loss_minus = _batch_loss(spec, store64, [image], [label])
        flat[i] = orig
        fd = (loss_plus - loss_minus) / (2 * epsilon)
        ga = float(grads[name].reshape(-1)[i])
        rel = abs(ga - fd) / max(abs(ga), abs(fd), 1e-8)
        worst = max(worst, rel)
    return worst


def zero_velocity(store: WeightStore) -> GradientSet:
    return {name: np.zeros_like(v) for name, v in store.items()}


def sgd_step(
    store: WeightStore,
    grads: GradientSet,
    velocity: GradientSet,
    config: TrainConfig,
    freeze_mask: set[str] = frozenset(),
) -> None:
    """In-place momentum update: v <- mu*v - lr*g; w <- w + v.

    Frozen tensors and their velocities stay bit-identical.
    """
    if set(grads) != set(store.names()) or set(velocity) != set(store.names()):
        raise ShapeError("gradient/velocity names do not match the weight store")
    for name in store.names():
        if name in freeze_mask:
            continue
        v = velocity[name]
        v *= config.momentum
        v -= config.learning_rate * grads[name]
        store[name] = store[name] + v


def _load_split(manifest, split, loader, cache):
    records = [r for r in manifest.records if r.split == split]
    if not records:
        raise ManifestError(f"split {split!r} is empty")
    images, labels = [], []
    for rec in records:
        if rec.path not in cache:
            cache[rec.path] = loader(rec)
        images.append(cache[rec.path])
        labels.append(dataset_mod.label_index(rec.label))
    return images, labels


def _split_accuracy(spec, store, images, labels, mode) -> float:
    correct = 0
    for image, label in zip(images, labels):
        logits, _ = forward_trace(spec, store, image, mode)
        probs = class_probabilities(spec, logits)
        correct += int(np.argmax(probs)) == label
    return correct / len(images)


def fit_arrays(
    spec: NetworkSpec,
    store: WeightStore,
    train_xy: tuple[list[Tensor], list[int]],
    val_xy: tuple[list[Tensor], list[int]] | None,
    config: TrainConfig,
    mode: Mode = Mode.FAST,
    on_epoch=None,
) -> list[dict]:
    """Epoch loop over in-memory samples; returns per-epoch history rows."""
    train_images, train_labels = train_xy
    if not train_images:
        raise ManifestError("training set is empty")
    freeze_mask = conv_param_names(spec) if config.transfer_mode else set()
    store.frozen = set(freeze_mask)
    velocity = zero_velocity(store)
    history = []
    n = len(train_images)
    for epoch in range(config.epochs):
        order = dataset_mod.epoch_order(n, config.seed, epoch)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            chosen = order[start : start + config.batch_size]
            images = [train_images[i] for i in chosen]
            labels = [train_labels[i] for i in chosen]
            loss, grads = backward(spec, store, images, labels, mode)
            sgd_step(store, grads, velocity, config, freeze_mask)
            epoch_loss += loss * len(images)
        row = {
            "epoch": epoch + 1,
            "train_loss": epoch_loss / n,
            "train_acc": _split_accuracy(spec, store, train_images, train_labels, mode),
            "val_acc": (
                _split_accuracy(spec, store, val_xy[0], val_xy[1], mode) if val_xy else None
            ),
        }
        history.append(row)
        if on_epoch is not None:
            on_epoch(row)
    return history


def train(
    spec: NetworkSpec,
    store: WeightStore,
    manifest,
    config: TrainConfig,
    data_root=None,
    loader=None,
    mode: Mode = Mode.FAST,
    on_epoch=None,
) -> tuple[WeightStore, list[dict]]:
    """Manifest-driven training; images are loaded once and cached.

    The default loader reads binary PGM files relative to ``data_root`` and
    preprocesses them to the network input dims.
    """
    if loader is None:
        from .imaging import default_record_loader

        loader = default_record_loader(spec, data_root)
    cache: dict[str, Tensor] = {}
    train_xy = _load_split(manifest, "train", loader, cache)
    val_xy = _load_split(manifest, "val", loader, cache)
    history = fit_arrays(spec, store, train_xy, val_xy, config, mode, on_epoch)
    return store, history


def evaluate(
    spec: NetworkSpec,
    store: WeightStore,
    manifest,
    split: str,
    data_root=None,
    loader=None,
    mode: Mode = Mode.FAST,
) -> Metrics:
    """Confusion-matrix metrics of argmax predictions over one split."""
    if loader is None:
        from .imaging import default_record_loader

        loader = default_record_loader(spec, data_root)
    cache: dict[str, Tensor] = {}
    images, labels = _load_split(manifest, split, loader, cache)
    confusion = [[0, 0], [0, 0]]
    for image, label in zip(images, labels):
        logits, _ = forward_trace(spec, store, image, mode)
        predicted = int(np.argmax(class_probabilities(spec, logits)))
        confusion[label][predicted] += 1
    return metrics_from_confusion(confusion)
