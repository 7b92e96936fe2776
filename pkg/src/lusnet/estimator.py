"""scikit-learn style estimator facade over the CNN engine.

LungUltrasoundClassifier wraps architecture parsing, parameter init (or a
LUSW checkpoint), the SGD training loop and the softmax forward pass behind
the fit/predict/predict_proba contract, so the engine slots into sklearn
pipelines, grid search and cross-validation.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.exceptions import NotFittedError

from . import weights_io
from .arch import DEFAULT_ARCH, parse_arch
from .network import class_probabilities, forward_trace, init_params
from .tensor import Mode
from .training import TrainConfig, fit_arrays
from .validation import check_image_stack, check_labels


class LungUltrasoundClassifier(BaseEstimator, ClassifierMixin):
    """Binary lung-ultrasound classifier (covid vs healthy).

    Parameters
    ----------
    arch : architecture composition string.
    learning_rate, momentum, batch_size, epochs : SGD hyperparameters.
    transfer : freeze all conv tensors and train only the dense head.
    seed : controls initialization and batch shuffling.
    mode : "fast" (im2col) or "reference" kernels.
    init_weights : optional path to a LUSW file to start from; required
        for ``transfer=True`` to be meaningful, otherwise random init.
    """

    def __init__(
        self,
        arch: str = DEFAULT_ARCH,
        learning_rate: float = 0.01,
        momentum: float = 0.9,
        batch_size: int = 8,
        epochs: int = 10,
        transfer: bool = False,
        seed: int = 0,
        mode: str = "fast",
        init_weights: str | None = None,
    ):
        self.arch = arch
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.batch_size = batch_size
        self.epochs = epochs
        self.transfer = transfer
        self.seed = seed
        self.mode = mode
        self.init_weights = init_weights

    def fit(self, X, y) -> "LungUltrasoundClassifier":
        spec = parse_arch(self.arch)
        images = check_image_stack(X, spec.input_dims)
        idx, classes = check_labels(y)
        if len(images) != idx.shape[0]:
            raise ValueError(f"X has {len(images)} samples but y has {idx.shape[0]}")
        store = (
            weights_io.load(self.init_weights)
            if self.init_weights
            else init_params(spec, self.seed)
        )
        config = TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            momentum=self.momentum,
            batch_size=self.batch_size,
            transfer_mode=self.transfer,
            seed=self.seed,
        )
        history = fit_arrays(
            spec, store, (images, list(idx)), None, config, Mode.parse(self.mode)
        )
        self.spec_ = spec
        self.weights_ = store
        self.history_ = history
        self.classes_ = classes
        return self

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("fit must be called before predict")

    def predict_proba(self, X) -> np.ndarray:
        self._check_fitted()
        images = check_image_stack(X, self.spec_.input_dims)
        mode = Mode.parse(self.mode)
        probs = np.empty((len(images), len(self.classes_)), dtype=np.float64)
        for i, image in enumerate(images):
            logits, _ = forward_trace(self.spec_, self.weights_, image, mode)
            probs[i] = class_probabilities(self.spec_, logits)
        return probs

    def predict(self, X) -> np.ndarray:
        probs = self.predict_proba(X)
        return self.classes_[np.argmax(probs, axis=1)]
