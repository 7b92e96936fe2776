"""Input validation helpers for the estimator API."""
from __future__ import annotations

import numpy as np

from .arch import CLASS_LABELS
from .errors import ShapeError


def check_image_stack(X, input_dims: tuple[int, ...]) -> list[np.ndarray]:
    """Coerce X into a list of (H, W, 1) float32 tensors matching input_dims.

    Accepts (n, H, W), (n, H, W, 1), or flattened (n, H*W) arrays with values
    in [0, 1].
    """
    arr = np.asarray(X, dtype=np.float32)
    if len(input_dims) != 3:
        raise ShapeError(f"estimator needs rank-3 network input dims, got {input_dims}")
    h, w, c = input_dims
    if c != 1:
        raise ShapeError("only single-channel inputs are supported")
    if arr.ndim == 2:
        if arr.shape[1] != h * w:
            raise ShapeError(
                f"flattened sample length {arr.shape[1]} does not match {h}x{w} input"
            )
        arr = arr.reshape(arr.shape[0], h, w)
    if arr.ndim == 3:
        arr = arr[:, :, :, None]
    if arr.ndim != 4 or arr.shape[1:] != (h, w, 1):
        raise ShapeError(
            f"expected images shaped (n, {h}, {w}) or (n, {h}, {w}, 1), got {arr.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ShapeError("images contain NaN or Inf")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ShapeError("image values must lie in [0, 1]")
    return [np.ascontiguousarray(arr[i]) for i in range(arr.shape[0])]


def check_labels(y) -> tuple[np.ndarray, np.ndarray]:
    """Map labels to class indices with the pinned (covid, healthy) order.

    Accepts the string labels or integer indices {0, 1}; returns
    (indices, classes) where classes keeps the caller's value type.
    """
    values = np.asarray(y)
    if values.ndim != 1 or values.shape[0] == 0:
        raise ShapeError("y must be a nonempty 1-d array")
    if values.dtype.kind in "iu":
        bad = set(np.unique(values)) - {0, 1}
        if bad:
            raise ShapeError(f"integer labels must be 0 or 1, got {sorted(bad)}")
        return values.astype(np.intp), np.array([0, 1])
    labels = [str(v) for v in values]
    bad = set(labels) - set(CLASS_LABELS)
    if bad:
        raise ShapeError(f"unknown labels {sorted(bad)}; expected {CLASS_LABELS}")
    idx = np.array([CLASS_LABELS.index(v) for v in labels], dtype=np.intp)
    return idx, np.array(CLASS_LABELS)
