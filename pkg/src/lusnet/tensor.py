"""Dense float32 tensors and per-layer parameter bundles.

A tensor is a plain C-contiguous numpy array of rank 1..4. Images and
activations use (height, width, channels) layout, so the linear index of
element (h, w, c) is (h*W + w)*C + c.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ShapeError

Tensor = np.ndarray

MAX_RANK = 4


def tensor(values, dims: tuple[int, ...] | None = None) -> Tensor:
    """Validating constructor: finite float32, rank 1..4, all extents >= 1."""
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if dims is not None:
        if int(np.prod(dims)) != arr.size:
            raise ShapeError(f"cannot shape {arr.size} values into dims {dims}")
        arr = arr.reshape(dims)
    if not 1 <= arr.ndim <= MAX_RANK:
        raise ShapeError(f"rank {arr.ndim} outside supported range 1..{MAX_RANK}")
    if any(d < 1 for d in arr.shape):
        raise ShapeError(f"non-positive extent in dims {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError("tensor contains NaN or Inf")
    return arr


def tensor_unchecked(values, dims: tuple[int, ...] | None = None) -> Tensor:
    """Unchecked constructor; kernels assume the caller already validated."""
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if dims is not None:
        arr = arr.reshape(dims)
    return arr


def zeros(dims: tuple[int, ...]) -> Tensor:
    return np.zeros(dims, dtype=np.float32)


class Padding(Enum):
    SAME = "same"
    VALID = "valid"


class Mode(Enum):
    """Kernel implementation route: naive loops vs im2col + matmul."""

    REFERENCE = "reference"
    FAST = "fast"

    @classmethod
    def parse(cls, text: str) -> "Mode":
        try:
            return cls(text.lower())
        except ValueError:
            raise ShapeError(f"unknown mode {text!r}; expected reference|fast") from None


@dataclass(frozen=True)
class ConvParams:
    """kernels: (kh, kw, c_in, c_out); bias: (c_out,)."""

    kernels: Tensor
    bias: Tensor
    stride: int = 1
    padding: Padding = Padding.SAME

    def __post_init__(self):
        if self.kernels.ndim != 4:
            raise ShapeError(f"conv kernels must be rank 4, got {self.kernels.ndim}")
        if self.bias.ndim != 1 or self.bias.shape[0] != self.kernels.shape[3]:
            raise ShapeError(
                f"conv bias length {self.bias.shape} must equal c_out {self.kernels.shape[3]}"
            )
        if self.stride < 1:
            raise ShapeError("conv stride must be positive")

    @property
    def c_in(self) -> int:
        return self.kernels.shape[2]

    @property
    def c_out(self) -> int:
        return self.kernels.shape[3]


@dataclass(frozen=True)
class PoolParams:
    window: int = 2
    stride: int = 2

    def __post_init__(self):
        if self.window < 1 or self.stride < 1:
            raise ShapeError("pool window and stride must be positive")


@dataclass(frozen=True)
class DenseParams:
    """weights: (n_in, n_out); bias: (n_out,)."""

    weights: Tensor
    bias: Tensor

    def __post_init__(self):
        if self.weights.ndim != 2:
            raise ShapeError(f"dense weights must be rank 2, got {self.weights.ndim}")
        if self.bias.ndim != 1 or self.bias.shape[0] != self.weights.shape[1]:
            raise ShapeError(
                f"dense bias length {self.bias.shape} must equal n_out {self.weights.shape[1]}"
            )

    @property
    def n_in(self) -> int:
        return self.weights.shape[0]

    @property
    def n_out(self) -> int:
        return self.weights.shape[1]
