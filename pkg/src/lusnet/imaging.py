"""Grayscale image ingestion, preprocessing and seeded 10x augmentation.

The only mandatory codec is binary PGM (magic "P5", maxval 255). Pixels
live either in U8 (0..255 integers) or UnitFloat ([0, 1] float32) domain.
The network preprocessing pipeline is normalize -> resize 224x224 ->
resize to the network input (150x150 for the default architecture); the
intermediate 224 step can be disabled with ``two_stage=False``.

Geometric augmentations resample with bilinear interpolation and border
clamp; every op keeps the output dims and the [0, 1] range. expand_10x is
counter-seeded per (seed, image_index, variant_index), so augmenting a
whole dataset is order-independent and reproducible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import PgmError, ShapeError
from .tensor import Tensor


class Domain(Enum):
    U8 = "u8"
    UNIT_FLOAT = "unit_float"


@dataclass(frozen=True)
class ImageBuffer:
    width: int
    height: int
    pixels: np.ndarray  # (height, width), uint8 or float32
    domain: Domain

    @classmethod
    def u8(cls, pixels) -> "ImageBuffer":
        arr = np.asarray(pixels)
        if arr.ndim != 2:
            raise ShapeError(f"image pixels must be rank 2, got {arr.ndim}")
        if arr.dtype != np.uint8:
            if np.any(arr < 0) or np.any(arr > 255):
                raise ShapeError("U8 pixel values outside 0..255")
            arr = arr.astype(np.uint8)
        return cls(arr.shape[1], arr.shape[0], np.ascontiguousarray(arr), Domain.U8)

    @classmethod
    def unit_float(cls, pixels) -> "ImageBuffer":
        arr = np.clip(np.asarray(pixels, dtype=np.float32), 0.0, 1.0)
        if arr.ndim != 2:
            raise ShapeError(f"image pixels must be rank 2, got {arr.ndim}")
        return cls(arr.shape[1], arr.shape[0], np.ascontiguousarray(arr), Domain.UNIT_FLOAT)

    def same_bits(self, other: "ImageBuffer") -> bool:
        return (
            self.domain is other.domain
            and self.pixels.shape == other.pixels.shape
            and self.pixels.tobytes() == other.pixels.tobytes()
        )


def decode_pgm(data: bytes) -> ImageBuffer:
    """Parse binary PGM (P5, maxval 255); header comments are skipped."""
    if data[:2] != b"P5":
        raise PgmError(f"unsupported magic {data[:2]!r}")
    pos = 2
    fields = []
    while len(fields) < 3:
        if pos >= len(data):
            raise PgmError("truncated header")
        ch = data[pos : pos + 1]
        if ch == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif ch.isspace():
            pos += 1
        elif ch.isdigit():
            start = pos
            while pos < len(data) and data[pos : pos + 1].isdigit():
                pos += 1
            fields.append(int(data[start:pos]))
        else:
            raise PgmError(f"unexpected header byte {ch!r}")
    width, height, maxval = fields
    if maxval != 255:
        raise PgmError(f"unsupported maxval {maxval}; only 255")
    if width < 1 or height < 1:
        raise PgmError(f"bad dimensions {width}x{height}")
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise PgmError("missing whitespace before pixel data")
    pos += 1
    payload = data[pos:]
    if len(payload) < width * height:
        raise PgmError(
            f"truncated payload: need {width * height} bytes, have {len(payload)}"
        )
    if len(payload) > width * height:
        raise PgmError(f"{len(payload) - width * height} trailing bytes after pixel data")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width).copy()
    return ImageBuffer.u8(pixels)


def encode_pgm(img: ImageBuffer) -> bytes:
    """Canonical binary PGM; inverse of decode_pgm on canonical files."""
    if img.domain is not Domain.U8:
        raise PgmError("encode_pgm needs a U8 image; quantize first")
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


def read_pgm(path: str | Path) -> ImageBuffer:
    return decode_pgm(Path(path).read_bytes())


def write_pgm(path: str | Path, img: ImageBuffer) -> None:
    Path(path).write_bytes(encode_pgm(img))


def normalize(img: ImageBuffer) -> ImageBuffer:
    """U8 -> UnitFloat, p/255."""
    if img.domain is not Domain.U8:
        raise ShapeError("normalize expects a U8 image")
    return ImageBuffer.unit_float(img.pixels.astype(np.float32) / 255.0)


def quantize(img: ImageBuffer) -> ImageBuffer:
    """UnitFloat -> U8, round(p*255). Exact inverse of normalize."""
    if img.domain is not Domain.UNIT_FLOAT:
        raise ShapeError("quantize expects a UnitFloat image")
    return ImageBuffer.u8(np.rint(img.pixels.astype(np.float64) * 255.0).astype(np.uint8))


def _sample_grid(pixels: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear sample at float coords with border clamp; float64 math."""
    h, w = pixels.shape
    p = pixels.astype(np.float64)
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    top = p[y0, x0] * (1.0 - fx) + p[y0, x1] * fx
    bottom = p[y1, x0] * (1.0 - fx) + p[y1, x1] * fx
    return top * (1.0 - fy) + bottom * fy


def resize_bilinear(img: ImageBuffer, out_w: int, out_h: int) -> ImageBuffer:
    """Pixel-center mapping src = (dst + 0.5)*(in/out) - 0.5, clamped borders."""
    if img.domain is not Domain.UNIT_FLOAT:
        raise ShapeError("resize expects a UnitFloat image")
    if out_w < 1 or out_h < 1:
        raise ShapeError(f"bad target dims {out_w}x{out_h}")
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (img.height / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (img.width / out_w) - 0.5
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    return ImageBuffer.unit_float(_sample_grid(img.pixels, grid_y, grid_x))


def to_tensor(img: ImageBuffer) -> Tensor:
    """UnitFloat image -> (H, W, 1) float32 activation tensor."""
    if img.domain is not Domain.UNIT_FLOAT:
        raise ShapeError("to_tensor expects a UnitFloat image")
    return np.ascontiguousarray(img.pixels[:, :, None], dtype=np.float32)


def preprocess_for_net(
    img: ImageBuffer,
    target_hw: tuple[int, int] = (150, 150),
    two_stage: bool = True,
) -> Tensor:
    """normalize -> scale to 224x224 -> scale to the network input dims.

    ``two_stage=False`` resizes straight to the target.
    """
    unit = normalize(img) if img.domain is Domain.U8 else img
    if two_stage:
        unit = resize_bilinear(unit, 224, 224)
    unit = resize_bilinear(unit, target_hw[1], target_hw[0])
    return to_tensor(unit)


def default_record_loader(spec, data_root, two_stage: bool = True):
    """Loader for manifest records: path -> preprocessed input tensor."""
    if spec.input_dims is None or len(spec.input_dims) != 3:
        raise ShapeError("network input dims must be (H, W, 1) to load images")
    target = (spec.input_dims[0], spec.input_dims[1])
    root = Path(data_root) if data_root else Path(".")

    def load(record):
        return preprocess_for_net(read_pgm(root / record.path), target, two_stage)

    return load


class AugmentKind(Enum):
    ROTATE_DEG = "rotate_deg"
    FLIP_H = "flip_h"
    SHIFT_X = "shift_x"
    SHIFT_Y = "shift_y"
    ZOOM = "zoom"
    BRIGHTNESS = "brightness"


@dataclass(frozen=True)
class AugmentOp:
    kind: AugmentKind
    magnitude: float = 0.0


@dataclass(frozen=True)
class AugmentRanges:
    """Magnitude limits for each op; shifts are fractions of the image dims."""

    rotate_deg: float = 10.0
    shift_frac: float = 0.1
    zoom_min: float = 0.9
    zoom_max: float = 1.1
    brightness: float = 0.2
    max_ops: int = 3


DEFAULT_RANGES = AugmentRanges()


def _check_magnitude(op: AugmentOp, ranges: AugmentRanges) -> None:
    m = op.magnitude
    if op.kind is AugmentKind.ROTATE_DEG and abs(m) > ranges.rotate_deg:
        raise ShapeError(f"rotation {m} outside +/-{ranges.rotate_deg} degrees")
    if op.kind in (AugmentKind.SHIFT_X, AugmentKind.SHIFT_Y) and abs(m) > ranges.shift_frac:
        raise ShapeError(f"shift {m} outside +/-{ranges.shift_frac}")
    if op.kind is AugmentKind.ZOOM and not ranges.zoom_min <= m <= ranges.zoom_max:
        raise ShapeError(f"zoom {m} outside [{ranges.zoom_min}, {ranges.zoom_max}]")
    if op.kind is AugmentKind.BRIGHTNESS and abs(m) > ranges.brightness:
        raise ShapeError(f"brightness {m} outside +/-{ranges.brightness}")


def augment(img: ImageBuffer, op: AugmentOp, ranges: AugmentRanges = DEFAULT_RANGES) -> ImageBuffer:
    if img.domain is not Domain.UNIT_FLOAT:
        raise ShapeError("augment expects a UnitFloat image")
    _check_magnitude(op, ranges)
    h, w = img.height, img.width
    if op.kind is AugmentKind.FLIP_H:
        return ImageBuffer.unit_float(img.pixels[:, ::-1])
    if op.kind is AugmentKind.BRIGHTNESS:
        return ImageBuffer.unit_float(img.pixels + np.float32(op.magnitude))
    dst_y, dst_x = np.meshgrid(
        np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij"
    )
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    if op.kind is AugmentKind.ROTATE_DEG:
        theta = math.radians(op.magnitude)
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        rel_y, rel_x = dst_y - cy, dst_x - cx
        src_y = cy + sin_t * rel_x + cos_t * rel_y
        src_x = cx + cos_t * rel_x - sin_t * rel_y
    elif op.kind is AugmentKind.SHIFT_X:
        src_y, src_x = dst_y, dst_x - op.magnitude * w
    elif op.kind is AugmentKind.SHIFT_Y:
        src_y, src_x = dst_y - op.magnitude * h, dst_x
    else:  # ZOOM: magnitude > 1 magnifies about the center
        src_y = cy + (dst_y - cy) / op.magnitude
        src_x = cx + (dst_x - cx) / op.magnitude
    return ImageBuffer.unit_float(_sample_grid(img.pixels, src_y, src_x))


_SAMPLED_KINDS = (
    AugmentKind.ROTATE_DEG,
    AugmentKind.FLIP_H,
    AugmentKind.SHIFT_X,
    AugmentKind.SHIFT_Y,
    AugmentKind.ZOOM,
    AugmentKind.BRIGHTNESS,
)


def sample_ops(rng: np.random.Generator, ranges: AugmentRanges = DEFAULT_RANGES) -> list[AugmentOp]:
    """Draw 1..max_ops distinct op kinds with uniform magnitudes."""
    n = int(rng.integers(1, ranges.max_ops + 1))
    kinds = rng.choice(len(_SAMPLED_KINDS), size=n, replace=False)
    out = []
    for kind_idx in kinds:
        kind = _SAMPLED_KINDS[int(kind_idx)]
        if kind is AugmentKind.ROTATE_DEG:
            m = float(rng.uniform(-ranges.rotate_deg, ranges.rotate_deg))
        elif kind in (AugmentKind.SHIFT_X, AugmentKind.SHIFT_Y):
            m = float(rng.uniform(-ranges.shift_frac, ranges.shift_frac))
        elif kind is AugmentKind.ZOOM:
            m = float(rng.uniform(ranges.zoom_min, ranges.zoom_max))
        elif kind is AugmentKind.BRIGHTNESS:
            m = float(rng.uniform(-ranges.brightness, ranges.brightness))
        else:
            m = 0.0
        out.append(AugmentOp(kind, m))
    return out


def expand_10x(
    img: ImageBuffer,
    seed: int,
    image_index: int = 0,
    ranges: AugmentRanges = DEFAULT_RANGES,
) -> list[ImageBuffer]:
    """The original plus 9 independently sampled augmented variants.

    Variant v uses a generator keyed by (seed, image_index, v), so results do
    not depend on processing order across a dataset.
    """
    out = [img]
    for variant in range(1, 10):
        rng = np.random.default_rng((seed, image_index, variant))
        current = img
        for op in sample_ops(rng, ranges):
            current = augment(current, op, ranges)
        out.append(current)
    return out
