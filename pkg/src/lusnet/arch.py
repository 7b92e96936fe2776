"""Architecture composition strings and network shape inference.

Grammar::

    spec  := stage ("-" stage)*
    stage := [count "x"] kind "(" dims ")"
    kind  := "C" | "MP" | "F" | "FC"
    dims  := int ("x" int)*

Whitespace is ignored around the "-" separators only. A stage's dims are
the *annotated output extents* of that stage; shape inference recomputes
them from the input dims and raises ShapeConflict on disagreement.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .errors import ArchSyntaxError, ShapeConflict, ShapeError

DEFAULT_ARCH = (
    "2xC(150x150x64) - MP(75x75x64) - 2xC(75x75x128) - MP(37x37x128) - "
    "3xC(37x37x256) - MP(18x18x256) - 3xC(18x18x512) - MP(9x9x512) - "
    "3xC(9x9x512) - MP(4x4x512) - F(8192) - FC(2)"
)

CLASS_LABELS = ("covid", "healthy")

KERNEL_SIZE = 3  # all conv layers are 3x3, stride 1, Same padding


class LayerKind(Enum):
    CONV = "C"
    MAXPOOL = "MP"
    FLATTEN = "F"
    DENSE = "FC"

    @property
    def word(self) -> str:
        return _KIND_WORDS[self]


_KIND_WORDS = {
    LayerKind.CONV: "conv",
    LayerKind.MAXPOOL: "maxpool",
    LayerKind.FLATTEN: "flatten",
    LayerKind.DENSE: "dense",
}


@dataclass(frozen=True)
class LayerSpec:
    kind: LayerKind
    repeat: int
    annotated_dims: tuple[int, ...]

    def __post_init__(self):
        if self.repeat < 1:
            raise ShapeError(f"repeat must be >= 1, got {self.repeat}")
        if not self.annotated_dims or any(d < 1 for d in self.annotated_dims):
            raise ShapeError(f"annotated dims must be positive, got {self.annotated_dims}")
        rank = len(self.annotated_dims)
        if self.kind in (LayerKind.CONV, LayerKind.MAXPOOL) and rank != 3:
            raise ShapeError(f"{self.kind.value} dims must be rank 3, got {rank}")
        if self.kind in (LayerKind.FLATTEN, LayerKind.DENSE) and rank != 1:
            raise ShapeError(f"{self.kind.value} dims must be rank 1, got {rank}")

    @property
    def channels(self) -> int:
        """Output channel count for Conv/MaxPool stages."""
        return self.annotated_dims[2]

    @property
    def units(self) -> int:
        """Output length for Flatten/FullConnection stages."""
        return self.annotated_dims[0]


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    input_dims: tuple[int, ...] | None = None
    class_labels: tuple[str, ...] = CLASS_LABELS

    def with_input_dims(self, dims: tuple[int, ...]) -> "NetworkSpec":
        return NetworkSpec(self.layers, tuple(dims), self.class_labels)


@dataclass(frozen=True)
class ExpandedLayer:
    """One concrete layer after unrolling the repeat prefixes."""

    name: str
    kind: LayerKind
    stage: int  # 1-based stage index in the composition string
    in_dims: tuple[int, ...]
    out_dims: tuple[int, ...]


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.i = 0

    def error(self, message: str, offset: int | None = None):
        raise ArchSyntaxError(message, self.i if offset is None else offset)

    def skip_ws(self):
        while self.i < len(self.text) and self.text[self.i].isspace():
            self.i += 1

    def parse_int(self, what: str) -> int:
        start = self.i
        while self.i < len(self.text) and self.text[self.i].isdigit():
            self.i += 1
        if self.i == start:
            self.error(f"expected {what}")
        value = int(self.text[start : self.i])
        if value < 1:
            self.error(f"non-positive {what}", start)
        return value

    def expect(self, ch: str):
        if self.i >= len(self.text) or self.text[self.i] != ch:
            self.error(f"expected {ch!r}")
        self.i += 1

    def parse_stage(self) -> LayerSpec:
        repeat = 1
        start = self.i
        j = self.i
        while j < len(self.text) and self.text[j].isdigit():
            j += 1
        if j > self.i and j < len(self.text) and self.text[j] == "x":
            repeat = int(self.text[self.i : j])
            if repeat < 1:
                self.error("non-positive repeat count", start)
            self.i = j + 1
        elif j > self.i:
            self.error("expected 'x' after repeat count", j)
        kind_start = self.i
        while self.i < len(self.text) and self.text[self.i].isalpha():
            self.i += 1
        kind_text = self.text[kind_start : self.i]
        if not kind_text:
            self.error("expected layer kind")
        try:
            kind = LayerKind(kind_text)
        except ValueError:
            self.error(f"unknown kind {kind_text}", kind_start)
        self.expect("(")
        dims = [self.parse_int("dim")]
        while self.i < len(self.text) and self.text[self.i] == "x":
            self.i += 1
            dims.append(self.parse_int("dim"))
        self.expect(")")
        return LayerSpec(kind, repeat, tuple(dims))

    def parse(self) -> tuple[LayerSpec, ...]:
        stages = []
        self.skip_ws()
        while True:
            stages.append(self.parse_stage())
            self.skip_ws()
            if self.i >= len(self.text):
                break
            self.expect("-")
            self.skip_ws()
        return tuple(stages)


def parse_arch(text: str, input_dims: tuple[int, ...] | None = None) -> NetworkSpec:
    """Parse a composition string; grayscale input dims are derived from a
    leading Conv stage unless given explicitly."""
    layers = _Parser(text).parse()
    if input_dims is None and layers[0].kind is LayerKind.CONV:
        h, w, _ = layers[0].annotated_dims
        input_dims = (h, w, 1)
    return NetworkSpec(layers, tuple(input_dims) if input_dims else None)


def render_arch(spec: NetworkSpec) -> str:
    """Canonical form: single spaces around dashes, no 1x prefixes."""
    parts = []
    for layer in spec.layers:
        prefix = f"{layer.repeat}x" if layer.repeat > 1 else ""
        dims = "x".join(str(d) for d in layer.annotated_dims)
        parts.append(f"{prefix}{layer.kind.value}({dims})")
    return " - ".join(parts)


def expand_layers(spec: NetworkSpec) -> list[ExpandedLayer]:
    """Unroll repeats and propagate shapes, checking every stage's annotation.

    Shape rules: conv preserves spatial dims (Same padding, stride 1) and sets
    channels from the annotation; max-pool floor-halves spatial dims; flatten
    linearizes; dense maps to its annotated unit count.
    """
    if not spec.layers:
        return []
    if spec.input_dims is None:
        raise ShapeError("network input dims are unknown; pass input_dims explicitly")
    expanded = []
    cur = tuple(spec.input_dims)
    for si, layer in enumerate(spec.layers):
        for r in range(layer.repeat):
            if layer.kind is LayerKind.CONV:
                if len(cur) != 3:
                    raise ShapeError(f"conv stage {si + 1} needs rank-3 input, got {cur}")
                out = (cur[0], cur[1], layer.channels)
            elif layer.kind is LayerKind.MAXPOOL:
                if len(cur) != 3:
                    raise ShapeError(f"maxpool stage {si + 1} needs rank-3 input, got {cur}")
                if cur[0] < 2 or cur[1] < 2:
                    raise ShapeError(
                        f"maxpool stage {si + 1} input {cur} smaller than one window"
                    )
                out = (cur[0] // 2, cur[1] // 2, cur[2])
            elif layer.kind is LayerKind.FLATTEN:
                if len(cur) != 3:
                    raise ShapeError(f"flatten stage {si + 1} needs rank-3 input, got {cur}")
                out = (cur[0] * cur[1] * cur[2],)
            else:
                if len(cur) != 1:
                    raise ShapeError(f"dense stage {si + 1} needs rank-1 input, got {cur}")
                out = (layer.units,)
            expanded.append(
                ExpandedLayer(f"{layer.kind.word}{si}_{r}", layer.kind, si + 1, cur, out)
            )
            cur = out
        if cur != layer.annotated_dims:
            raise ShapeConflict(si + 1, layer.annotated_dims, cur)
    return expanded


def infer_shapes(spec: NetworkSpec) -> list[tuple[int, ...]]:
    """Stage-level output shapes, validated against the annotations."""
    expanded = expand_layers(spec)
    last_out = {e.stage: e.out_dims for e in expanded}
    return [last_out[si + 1] for si in range(len(spec.layers))]


def param_count(spec: NetworkSpec) -> int:
    """Total scalar parameter count (3x3 conv kernels + biases, dense + biases)."""
    total = 0
    for layer in expand_layers(spec):
        if layer.kind is LayerKind.CONV:
            c_in, c_out = layer.in_dims[2], layer.out_dims[2]
            total += KERNEL_SIZE * KERNEL_SIZE * c_in * c_out + c_out
        elif layer.kind is LayerKind.DENSE:
            total += layer.in_dims[0] * layer.out_dims[0] + layer.out_dims[0]
    return total
