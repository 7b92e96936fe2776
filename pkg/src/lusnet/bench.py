"""Per-layer forward benchmark for edge-deployment sizing.

MAC counts are closed-form functions of the architecture, never of measured
time: conv = H*W*3*3*Cin*Cout (output spatial dims), dense = N*M, zero for
pooling and flatten. The peak activation memory estimate is the largest
(input + output + im2col scratch) float32 footprint over all layers.
Reported as MACs, not FLOPs (1 MAC = 2 FLOP).
"""
from __future__ import annotations

from dataclasses import dataclass

from .arch import ExpandedLayer, LayerKind, NetworkSpec, expand_layers
from .network import forward_trace
from .tensor import Mode, Tensor
from .weights_io import WeightStore

BYTES_PER_VALUE = 4


@dataclass(frozen=True)
class LayerBenchRecord:
    name: str
    kind: str
    output_dims: tuple[int, ...]
    macs: int
    mean_s: float
    min_s: float
    max_s: float


@dataclass(frozen=True)
class BenchReport:
    mode: str
    iterations: int
    layers: tuple[LayerBenchRecord, ...]
    total_macs: int
    total_mean_s: float
    peak_activation_bytes: int


def layer_macs(layer: ExpandedLayer) -> int:
    if layer.kind is LayerKind.CONV:
        h, w, c_out = layer.out_dims
        return h * w * 3 * 3 * layer.in_dims[2] * c_out
    if layer.kind is LayerKind.DENSE:
        return layer.in_dims[0] * layer.out_dims[0]
    return 0


def _elements(dims: tuple[int, ...]) -> int:
    n = 1
    for d in dims:
        n *= d
    return n


def layer_scratch_bytes(layer: ExpandedLayer) -> int:
    if layer.kind is LayerKind.CONV:
        h, w, _ = layer.out_dims
        return h * w * 3 * 3 * layer.in_dims[2] * BYTES_PER_VALUE
    return 0


def peak_activation_bytes(spec: NetworkSpec) -> int:
    peak = 0
    for layer in expand_layers(spec):
        footprint = (
            _elements(layer.in_dims) + _elements(layer.out_dims)
        ) * BYTES_PER_VALUE + layer_scratch_bytes(layer)
        peak = max(peak, footprint)
    return peak


def total_macs(spec: NetworkSpec) -> int:
    return sum(layer_macs(layer) for layer in expand_layers(spec))


def bench_forward(
    spec: NetworkSpec,
    store: WeightStore,
    image: Tensor,
    iterations: int = 1,
    mode: Mode = Mode.FAST,
) -> BenchReport:
    """One warmup pass, then per-layer wall timing over ``iterations`` runs."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    expanded = expand_layers(spec)
    if not expanded:
        return BenchReport(mode.value, iterations, (), 0, 0.0, 0)
    forward_trace(spec, store, image, mode)  # warmup
    samples: list[list[float]] = [[] for _ in expanded]
    for _ in range(iterations):
        _, runs = forward_trace(spec, store, image, mode)
        for i, run in enumerate(runs):
            samples[i].append(run.seconds)
    records = []
    for layer, times in zip(expanded, samples):
        records.append(
            LayerBenchRecord(
                name=layer.name,
                kind=layer.kind.word,
                output_dims=layer.out_dims,
                macs=layer_macs(layer),
                mean_s=sum(times) / len(times),
                min_s=min(times),
                max_s=max(times),
            )
        )
    return BenchReport(
        mode=mode.value,
        iterations=iterations,
        layers=tuple(records),
        total_macs=sum(r.macs for r in records),
        total_mean_s=sum(r.mean_s for r in records),
        peak_activation_bytes=peak_activation_bytes(spec),
    )


def report_as_dict(report: BenchReport) -> dict:
    return {
        "mode": report.mode,
        "iterations": report.iterations,
        "layers": [
            {
                "name": r.name,
                "kind": r.kind,
                "output_dims": list(r.output_dims),
                "macs": r.macs,
                "mean_ms": r.mean_s * 1e3,
                "min_ms": r.min_s * 1e3,
                "max_ms": r.max_s * 1e3,
            }
            for r in report.layers
        ],
        "total_macs": report.total_macs,
        "total_mean_ms": report.total_mean_s * 1e3,
        "peak_activation_bytes": report.peak_activation_bytes,
    }
