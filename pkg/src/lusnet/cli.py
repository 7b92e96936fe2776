"""Command-line interface: the full pipeline in one executable.

Subcommands: manifest, split, augment, train, evaluate, classify, bench,
weights-info, serve. Machine-readable output is JSON on stdout (JSON Lines
for manifests and training history); logs go to stderr.

Option precedence: command-line flags > JSON config file (--config) >
built-in defaults. Exit codes: 0 success, 1 usage error, 2 data error,
3 internal error.

The bench subcommand reports MACs, not FLOPs (1 MAC = 2 FLOP).
"""
from __future__ import annotations

import argparse
import json
import signal
import sys
import zlib
from pathlib import Path

import numpy as np

from . import bench as bench_mod
from . import dataset as dataset_mod
from . import imaging, service, training, weights_io
from .arch import parse_arch
from .errors import LusnetError
from .network import forward, init_params
from .tensor import Mode


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="lusnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="subcommand")

    def add(name, help_text, *flags):
        p = sub.add_parser(name, help=help_text)
        for flag in flags:
            if flag == "--transfer":
                p.add_argument(flag, action="store_true", default=None)
            elif flag in ("--seed", "--epochs", "--batch-size", "--iters", "--max-concurrent"):
                p.add_argument(flag, type=int, default=None)
            elif flag in ("--lr", "--momentum"):
                p.add_argument(flag, type=float, default=None)
            elif flag == "--mode":
                p.add_argument(flag, choices=["reference", "fast"], default=None)
            elif flag == "--split":
                p.add_argument(flag, choices=["train", "val", "test"], default=None)
            else:
                p.add_argument(flag, default=None)
        p.add_argument("--config", default=None, help="JSON config file")
        return p

    add("manifest", "build a dataset manifest from covid/ and healthy/ dirs",
        "--data-root", "--out")
    add("split", "assign stratified train/val/test splits to a manifest",
        "--manifest", "--seed", "--out")
    add("augment", "write 10 augmented variants of every PGM in a directory",
        "--data-root", "--seed", "--out")
    add("train", "train a network and save the final weights",
        "--arch", "--manifest", "--data-root", "--weights", "--seed", "--epochs",
        "--lr", "--momentum", "--batch-size", "--transfer", "--mode", "--out")
    add("evaluate", "confusion-matrix metrics over one split",
        "--arch", "--weights", "--manifest", "--data-root", "--split", "--mode")
    add("classify", "classify one PGM image",
        "--arch", "--weights", "--image", "--mode")
    add("bench", "per-layer latency/MAC benchmark of the forward pass",
        "--arch", "--weights", "--seed", "--iters", "--mode")
    add("weights-info", "inspect a LUSW weight file",
        "--weights")
    add("serve", "run the NDJSON TCP inference service",
        "--arch", "--weights", "--bind", "--mode", "--max-concurrent")
    return parser


class _Options:
    """flags > config file > defaults."""

    def __init__(self, args: argparse.Namespace):
        self.args = vars(args)
        self.config = {}
        config_path = self.args.get("config")
        if config_path:
            try:
                self.config = json.loads(Path(config_path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise LusnetError(f"cannot read config {config_path}: {exc}") from None
            if not isinstance(self.config, dict):
                raise LusnetError(f"config {config_path} must hold a JSON object")

    def get(self, key: str, default=None):
        flag_value = self.args.get(key)
        if flag_value is not None:
            return flag_value
        if key in self.config:
            return self.config[key]
        return default

    def require(self, key: str):
        value = self.get(key)
        if value is None:
            raise _UsageError(f"missing required option --{key.replace('_', '-')}")
        return value


def _log(message: str) -> None:
    print(message, file=sys.stderr)


def _emit(obj) -> None:
    print(json.dumps(obj))


def _load_net(opts: _Options):
    spec = parse_arch(str(opts.require("arch")))
    store = weights_io.load(opts.require("weights"))
    return spec, store


def _mode(opts: _Options) -> Mode:
    return Mode.parse(str(opts.get("mode", "fast")))


def _two_stage(opts: _Options) -> bool:
    return bool(opts.get("two_stage_resize", True))


def _write_manifest(manifest, out_path: str | None) -> None:
    if out_path:
        dataset_mod.save_manifest(manifest, out_path)
    else:
        for rec in sorted(manifest.records, key=lambda r: r.path):
            _emit({"path": rec.path, "label": rec.label, "split": rec.split})


def _cmd_manifest(opts: _Options) -> int:
    manifest = dataset_mod.build_manifest(opts.require("data_root"))
    if manifest.balance_warning:
        _log(f"warning: {manifest.balance_warning}")
    _write_manifest(manifest, opts.get("out"))
    return 0


def _cmd_split(opts: _Options) -> int:
    manifest = dataset_mod.load_manifest(opts.require("manifest"))
    result = dataset_mod.split_manifest(
        manifest,
        train_frac=float(opts.get("train_frac", 0.7)),
        val_frac=float(opts.get("val_frac", 0.15)),
        test_frac=float(opts.get("test_frac", 0.15)),
        seed=int(opts.get("seed", 0)),
    )
    _write_manifest(result, opts.get("out"))
    return 0


def _cmd_augment(opts: _Options) -> int:
    root = Path(opts.require("data_root"))
    out_dir = Path(opts.require("out"))
    seed = int(opts.get("seed", 0))
    files = sorted(p for p in root.rglob("*.pgm") if p.is_file())
    if not files:
        raise LusnetError(f"no PGM files under {root}")
    written = 0
    for image_index, path in enumerate(files):
        img = imaging.normalize(imaging.read_pgm(path))
        variants = imaging.expand_10x(img, seed, image_index)
        rel = path.relative_to(root)
        target_dir = out_dir / rel.parent
        target_dir.mkdir(parents=True, exist_ok=True)
        for v, variant in enumerate(variants):
            out_path = target_dir / f"{rel.stem}_v{v}.pgm"
            imaging.write_pgm(out_path, imaging.quantize(variant))
            written += 1
    _emit({"inputs": len(files), "outputs": written})
    return 0


def _cmd_train(opts: _Options) -> int:
    spec = parse_arch(str(opts.require("arch")))
    manifest = dataset_mod.load_manifest(opts.require("manifest"))
    seed = int(opts.get("seed", 0))
    weights_path = opts.get("weights")
    store = weights_io.load(weights_path) if weights_path else init_params(spec, seed)
    config = training.TrainConfig(
        epochs=int(opts.get("epochs", 10)),
        learning_rate=float(opts.get("lr", 0.01)),
        momentum=float(opts.get("momentum", 0.9)),
        batch_size=int(opts.get("batch_size", 8)),
        transfer_mode=bool(opts.get("transfer", False)),
        seed=seed,
    )
    loader = imaging.default_record_loader(spec, opts.get("data_root"), _two_stage(opts))
    training.train(
        spec, store, manifest, config, loader=loader, mode=_mode(opts), on_epoch=_emit
    )
    out_path = opts.require("out")
    n_bytes = weights_io.save(store, out_path)
    _log(f"saved {len(store)} tensors ({n_bytes} bytes) to {out_path}")
    return 0


def _cmd_evaluate(opts: _Options) -> int:
    spec, store = _load_net(opts)
    manifest = dataset_mod.load_manifest(opts.require("manifest"))
    loader = imaging.default_record_loader(spec, opts.get("data_root"), _two_stage(opts))
    metrics = training.evaluate(
        spec, store, manifest, str(opts.get("split", "test")), loader=loader, mode=_mode(opts)
    )
    _emit(
        {
            "accuracy": metrics.accuracy,
            "sensitivity": metrics.sensitivity,
            "specificity": metrics.specificity,
            "confusion": [list(row) for row in metrics.confusion],
        }
    )
    return 0


def _cmd_classify(opts: _Options) -> int:
    spec, store = _load_net(opts)
    image = imaging.preprocess_for_net(
        imaging.read_pgm(opts.require("image")),
        (spec.input_dims[0], spec.input_dims[1]),
        _two_stage(opts),
    )
    prediction = forward(spec, store, image, _mode(opts))
    _emit(
        {
            "label": prediction.label,
            "probabilities": prediction.probabilities,
            "latency_ms": prediction.latency_s * 1e3,
        }
    )
    return 0


def _cmd_bench(opts: _Options) -> int:
    spec = parse_arch(str(opts.require("arch")))
    weights_path = opts.get("weights")
    store = (
        weights_io.load(weights_path)
        if weights_path
        else init_params(spec, int(opts.get("seed", 0)))
    )
    image = np.zeros(spec.input_dims, dtype=np.float32)
    report = bench_mod.bench_forward(
        spec, store, image, iterations=int(opts.get("iters", 1)), mode=_mode(opts)
    )
    _emit(bench_mod.report_as_dict(report))
    return 0


def _cmd_weights_info(opts: _Options) -> int:
    store = weights_io.load(opts.require("weights"))
    tensors = [
        {
            "name": name,
            "dims": list(value.shape),
            "params": int(value.size),
            "crc32": zlib.crc32(value.tobytes()),
        }
        for name, value in store.items()
    ]
    _emit(
        {
            "tensors": tensors,
            "total_params": int(sum(t["params"] for t in tensors)),
        }
    )
    return 0


def _cmd_serve(opts: _Options) -> int:
    spec, store = _load_net(opts)
    bind_text = str(opts.get("bind", "127.0.0.1:9735"))
    host, _, port_text = bind_text.rpartition(":")
    if not host or not port_text.isdigit():
        raise _UsageError(f"--bind must look like host:port, got {bind_text!r}")
    signal.signal(signal.SIGTERM, lambda *_: sys.exit(0))
    server = service.InferenceServer(
        spec,
        store,
        (host, int(port_text)),
        max_concurrent=int(opts.get("max_concurrent", 16)),
        mode=_mode(opts),
        two_stage=_two_stage(opts),
    )
    _log(f"serving on {server.address[0]}:{server.address[1]}")
    try:
        server.run_blocking()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
    return 0


_COMMANDS = {
    "manifest": _cmd_manifest,
    "split": _cmd_split,
    "augment": _cmd_augment,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "classify": _cmd_classify,
    "bench": _cmd_bench,
    "weights-info": _cmd_weights_info,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise _UsageError("a subcommand is required")
        return _COMMANDS[args.command](_Options(args))
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)
    except LusnetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - internal failure path
        print(f"internal error: {exc!r}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
