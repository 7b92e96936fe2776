import numpy as np
import pytest

from lusnet.arch import parse_arch
from lusnet.imaging import ImageBuffer, encode_pgm
from lusnet.network import init_params

SMALL_ARCH = "1xC(8x8x4) - MP(4x4x4) - F(64) - FC(2)"


@pytest.fixture
def small_spec():
    return parse_arch(SMALL_ARCH)


@pytest.fixture
def small_store(small_spec):
    return init_params(small_spec, seed=7)


def route_error(a: np.ndarray, b: np.ndarray) -> float:
    """Max elementwise difference relative to the output magnitude."""
    scale = max(float(np.abs(a).max(initial=0.0)), float(np.abs(b).max(initial=0.0)), 1e-8)
    return float(np.abs(a - b).max()) / scale


def make_pgm_bytes(pixels) -> bytes:
    return encode_pgm(ImageBuffer.u8(np.asarray(pixels, dtype=np.uint8)))


def write_pgm_file(path, pixels) -> None:
    path.write_bytes(make_pgm_bytes(pixels))


def synthetic_dataset(root, n_per_class=10, size=8, seed=0):
    """Separable toy set: covid images dark, healthy images bright."""
    rng = np.random.default_rng(seed)
    for label, base in (("covid", 40), ("healthy", 210)):
        class_dir = root / label
        class_dir.mkdir(parents=True, exist_ok=True)
        for i in range(n_per_class):
            noise = rng.integers(-30, 31, size=(size, size))
            pixels = np.clip(base + noise, 0, 255).astype(np.uint8)
            write_pgm_file(class_dir / f"{label}_{i:03d}.pgm", pixels)
    return root
