"""Pattern realization and NIR background compositing.

The attack function: paint each body segment of a rendered segment map pure
white (255) or pure black (0) according to the pattern bit, and fill the rest
of the frame from a real NIR background. No blending is applied; saturated
extremes are the physical premise (retro-reflective tape saturates, insulating
tape absorbs). An optional capture-noise hook exists for robustness studies
and defaults off.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .pattern import BinaryPattern
from .render import BACKGROUND, SegMap

__all__ = [
    "NirImage",
    "synthesize_attack",
    "synthesize_uniform",
    "sample_background",
    "load_background_pool",
    "save_nir_image",
    "load_nir_image",
    "apply_capture_noise",
]


@dataclass(frozen=True)
class NirImage:
    """Single-channel 8-bit near-infrared frame."""

    pixels: np.ndarray  # (H, W) uint8
    provenance: str     # "background" | "composited"

    def __post_init__(self):
        if self.provenance not in ("background", "composited"):
            raise ValueError(f"bad provenance {self.provenance!r}")
        self.pixels.setflags(write=False)

    @property
    def image_size(self) -> tuple[int, int]:
        return self.pixels.shape


def synthesize_attack(segmap: SegMap, pattern: BinaryPattern,
                      background: NirImage) -> NirImage:
    """Composite one pattern onto one segment map over one background.

    Pixels of segment s become 255 when bits[s] is 1 and 0 when it is 0;
    background pixels pass through untouched.
    """
    labels = segmap.labels
    if labels.shape != background.pixels.shape:
        raise ValueError(
            f"segmap {labels.shape} and background {background.pixels.shape} differ")
    k = len(pattern)
    fg = labels != BACKGROUND
    if fg.any() and int(labels[fg].max()) >= k:
        raise ValueError(f"segment label {int(labels[fg].max())} >= pattern length {k}")
    lut = np.where(pattern.bits == 1, 255, 0).astype(np.uint8)
    out = background.pixels.copy()
    out[fg] = lut[labels[fg]]
    return NirImage(out, "composited")


def synthesize_uniform(segmap: SegMap, intensity: int,
                       background: NirImage) -> NirImage:
    """Paint the whole silhouette one intensity (the unattacked-person stand-in)."""
    if not 0 <= intensity <= 255:
        raise ValueError(f"intensity {intensity} outside [0,255]")
    if segmap.labels.shape != background.pixels.shape:
        raise ValueError("segmap and background dimensions differ")
    out = background.pixels.copy()
    out[segmap.labels != BACKGROUND] = intensity
    return NirImage(out, "composited")


def sample_background(rng_seed: int, pool: list[NirImage],
                      size: tuple[int, int]) -> NirImage:
    """Pick one pool member (deterministic per seed) resized to ``size``.

    Nearest-neighbor resize keeps the original 8-bit value set.
    """
    if not pool:
        raise ValueError("background pool is empty")
    rng = np.random.default_rng(rng_seed)
    img = pool[int(rng.integers(0, len(pool)))]
    h, w = size
    if img.pixels.shape == (h, w):
        return img
    resized = Image.fromarray(img.pixels, mode="L").resize((w, h), Image.NEAREST)
    return NirImage(np.asarray(resized, dtype=np.uint8), "background")


def load_background_pool(directory: str | Path) -> list[NirImage]:
    """Load every PNG in a directory, sorted by name for determinism."""
    paths = sorted(Path(directory).glob("*.png"))
    if not paths:
        raise ValueError(f"no PNG backgrounds in {directory}")
    return [load_nir_image(p, provenance="background") for p in paths]


def save_nir_image(image: NirImage, path: str | Path) -> None:
    Image.fromarray(image.pixels, mode="L").save(path)


def load_nir_image(path: str | Path, provenance: str = "background") -> NirImage:
    arr = np.asarray(Image.open(path).convert("L"), dtype=np.uint8)
    return NirImage(arr, provenance)


def apply_capture_noise(image: NirImage, rng_seed: int,
                        blur_sigma: float = 0.0, jitter: int = 0) -> NirImage:
    """Optional augmentation: Gaussian blur and per-frame intensity jitter.

    Defaults are no-ops so the compositing path stays bit-exact unless a
    caller opts in.
    """
    out = image.pixels.astype(np.float64)
    if blur_sigma > 0:
        from scipy.ndimage import gaussian_filter
        out = gaussian_filter(out, sigma=blur_sigma)
    if jitter > 0:
        rng = np.random.default_rng(rng_seed)
        out = out + rng.integers(-jitter, jitter + 1)
    return NirImage(np.clip(np.rint(out), 0, 255).astype(np.uint8), image.provenance)
