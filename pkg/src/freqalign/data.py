"""Sample ingestion and the synthetic two-domain segmentation task.

The synthetic task draws binary shapes (ellipses and vessel-like curves),
renders them with a source intensity profile, and renders an independent
set of the same shape family under a target style transform: global
gain/bias, a smooth illumination field, and noise. The transform shifts
low-frequency amplitude content while the shape family (phase structure)
stays shared, which is exactly the regime the frequency fusion targets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import ConfigError, DataError
from .interpolate import resize_bilinear, resize_nearest

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm")

SOURCE = "source"
TARGET = "target"


@dataclass
class SampleRecord:
    """One image with optional mask, tagged by domain."""

    image: np.ndarray                    # C,H,W in [0,1]
    mask: Optional[np.ndarray]           # 1,H,W binary, None for unlabeled
    domain: str
    id: str


@dataclass
class SynthConfig:
    """Controls for the synthetic domain-shift generator."""

    size: int = 64
    n_source: int = 80
    n_target: int = 40
    n_val: int = 24
    shape_family: str = "mixed"          # ellipse | vessel | mixed
    fg_mean: float = 0.75
    bg_mean: float = 0.25
    source_noise: float = 0.03
    target_gain: float = 0.30
    target_bias: float = 0.10
    target_illum: float = 0.12
    target_noise: float = 0.03
    seed: int = 0

    def __post_init__(self):
        if self.size % 16:
            raise ConfigError(f"size must be divisible by 16, got {self.size}")
        if min(self.n_source, self.n_target, self.n_val) < 1:
            raise ConfigError("sample counts must be >= 1")
        if self.shape_family not in ("ellipse", "vessel", "mixed"):
            raise ConfigError(f"unknown shape_family {self.shape_family!r}")


# -- shape rasterization ---------------------------------------------------------


def _ellipse_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    cy, cx = rng.uniform(0.3, 0.7, size=2) * size
    a = rng.uniform(0.12, 0.28) * size
    b = rng.uniform(0.12, 0.28) * size
    theta = rng.uniform(0.0, math.pi)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    dy, dx = yy - cy, xx - cx
    u = dx * math.cos(theta) + dy * math.sin(theta)
    v = -dx * math.sin(theta) + dy * math.cos(theta)
    return ((u / a) ** 2 + (v / b) ** 2 <= 1.0).astype(np.float64)


def _vessel_mask(rng: np.random.Generator, size: int) -> np.ndarray:
    # quadratic Bezier across the image with random control point
    side = rng.integers(0, 2)
    if side == 0:
        p0 = np.array([rng.uniform(0.1, 0.9) * size, 0.0])
        p2 = np.array([rng.uniform(0.1, 0.9) * size, size - 1.0])
    else:
        p0 = np.array([0.0, rng.uniform(0.1, 0.9) * size])
        p2 = np.array([size - 1.0, rng.uniform(0.1, 0.9) * size])
    p1 = rng.uniform(0.2, 0.8, size=2) * size
    t = np.linspace(0.0, 1.0, 4 * size)[:, None]
    curve = (1 - t) ** 2 * p0 + 2 * (1 - t) * t * p1 + t ** 2 * p2
    radius = rng.uniform(0.03, 0.06) * size
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    d2 = (yy[..., None] - curve[:, 0]) ** 2 + (xx[..., None] - curve[:, 1]) ** 2
    return (d2.min(axis=-1) <= radius ** 2).astype(np.float64)


def _draw_mask(rng: np.random.Generator, size: int, family: str) -> np.ndarray:
    if family == "mixed":
        family = "ellipse" if rng.uniform() < 0.5 else "vessel"
    if family == "ellipse":
        return _ellipse_mask(rng, size)
    return _vessel_mask(rng, size)


def _illumination(rng: np.random.Generator, size: int, amplitude: float) -> np.ndarray:
    """Smooth low-frequency field: random linear ramp plus one cosine wave."""
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    theta = rng.uniform(0.0, 2 * math.pi)
    ramp = (math.cos(theta) * (xx - size / 2) + math.sin(theta) * (yy - size / 2))
    ramp = ramp / size
    freq = rng.uniform(0.5, 1.5)
    phi = rng.uniform(0.0, 2 * math.pi)
    theta2 = rng.uniform(0.0, 2 * math.pi)
    wave = np.cos(2 * math.pi * freq *
                  (math.cos(theta2) * xx + math.sin(theta2) * yy) / size + phi)
    split = rng.uniform(0.3, 0.7)
    return amplitude * (split * ramp * 2.0 + (1 - split) * wave)


def _render_source(rng, mask, cfg: SynthConfig) -> np.ndarray:
    img = cfg.bg_mean + (cfg.fg_mean - cfg.bg_mean) * mask
    if cfg.source_noise > 0:
        img = img + cfg.source_noise * rng.normal(size=mask.shape)
    return np.clip(img, 0.0, 1.0)[None]


def _render_target(rng, mask, cfg: SynthConfig) -> np.ndarray:
    base = cfg.bg_mean + (cfg.fg_mean - cfg.bg_mean) * mask
    img = cfg.target_gain * base + cfg.target_bias
    img = img + _illumination(rng, cfg.size, cfg.target_illum)
    if cfg.target_noise > 0:
        img = img + cfg.target_noise * rng.normal(size=mask.shape)
    return np.clip(img, 0.0, 1.0)[None]


def synth_dataset(cfg: SynthConfig) -> tuple:
    """(labeled source, unlabeled target, labeled target-validation) splits.

    Generation is deterministic per seed; ids are disjoint across splits.
    """
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 97)))
    source = []
    for i in range(cfg.n_source):
        mask = _draw_mask(rng, cfg.size, cfg.shape_family)
        source.append(SampleRecord(image=_render_source(rng, mask, cfg),
                                   mask=mask[None], domain=SOURCE,
                                   id=f"src-{i:04d}"))
    target = []
    for i in range(cfg.n_target):
        mask = _draw_mask(rng, cfg.size, cfg.shape_family)
        target.append(SampleRecord(image=_render_target(rng, mask, cfg),
                                   mask=None, domain=TARGET, id=f"tgt-{i:04d}"))
    target_val = []
    for i in range(cfg.n_val):
        mask = _draw_mask(rng, cfg.size, cfg.shape_family)
        target_val.append(SampleRecord(image=_render_target(rng, mask, cfg),
                                       mask=mask[None], domain=TARGET,
                                       id=f"val-{i:04d}"))
    return source, target, target_val


# -- disk I/O ---------------------------------------------------------------------


def _read_image(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            if img.mode in ("I", "I;16"):
                arr = np.asarray(img, dtype=np.float64) / 65535.0
            else:
                if img.mode not in ("L", "RGB"):
                    img = img.convert("RGB" if "A" in img.mode or
                                      img.mode == "P" else "L")
                arr = np.asarray(img, dtype=np.float64) / 255.0
    except (UnidentifiedImageError, OSError) as exc:
        raise DataError(f"cannot decode image {path}: {exc}") from exc
    if arr.ndim == 2:
        return arr[None]
    return np.ascontiguousarray(arr.transpose(2, 0, 1))


def write_image(path, array: np.ndarray):
    """Write a C,H,W (or H,W) array in [0,1] as an 8-bit PNG/PGM/PPM."""
    arr = np.asarray(array)
    if arr.ndim == 3:
        arr = arr[0] if arr.shape[0] == 1 else arr.transpose(1, 2, 0)
    data = np.round(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(data).save(path)


def _find_mask(mask_dir: Path, stem: str) -> Optional[Path]:
    for suffix in IMAGE_SUFFIXES:
        candidate = mask_dir / f"{stem}{suffix}"
        if candidate.exists():
            return candidate
    return None


def load_dir(root, with_masks: bool) -> list:
    """Read `<root>/images/*` (and `<root>/masks/<stem>.*` when labeled).

    Images scale to [0,1]; masks binarize at 0.5. Records come back in
    lexicographic stem order.
    """
    root = Path(root)
    image_dir = root / "images"
    if not image_dir.is_dir():
        raise DataError(f"no images/ directory under {root}")
    mask_dir = root / "masks"
    records = []
    paths = sorted((p for p in image_dir.iterdir()
                    if p.suffix.lower() in IMAGE_SUFFIXES),
                   key=lambda p: p.stem)
    for path in paths:
        image = _read_image(path)
        mask = None
        if with_masks:
            mask_path = _find_mask(mask_dir, path.stem)
            if mask_path is None:
                raise DataError(f"missing mask for sample {path.stem!r} "
                                f"under {mask_dir}")
            mask = (_read_image(mask_path)[:1] >= 0.5).astype(np.float64)
        records.append(SampleRecord(image=image, mask=mask,
                                    domain=SOURCE if with_masks else TARGET,
                                    id=path.stem))
    return records


def save_split(root, records: list):
    """Write a split back to the `<root>/images` + `<root>/masks` layout."""
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    has_masks = any(r.mask is not None for r in records)
    if has_masks:
        (root / "masks").mkdir(exist_ok=True)
    for rec in records:
        write_image(root / "images" / f"{rec.id}.png", rec.image)
        if rec.mask is not None:
            write_image(root / "masks" / f"{rec.id}.png", rec.mask)


# -- resampling ---------------------------------------------------------------------


def resample_to(record: SampleRecord, size: tuple) -> SampleRecord:
    """Bilinear for the image, nearest-neighbor for the mask (stays binary)."""
    height, width = size
    if height % 16 or width % 16:
        raise ConfigError(f"target size {height}x{width} must be divisible by 16")
    if record.image.shape[-2:] == (height, width):
        return record
    image = np.clip(resize_bilinear(record.image, height, width), 0.0, 1.0)
    mask = None
    if record.mask is not None:
        mask = resize_nearest(record.mask, height, width)
    return SampleRecord(image=image, mask=mask, domain=record.domain,
                        id=record.id)
