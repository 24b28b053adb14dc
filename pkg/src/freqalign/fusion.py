"""Source-target frequency fusion: convex mixing of low-frequency amplitudes.

The fused sample keeps the source phase everywhere and the source
high-frequency amplitude outside a centered low-frequency square; inside
the square the amplitudes of the two domains are blended with a mixing
coefficient drawn per sample (or fixed). Reconstructing the image from the
fused spectrum transfers the other domain's brightness/illumination style
while leaving structure untouched.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, ShapeError, UsageError
from .spectral import (
    CENTERED,
    Spectrum,
    center_shift,
    center_unshift,
    decompose,
    recompose,
)

FIXED = "fixed"
UNIFORM_RANDOM = "uniform_random"


@dataclass
class FusionConfig:
    """Knobs for the low-frequency amplitude blend.

    beta picks the low-frequency square: side 2*floor(beta*min(H,W)) + 1
    bins in the centered spectrum (odd, so the DC bin is always included).
    alpha_mode is "fixed" (use ``alpha``) or "uniform_random" (draw
    alpha ~ U(0,1) per sample from ``seed``). With ``hf_from_target`` the
    retained high-frequency amplitude comes from the target instead of the
    source. ``clamp`` clips the reconstructed image to [0, 1].
    """

    beta: float = 0.1
    alpha_mode: str = UNIFORM_RANDOM
    alpha: float = 1.0
    seed: int = 0
    hf_from_target: bool = False
    clamp: bool = True

    def __post_init__(self):
        if not 0.0 < self.beta <= 0.5:
            raise ConfigError(f"beta must lie in (0, 0.5], got {self.beta}")
        if self.alpha_mode not in (FIXED, UNIFORM_RANDOM):
            raise ConfigError(f"unknown alpha_mode {self.alpha_mode!r}")
        if self.alpha_mode == FIXED and not 0.0 <= self.alpha <= 1.0:
            raise ConfigError(f"fixed alpha must lie in [0, 1], got {self.alpha}")


@dataclass
class FusedPair:
    """Result of one fusion: image, realized alpha, mask, fused spectrum."""

    fused_image: np.ndarray
    alpha_used: float
    lf_mask: np.ndarray
    fused_spectrum: Spectrum = field(repr=False, default=None)


def lf_mask(h: int, w: int, beta: float) -> np.ndarray:
    """Boolean H x W mask of the centered low-frequency square.

    True exactly on the square of odd side 2*floor(beta*min(H,W)) + 1
    around the centered DC bin (floor(H/2), floor(W/2)).
    """
    if not 0.0 < beta <= 0.5:
        raise ConfigError(f"beta must lie in (0, 0.5], got {beta}")
    half = int(np.floor(beta * min(h, w)))
    ch, cw = h // 2, w // 2
    rows = np.abs(np.arange(h) - ch) <= half
    cols = np.abs(np.arange(w) - cw) <= half
    return rows[:, None] & cols[None, :]


def fuse_amplitude(amp_s: np.ndarray, amp_t: np.ndarray, alpha: float,
                   mask: np.ndarray, hf_from_target: bool = False) -> np.ndarray:
    """Blend amplitudes inside the mask, keep one domain's outside.

    Inside: alpha * amp_s + (1 - alpha) * amp_t. Outside: amp_s unchanged
    (or amp_t with ``hf_from_target``). Both inputs must already be in
    centered layout; ``fuse_spectra`` enforces that.
    """
    if amp_s.shape != amp_t.shape:
        raise ShapeError(
            f"fuse_amplitude: amplitude shapes differ, {amp_s.shape} vs {amp_t.shape}"
        )
    blended = alpha * amp_s + (1.0 - alpha) * amp_t
    outside = amp_t if hf_from_target else amp_s
    return np.where(mask, blended, outside)


def fuse_spectra(spec_s: Spectrum, spec_t: Spectrum, alpha: float,
                 mask: np.ndarray, hf_from_target: bool = False) -> Spectrum:
    """Fused centered spectrum: blended amplitude with the source phase."""
    for name, spec in (("source", spec_s), ("target", spec_t)):
        if spec.layout != CENTERED:
            raise UsageError(
                f"fuse_spectra: {name} spectrum has layout {spec.layout!r}, "
                f"expected {CENTERED!r}"
            )
    if spec_s.shape != spec_t.shape:
        raise ShapeError(
            f"fuse_spectra: spectra shapes differ, {spec_s.shape} vs {spec_t.shape}"
        )
    fused = fuse_amplitude(spec_s.amplitude, spec_t.amplitude, alpha, mask,
                           hf_from_target)
    return Spectrum(amplitude=fused, phase=spec_s.phase.copy(), layout=CENTERED)


def draw_alpha(cfg: FusionConfig, rng: Optional[np.random.Generator]) -> float:
    if cfg.alpha_mode == FIXED:
        return float(cfg.alpha)
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    return float(rng.uniform(0.0, 1.0))


def stff(x_s, x_t, cfg: FusionConfig,
         rng: Optional[np.random.Generator] = None) -> FusedPair:
    """Fuse one source/target image pair in the frequency domain.

    Both images must be C x H x W with equal shapes (resample beforehand).
    Pass ``rng`` to draw the mixing coefficient from a persistent stream;
    otherwise a fresh stream seeded from the config is used.
    """
    x_s = np.asarray(getattr(x_s, "data", x_s), dtype=np.float64)
    x_t = np.asarray(getattr(x_t, "data", x_t), dtype=np.float64)
    if x_s.shape != x_t.shape:
        raise UsageError(
            f"stff: image shapes differ, {x_s.shape} vs {x_t.shape}; "
            "resample the target first"
        )
    if x_s.ndim != 3:
        raise ShapeError(f"stff expects C x H x W images, got shape {x_s.shape}")
    h, w = x_s.shape[-2:]
    alpha = draw_alpha(cfg, rng)
    mask = lf_mask(h, w, cfg.beta)
    spec_s = center_shift(decompose(x_s))
    spec_t = center_shift(decompose(x_t))
    fused_spec = fuse_spectra(spec_s, spec_t, alpha, mask, cfg.hf_from_target)
    image = recompose(center_unshift(fused_spec))
    if cfg.clamp:
        image = np.clip(image, 0.0, 1.0)
    return FusedPair(fused_image=image, alpha_used=alpha, lf_mask=mask,
                     fused_spectrum=fused_spec)
