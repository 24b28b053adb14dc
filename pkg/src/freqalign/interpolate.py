"""Array-level resampling helpers shared by the network and data modules."""

from __future__ import annotations

import functools

import numpy as np


@functools.lru_cache(maxsize=256)
def interp_matrix(src: int, dst: int) -> np.ndarray:
    """(dst, src) bilinear weight matrix, align-corners=false, edge-clamped.

    Row i holds the weights of source samples for output coordinate
    (i + 0.5) * src / dst - 0.5.
    """
    mat = np.zeros((dst, src))
    coords = (np.arange(dst) + 0.5) * (src / dst) - 0.5
    base = np.floor(coords)
    frac = coords - base
    lo = np.clip(base, 0, src - 1).astype(int)
    hi = np.clip(base + 1, 0, src - 1).astype(int)
    rows = np.arange(dst)
    np.add.at(mat, (rows, lo), 1.0 - frac)
    np.add.at(mat, (rows, hi), frac)
    mat.setflags(write=False)
    return mat


def resize_bilinear(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resize over the last two axes of a plain array."""
    h, w = arr.shape[-2], arr.shape[-1]
    out = arr
    if h != height:
        out = np.matmul(interp_matrix(h, height), out)
    if w != width:
        out = np.matmul(out, interp_matrix(w, width).T)
    return np.ascontiguousarray(out)


def resize_nearest(arr: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbor resize over the last two axes (keeps binary values)."""
    h, w = arr.shape[-2], arr.shape[-1]
    rows = np.clip(np.floor((np.arange(height) + 0.5) * h / height), 0, h - 1)
    cols = np.clip(np.floor((np.arange(width) + 0.5) * w / width), 0, w - 1)
    return arr[..., rows.astype(int)[:, None], cols.astype(int)[None, :]]
