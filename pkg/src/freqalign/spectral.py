"""Exact 2-D discrete Fourier transforms and amplitude/phase spectra.

The forward transform is unnormalized, X[u,v] = sum_{m,n} x[m,n] *
exp(-2*pi*i*(u*m/H + v*n/W)); the inverse carries the 1/(H*W) factor.
Power-of-two extents go through a vectorized radix-2 Cooley-Tukey path,
everything else through direct O(N^2) evaluation. The two paths agree to
1e-8 and both are exercised by the tests.

These transforms are a preprocessing stage: they consume and produce
plain numpy arrays and carry no gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ShapeError, UsageError

NATURAL = "natural"
CENTERED = "centered"

IMAG_RESIDUE_TOL = 1e-6


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_radix2(a: np.ndarray) -> np.ndarray:
    """Radix-2 DIT FFT along the last axis; extent must be a power of two."""
    n = a.shape[-1]
    if n == 1:
        return a.astype(np.complex128, copy=True)
    lead = a.shape[:-1]
    y = a.reshape(-1, n)[:, _bit_reversal(n)].astype(np.complex128)
    m = y.shape[0]
    span = 2
    while span <= n:
        half = span // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / span)
        y = y.reshape(m, n // span, span)
        even = y[:, :, :half]
        odd = y[:, :, half:] * twiddle
        y = np.concatenate([even + odd, even - odd], axis=2).reshape(m, n)
        span *= 2
    return y.reshape(*lead, n)


def _dft_direct(a: np.ndarray) -> np.ndarray:
    """Direct O(N^2) DFT along the last axis (the slow reference path)."""
    n = a.shape[-1]
    grid = np.arange(n)
    basis = np.exp(-2j * np.pi * np.outer(grid, grid) / n)
    return a @ basis


def _fft1d(a: np.ndarray, force_direct: bool) -> np.ndarray:
    if not force_direct and _is_pow2(a.shape[-1]):
        return _fft_radix2(a)
    return _dft_direct(a.astype(np.complex128))


def fft2d(x, force_direct: bool = False) -> np.ndarray:
    """Unnormalized forward DFT over the last two axes.

    Accepts real or complex input with any leading dimensions (C, B*C, ...).
    """
    x = np.asarray(getattr(x, "data", x))
    if x.ndim < 2 or x.shape[-1] < 1 or x.shape[-2] < 1:
        raise ShapeError(f"fft2d needs at least a HxW array, got shape {x.shape}")
    out = _fft1d(np.asarray(x, dtype=np.complex128), force_direct)
    out = _fft1d(out.swapaxes(-1, -2), force_direct).swapaxes(-1, -2)
    return out


def dft2d(x) -> np.ndarray:
    """Direct-summation 2-D DFT, the oracle twin of the radix-2 path."""
    return fft2d(x, force_direct=True)


def ifft2d(spectrum: np.ndarray, force_direct: bool = False) -> np.ndarray:
    """Inverse DFT with 1/(H*W) normalization over the last two axes."""
    spectrum = np.asarray(spectrum, dtype=np.complex128)
    h, w = spectrum.shape[-2], spectrum.shape[-1]
    return np.conj(fft2d(np.conj(spectrum), force_direct)) / (h * w)


@dataclass
class Spectrum:
    """Amplitude/phase decomposition of a per-channel 2-D spectrum.

    ``layout`` records whether the zero-frequency bin sits at index (0,0)
    (natural) or at the array center (centered, after ``center_shift``).
    """

    amplitude: np.ndarray
    phase: np.ndarray
    layout: str = NATURAL

    @property
    def shape(self) -> tuple:
        return self.amplitude.shape

    def to_complex(self) -> np.ndarray:
        return self.amplitude * np.exp(1j * self.phase)


def decompose(image) -> Spectrum:
    """Per-channel DFT split into non-negative amplitude and phase in [-pi, pi]."""
    spec = fft2d(image)
    return Spectrum(amplitude=np.abs(spec),
                    phase=np.arctan2(spec.imag, spec.real),
                    layout=NATURAL)


def recompose(spec: Spectrum) -> np.ndarray:
    """Inverse transform of amplitude * exp(i*phase) back to a real image.

    Centered spectra are unshifted automatically. The imaginary residue of
    the inverse transform must stay below 1e-6, otherwise the spectrum does
    not describe a real image and a NumericalError is raised.
    """
    if spec.layout == CENTERED:
        spec = center_unshift(spec)
    image = ifft2d(spec.to_complex())
    residue = float(np.max(np.abs(image.imag))) if image.size else 0.0
    if residue > IMAG_RESIDUE_TOL:
        raise NumericalError(
            f"recompose: imaginary residue {residue:.3e} exceeds "
            f"{IMAG_RESIDUE_TOL:.0e}; spectrum is not conjugate-symmetric"
        )
    return image.real


def _shift_amounts(spec: Spectrum) -> tuple:
    h, w = spec.shape[-2], spec.shape[-1]
    return h // 2, w // 2


def center_shift(spec: Spectrum) -> Spectrum:
    """Move the DC bin to (floor(H/2), floor(W/2)) by cyclic shift."""
    if spec.layout != NATURAL:
        raise UsageError("center_shift: spectrum is already centered")
    dh, dw = _shift_amounts(spec)
    return Spectrum(
        amplitude=np.roll(spec.amplitude, (dh, dw), axis=(-2, -1)),
        phase=np.roll(spec.phase, (dh, dw), axis=(-2, -1)),
        layout=CENTERED,
    )


def center_unshift(spec: Spectrum) -> Spectrum:
    """Exact inverse of center_shift, including odd extents."""
    if spec.layout != CENTERED:
        raise UsageError("center_unshift: spectrum is not centered")
    dh, dw = _shift_amounts(spec)
    return Spectrum(
        amplitude=np.roll(spec.amplitude, (-dh, -dw), axis=(-2, -1)),
        phase=np.roll(spec.phase, (-dh, -dw), axis=(-2, -1)),
        layout=NATURAL,
    )


def hermitian_symmetrize(amplitude: np.ndarray, layout: str = NATURAL) -> np.ndarray:
    """Average an amplitude array with its frequency-negated mirror.

    Amplitudes of real images satisfy A[u,v] == A[-u,-v]; this projects an
    arbitrary non-negative array onto that set so recomposition with a real
    image's phase stays real.
    """
    if layout == CENTERED:
        h, w = amplitude.shape[-2], amplitude.shape[-1]
        dh, dw = h // 2, w // 2
        nat = np.roll(amplitude, (-dh, -dw), axis=(-2, -1))
        sym = hermitian_symmetrize(nat, NATURAL)
        return np.roll(sym, (dh, dw), axis=(-2, -1))
    mirrored = np.roll(np.flip(amplitude, axis=(-2, -1)), (1, 1), axis=(-2, -1))
    return 0.5 * (amplitude + mirrored)
