"""freqalign: frequency-domain adaptation for binary segmentation.

Library surface: a small autodiff tensor core, exact 2-D spectral
transforms, low-frequency amplitude fusion, adversarial amplitude
alignment, and a spatial-frequency segmentation network, plus a CLI.
"""

from .autodiff import Adam, Tensor, conv2d, matmul, no_grad
from .fusion import FusedPair, FusionConfig, fuse_amplitude, lf_mask, stff
from .metrics import SegMetrics, binarize, iou_dice
from .network import AblationFlags, ModelParams, bilinear_resample, forward, seg_loss
from .spectral import Spectrum, center_shift, center_unshift, decompose, dft2d, fft2d, recompose
from .training import EpochReport, RunConfig, run_training

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "Tensor",
    "conv2d",
    "matmul",
    "no_grad",
    "FusedPair",
    "FusionConfig",
    "fuse_amplitude",
    "lf_mask",
    "stff",
    "SegMetrics",
    "binarize",
    "iou_dice",
    "AblationFlags",
    "ModelParams",
    "bilinear_resample",
    "forward",
    "seg_loss",
    "Spectrum",
    "center_shift",
    "center_unshift",
    "decompose",
    "dft2d",
    "fft2d",
    "recompose",
    "EpochReport",
    "RunConfig",
    "run_training",
    "__version__",
]
