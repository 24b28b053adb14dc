"""Segmentation network with a spatial branch, a frequency branch, and
bilinear spatial-frequency integration.

Both encoders are four stride-2 conv stages with channels (16, 32, 64, 128);
the frequency branch consumes a stack of log-normalized amplitude and
phase/pi channels of the input's centered spectrum. Per stage the frequency
features are resampled to the spatial feature size and concatenated; a
light decoder (1x1 stage projections, bilinear x2 upsampling, 3x3
refinements) recovers full resolution, and a sigmoid attention head gates
the pre-logits. With the integration flag off, the model reduces exactly to
the spatial encoder-decoder baseline and the attention gate is bypassed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .adversarial import DiscriminatorNet, GeneratorNet, log_normalize
from .autodiff import Tensor
from .errors import ContractError, DataError, ShapeError, UsageError
from .interpolate import interp_matrix
from .spectral import center_shift, decompose

STAGE_CHANNELS = (16, 32, 64, 128)
PROJ_WIDTHS = (16, 24, 32, 48)
FINAL_WIDTH = 16
PROB_EPS = 1e-7

CHECKPOINT_MAGIC = b"FQAL"
CHECKPOINT_VERSION = 1


@dataclass
class AblationFlags:
    """Module switches mirroring the ablation grid."""

    use_stff: bool = False
    use_adl: bool = False
    use_sfi: bool = False

    def label(self) -> str:
        if not (self.use_stff or self.use_adl or self.use_sfi):
            return "baseline"
        parts = [name for name, on in (("stff", self.use_stff),
                                       ("adl", self.use_adl),
                                       ("sfi", self.use_sfi)) if on]
        if len(parts) == 3:
            return "full"
        return "+".join(parts)


# -- differentiable bilinear resampling ----------------------------------------


def bilinear_resample(x: Tensor, target: tuple) -> Tensor:
    """Resample B,C,h,w features to B,C,H,W (align-corners=false).

    Implemented as two 1-D interpolation matrix products, so the gradient
    distributes over exactly the interpolation weights.
    """
    x = x if isinstance(x, Tensor) else Tensor(x)
    height, width = target
    if x.ndim != 4:
        raise ShapeError(f"bilinear_resample expects B,C,h,w input, got {x.shape}")
    h, w = x.shape[-2], x.shape[-1]
    if height < 1 or width < 1 or h < 1 or w < 1:
        raise ShapeError(f"bilinear_resample extents must be >= 1, got "
                         f"{h}x{w} -> {height}x{width}")
    if (h, w) == (height, width):
        out_data = x.data

        def backward_id(g):
            if x.requires_grad:
                x._accumulate(g)

        return ad._make(out_data, (x,), backward_id)

    row = interp_matrix(h, height) if h != height else None
    col = interp_matrix(w, width) if w != width else None
    out_data = x.data
    if row is not None:
        out_data = np.matmul(row, out_data)
    if col is not None:
        out_data = np.matmul(out_data, col.T)

    def backward(g):
        if not x.requires_grad:
            return
        if row is not None:
            g = np.matmul(row.T, g)
        if col is not None:
            g = np.matmul(g, col)
        x._accumulate(g)

    return ad._make(np.ascontiguousarray(out_data), (x,), backward)


def upsample2x(x: Tensor) -> Tensor:
    return bilinear_resample(x, (2 * x.shape[-2], 2 * x.shape[-1]))


# -- parameters ------------------------------------------------------------------


class ModelParams:
    """Every learnable tensor, in fixed declaration order.

    Covers the two encoders, both decoder variants, the attention head,
    and the amplitude generator/discriminator pair.
    """

    def __init__(self, in_channels: int, rng: np.random.Generator):
        self.in_channels = in_channels
        self._entries: list = []

        def conv_entry(name, out_ch, in_ch, k=3):
            w = Tensor(ad.glorot_uniform(rng, (out_ch, in_ch, k, k),
                                         in_ch * k * k, out_ch * k * k),
                       requires_grad=True, name=f"{name}.w")
            b = Tensor(np.zeros(out_ch), requires_grad=True, name=f"{name}.b")
            self._entries.append((f"{name}.w", w))
            self._entries.append((f"{name}.b", b))

        for prefix, first_in in (("spa", in_channels), ("freq", 2 * in_channels)):
            chans = [first_in, *STAGE_CHANNELS]
            for k in range(4):
                conv_entry(f"{prefix}.enc{k + 1}", chans[k + 1], chans[k])

        for prefix, mult in (("dec_spa", 1), ("dec_sfi", 2)):
            stage_ch = [c * mult for c in STAGE_CHANNELS]
            for k in range(4):
                conv_entry(f"{prefix}.proj{k + 1}", PROJ_WIDTHS[k], stage_ch[k], k=1)
            conv_entry(f"{prefix}.dec3", PROJ_WIDTHS[2], PROJ_WIDTHS[3] + PROJ_WIDTHS[2])
            conv_entry(f"{prefix}.dec2", PROJ_WIDTHS[1], PROJ_WIDTHS[2] + PROJ_WIDTHS[1])
            conv_entry(f"{prefix}.dec1", PROJ_WIDTHS[0], PROJ_WIDTHS[1] + PROJ_WIDTHS[0])
            conv_entry(f"{prefix}.dec0", FINAL_WIDTH, PROJ_WIDTHS[0])
            conv_entry(f"{prefix}.head", 1, FINAL_WIDTH, k=1)
            # start at the foreground prior (sigmoid(-2) ~ 0.12): skipping the
            # early easy-negative flood avoids the all-background plateau
            self._entries[-1][1].data[:] = -2.0
        conv_entry("att.head", 1, FINAL_WIDTH, k=1)
        # start the gate nearly open (sigmoid(2) ~ 0.88) so early training is
        # not attenuated; the head learns suppression later
        self._entries[-1][1].data[:] = 2.0

        self.gen = GeneratorNet(in_channels, rng)
        self.disc = DiscriminatorNet(in_channels, rng)
        self._entries.extend(self.gen.params())
        self._entries.extend(self.disc.params())
        self._by_name = dict(self._entries)
        if len(self._by_name) != len(self._entries):
            raise UsageError("duplicate parameter name in ModelParams")

    def names(self) -> list:
        return [name for name, _ in self._entries]

    def get(self, name: str) -> Tensor:
        return self._by_name[name]

    def tensors(self, names=None) -> list:
        if names is None:
            return [t for _, t in self._entries]
        return [self._by_name[n] for n in names]

    def trainable_names(self, flags: AblationFlags) -> list:
        """Parameters the segmentation optimizer owns under these flags.

        Generator/discriminator weights are excluded; they belong to the
        adversarial optimizers.
        """
        names = [n for n in self._by_name if n.startswith("spa.")]
        if flags.use_sfi:
            names += [n for n in self._by_name if n.startswith("freq.")]
            names += [n for n in self._by_name if n.startswith("dec_sfi.")]
            names += [n for n in self._by_name if n.startswith("att.")]
        else:
            names += [n for n in self._by_name if n.startswith("dec_spa.")]
        return names

    def checksum(self, names=None) -> float:
        tensors = self.tensors(names)
        return float(sum(np.sum(t.data) for t in tensors))


# -- forward pass ----------------------------------------------------------------


def _conv_block(params: ModelParams, name: str, x: Tensor, stride: int = 1,
                padding: int = 1, activate: bool = True) -> Tensor:
    out = ad.conv2d(x, params.get(f"{name}.w"), params.get(f"{name}.b"),
                    stride=stride, padding=padding)
    return ad.relu(out) if activate else out


def encoder_forward(params: ModelParams, prefix: str, x: Tensor) -> list:
    batch, _, height, width = x.shape
    feats = []
    out = x
    for k in range(4):
        out = _conv_block(params, f"{prefix}.enc{k + 1}", out, stride=2)
        expected = (batch, STAGE_CHANNELS[k], height // 2 ** (k + 1),
                    width // 2 ** (k + 1))
        if out.shape != expected:
            raise ShapeError(f"{prefix} stage {k + 1} produced {out.shape}, "
                             f"expected {expected}")
        feats.append(out)
    return feats


def frequency_channels(images) -> Tensor:
    """Network input for the frequency branch: [log-amp | phase/pi] stack.

    Built from the centered spectrum of each channel; detached from the
    graph (the transform is a preprocessing stage).
    """
    data = np.asarray(getattr(images, "data", images))
    spec = center_shift(decompose(data))
    amp = log_normalize(spec.amplitude).data
    phase = spec.phase / np.pi
    return Tensor(np.concatenate([amp, phase], axis=1))


def sfi_fuse(f_spa: list, f_freq: list) -> list:
    """Per stage: resample frequency features to the spatial size, concat."""
    if len(f_spa) != len(f_freq):
        raise UsageError(f"sfi_fuse: stage count mismatch, {len(f_spa)} spatial "
                         f"vs {len(f_freq)} frequency")
    fused = []
    for spa, freq in zip(f_spa, f_freq):
        aligned = bilinear_resample(freq, (spa.shape[-2], spa.shape[-1]))
        fused.append(ad.concat([spa, aligned], axis=1))
    return fused


def _decoder_forward(params: ModelParams, prefix: str, feats: list) -> tuple:
    proj = [
        _conv_block(params, f"{prefix}.proj{k + 1}", feats[k], padding=0)
        for k in range(4)
    ]
    out = proj[3]
    for k, level in ((3, 2), (2, 1), (1, 0)):
        out = ad.concat([upsample2x(out), proj[level]], axis=1)
        out = _conv_block(params, f"{prefix}.dec{k}", out)
    out = _conv_block(params, f"{prefix}.dec0", upsample2x(out))
    pre_logits = _conv_block(params, f"{prefix}.head", out, padding=0,
                             activate=False)
    return pre_logits, out


def forward(params: ModelParams, images, flags: AblationFlags) -> tuple:
    """Full segmentation forward pass: (logits, attention), both B,1,H,W.

    With integration off, the frequency branch and attention gate are
    bypassed and the attention map is identically one.
    """
    x = images if isinstance(images, Tensor) else Tensor(images)
    if x.ndim != 4:
        raise ShapeError(f"forward expects B,C,H,W images, got {x.shape}")
    batch, channels, height, width = x.shape
    if channels != params.in_channels:
        raise ShapeError(f"forward: model built for {params.in_channels} "
                         f"channels, got {channels}")
    if height % 16 or width % 16:
        raise ShapeError(f"forward: spatial size {height}x{width} must be "
                         "divisible by 16 (four halvings)")

    f_spa = encoder_forward(params, "spa", x)
    if not flags.use_sfi:
        pre_logits, _ = _decoder_forward(params, "dec_spa", f_spa)
        attention = Tensor(np.ones((batch, 1, height, width)))
        return pre_logits, attention

    f_freq = encoder_forward(params, "freq", frequency_channels(x))
    fused = sfi_fuse(f_spa, f_freq)
    pre_logits, dec_feat = _decoder_forward(params, "dec_sfi", fused)
    attention = ad.sigmoid(_conv_block(params, "att.head", dec_feat, padding=0,
                                       activate=False))
    logits = ad.mul(pre_logits, attention)
    return logits, attention


# -- loss --------------------------------------------------------------------------


def seg_loss(logits: Tensor, mask) -> Tensor:
    """Binary cross-entropy on sigmoid(logits) plus soft-Dice, equally weighted.

    Soft-Dice uses smoothing constant 1 in numerator and denominator and is
    computed over the whole batch.
    """
    mask_data = np.asarray(getattr(mask, "data", mask), dtype=np.float64)
    if not np.all((mask_data == 0.0) | (mask_data == 1.0)):
        raise ContractError("seg_loss: mask must be binary")
    if mask_data.shape != logits.shape:
        raise ShapeError(f"seg_loss: logits {logits.shape} vs mask "
                         f"{mask_data.shape}")
    m = Tensor(mask_data)
    p = ad.sigmoid(logits)
    pc = ad.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    bce = -ad.tmean(m * ad.log(pc) + (1.0 - m) * ad.log(1.0 - pc))
    inter = ad.tsum(p * m)
    dice = 1.0 - (2.0 * inter + 1.0) / (ad.tsum(p) + float(mask_data.sum()) + 1.0)
    return bce + dice


# -- checkpoints --------------------------------------------------------------------


def save_checkpoint(path, params: ModelParams):
    """Versioned binary blob: header, shape table, raw float64 values."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(params.names())))
        fh.write(struct.pack("<I", params.in_channels))
        for name, tensor in params._entries:
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", tensor.ndim))
            fh.write(struct.pack(f"<{tensor.ndim}I", *tensor.shape))
        for _, tensor in params._entries:
            fh.write(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())


def load_checkpoint(path, params: ModelParams):
    """Fill an existing ModelParams from disk; bit-exact round trip."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    in_channels = struct.unpack_from("<I", blob, 12)[0]
    if in_channels != params.in_channels:
        raise DataError(f"{path}: checkpoint for {in_channels}-channel model, "
                        f"got {params.in_channels}")
    if count != len(params.names()):
        raise DataError(f"{path}: parameter count {count} != "
                        f"{len(params.names())}")
    offset = 16
    table = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        name = blob[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<B", blob, offset)
        offset += 1
        shape = struct.unpack_from(f"<{ndim}I", blob, offset)
        offset += 4 * ndim
        table.append((name, shape))
    for (name, shape), (expect_name, tensor) in zip(table, params._entries):
        if name != expect_name or tuple(shape) != tensor.shape:
            raise DataError(f"{path}: entry {name} {shape} does not match "
                            f"model parameter {expect_name} {tensor.shape}")
        n_bytes = int(np.prod(shape)) * 8 if shape else 8
        values = np.frombuffer(blob, dtype="<f8", count=max(int(np.prod(shape)), 1),
                               offset=offset)
        tensor.data = values.reshape(shape).astype(np.float64).copy()
        offset += n_bytes


def load_checkpoint_model(path) -> ModelParams:
    """Construct a model (zero-init) and fill it from a checkpoint."""
    with open(path, "rb") as fh:
        head = fh.read(16)
    if head[:4] != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: not a checkpoint (bad magic)")
    in_channels = struct.unpack_from("<I", head, 12)[0]
    params = ModelParams(in_channels, np.random.default_rng(0))
    load_checkpoint(path, params)
    return params
