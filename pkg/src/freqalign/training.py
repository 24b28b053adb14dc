"""Training loop binding fusion, adversarial alignment, and the network.

Per batch: (1) with adversarial alignment on, one discriminator/generator
step on normalized amplitudes, after which the generated amplitude replaces
the source amplitude; (2) with frequency fusion on, low-frequency blending
against a target batch; (3) a segmentation step on the (possibly restyled)
labeled images. Validation runs on raw target images after every epoch.

All randomness flows from one seed through named substreams (data, init,
alpha, adl), so ablation rows with the same seed see identical data.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from . import autodiff as ad
from .adversarial import (
    AdlState,
    adl_step,
    denormalize_amplitude,
    log_normalize,
    log_normalize_stats,
)
from .autodiff import Adam, Tensor
from .data import SynthConfig, load_dir, resample_to, synth_dataset
from .errors import ConfigError, UsageError
from .fusion import FIXED, FusionConfig, fuse_amplitude, lf_mask
from .metrics import binarize, iou_dice
from .network import AblationFlags, ModelParams, forward, seg_loss
from .spectral import CENTERED, Spectrum, center_shift, decompose, hermitian_symmetrize, recompose

_STREAMS = {"data": 0, "init": 1, "alpha": 2, "adl": 3}


def substream(seed: int, name: str) -> np.random.Generator:
    """Named deterministic child stream of the run seed."""
    return np.random.default_rng(np.random.SeedSequence((seed, _STREAMS[name])))


@dataclass
class RunConfig:
    """Everything one training run needs; every field has a default."""

    # data: directories, or synthetic when source_dir is empty
    source_dir: str = ""
    target_dir: str = ""
    val_dir: str = ""
    image_size: int = 64
    n_source: int = 80
    n_target: int = 40
    n_val: int = 24
    shape_family: str = "mixed"
    fg_mean: float = 0.75
    bg_mean: float = 0.25
    source_noise: float = 0.03
    target_gain: float = 0.30
    target_bias: float = 0.10
    target_illum: float = 0.12
    target_noise: float = 0.03
    # ablation flags
    use_stff: bool = False
    use_adl: bool = False
    use_sfi: bool = False
    # hyperparameters
    epochs: int = 20
    batch_size: int = 4
    lr: float = 2e-3
    adl_lr: float = 2e-4
    lambda_adv: float = 0.1
    beta: float = 0.1
    alpha_mode: str = "uniform_random"
    alpha: float = 1.0
    hf_from_target: bool = False
    saturating_g_loss: bool = False
    seed: int = 0

    def flags(self) -> AblationFlags:
        return AblationFlags(use_stff=self.use_stff, use_adl=self.use_adl,
                             use_sfi=self.use_sfi)

    def fusion_config(self) -> FusionConfig:
        return FusionConfig(beta=self.beta, alpha_mode=self.alpha_mode,
                            alpha=self.alpha, seed=self.seed,
                            hf_from_target=self.hf_from_target)

    def synth_config(self) -> SynthConfig:
        return SynthConfig(size=self.image_size, n_source=self.n_source,
                           n_target=self.n_target, n_val=self.n_val,
                           shape_family=self.shape_family,
                           fg_mean=self.fg_mean, bg_mean=self.bg_mean,
                           source_noise=self.source_noise,
                           target_gain=self.target_gain,
                           target_bias=self.target_bias,
                           target_illum=self.target_illum,
                           target_noise=self.target_noise, seed=self.seed)


@dataclass
class DomainBatch:
    """One training step's worth of data.

    Target image stacks are None when neither amplitude transform is on;
    fusion and game targets are paired through separate substreams.
    """

    source_images: np.ndarray
    source_masks: np.ndarray
    fuse_targets: Optional[np.ndarray]
    game_targets: Optional[np.ndarray]


@dataclass
class EpochReport:
    epoch: int
    seg_loss: float
    d_loss: Optional[float]
    g_loss: Optional[float]
    val_iou: float
    val_dice: float


@dataclass
class TrainState:
    params: ModelParams
    flags: AblationFlags
    seg_opt: Adam
    adl: Optional[AdlState]
    fusion_cfg: FusionConfig
    lambda_adv: float
    data_rng: np.random.Generator
    alpha_rng: np.random.Generator
    adl_rng: np.random.Generator


def make_splits(cfg: RunConfig) -> tuple:
    """Load directories or synthesize the default domain-shift task."""
    if cfg.source_dir:
        if not (cfg.target_dir and cfg.val_dir):
            raise ConfigError("source_dir set but target_dir/val_dir missing")
        size = (cfg.image_size, cfg.image_size)
        source = [resample_to(r, size) for r in load_dir(cfg.source_dir, True)]
        target = [resample_to(r, size) for r in load_dir(cfg.target_dir, False)]
        val = [resample_to(r, size) for r in load_dir(cfg.val_dir, True)]
        if not source or not target or not val:
            raise ConfigError("every split needs at least one sample")
        return source, target, val
    return synth_dataset(cfg.synth_config())


def create_state(cfg: RunConfig, in_channels: int) -> TrainState:
    params = ModelParams(in_channels, substream(cfg.seed, "init"))
    flags = cfg.flags()
    seg_opt = Adam(params.tensors(params.trainable_names(flags)), lr=cfg.lr)
    adl = None
    if flags.use_adl:
        adl = AdlState(g=params.gen, d=params.disc,
                       opt_g=Adam([t for _, t in params.gen.params()], lr=cfg.adl_lr),
                       opt_d=Adam([t for _, t in params.disc.params()], lr=cfg.adl_lr),
                       saturating=cfg.saturating_g_loss)
    return TrainState(params=params, flags=flags, seg_opt=seg_opt, adl=adl,
                      fusion_cfg=cfg.fusion_config(),
                      lambda_adv=cfg.lambda_adv,
                      data_rng=substream(cfg.seed, "data"),
                      alpha_rng=substream(cfg.seed, "alpha"),
                      adl_rng=substream(cfg.seed, "adl"))


def _stack_images(records: list, idx) -> np.ndarray:
    return np.stack([records[i].image for i in idx])


def _stack_masks(records: list, idx) -> np.ndarray:
    return np.stack([records[i].mask for i in idx])


def _centered_parts(images: np.ndarray) -> tuple:
    spec = center_shift(decompose(images))
    return spec.amplitude, spec.phase


def _restyle_batch(state: TrainState, batch: DomainBatch) -> tuple:
    """Apply the enabled amplitude transforms to one labeled batch.

    Returns (network input images, adversarial StepReport or None).
    """
    flags = state.flags
    src_images = batch.source_images
    if not (flags.use_adl or flags.use_stff):
        return src_images, None

    amp_s, phase_s = _centered_parts(src_images)
    report = None
    if flags.use_adl:
        norm_s, lo, hi = log_normalize_stats(amp_s)
        norm_t = log_normalize(_centered_parts(batch.game_targets)[0])
        report, generated = adl_step(state.adl, norm_s, norm_t)
        # project back into the valid normalized range before inverting
        amp_src_side = hermitian_symmetrize(
            denormalize_amplitude(np.clip(generated, 0.0, 1.0), lo, hi), CENTERED)
    else:
        amp_src_side = amp_s

    if flags.use_stff:
        amp_t = _centered_parts(batch.fuse_targets)[0]
        mask = lf_mask(amp_s.shape[-2], amp_s.shape[-1], state.fusion_cfg.beta)
        fused = np.empty_like(amp_src_side)
        for i in range(amp_src_side.shape[0]):
            if state.fusion_cfg.alpha_mode == FIXED:
                alpha = float(state.fusion_cfg.alpha)
            else:
                alpha = float(state.alpha_rng.uniform(0.0, 1.0))
            fused[i] = fuse_amplitude(amp_src_side[i], amp_t[i], alpha, mask,
                                      state.fusion_cfg.hf_from_target)
        amp_final = fused
    else:
        amp_final = amp_src_side

    spec = Spectrum(amplitude=amp_final, phase=phase_s, layout=CENTERED)
    return np.clip(recompose(spec), 0.0, 1.0), report


def evaluate(params: ModelParams, flags: AblationFlags, records: list,
             batch_size: int) -> tuple:
    """Mean IoU/Dice of thresholded predictions over labeled records."""
    ious, dices = [], []
    for start in range(0, len(records), batch_size):
        chunk = records[start:start + batch_size]
        images = np.stack([r.image for r in chunk])
        with ad.no_grad():
            logits, _ = forward(params, Tensor(images), flags)
        preds = binarize(ad.sigmoid(logits).data)
        for i, rec in enumerate(chunk):
            m = iou_dice(preds[i], rec.mask)
            ious.append(m.iou)
            dices.append(m.dice)
    return float(np.mean(ious)), float(np.mean(dices))


def train_epoch(state: TrainState, epoch: int, source: list, target: list,
                val: list, batch_size: int) -> EpochReport:
    """One pass over the labeled split plus a validation sweep."""
    if not source:
        raise UsageError("train_epoch: empty source stream")
    n = len(source)
    order = state.data_rng.permutation(n)
    fuse_order = state.data_rng.permutation(len(target))
    game_order = state.adl_rng.permutation(len(target))

    seg_losses, d_losses, g_losses = [], [], []
    cursor = 0
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        need_targets = state.flags.use_stff or state.flags.use_adl
        fuse_targets = game_targets = None
        if need_targets:
            picks = [(cursor + j) % len(target) for j in range(len(idx))]
            cursor += len(idx)
            fuse_targets = _stack_images(target, [fuse_order[p] for p in picks])
            game_targets = _stack_images(target, [game_order[p] for p in picks])
        batch = DomainBatch(source_images=_stack_images(source, idx),
                            source_masks=_stack_masks(source, idx),
                            fuse_targets=fuse_targets,
                            game_targets=game_targets)

        inputs, report = _restyle_batch(state, batch)
        logits, _ = forward(state.params, Tensor(inputs), state.flags)
        loss = seg_loss(logits, batch.source_masks)
        state.seg_opt.zero_grad()
        loss.backward()
        state.seg_opt.step()

        seg_losses.append(loss.item())
        if report is not None:
            d_losses.append(report.d_loss)
            g_losses.append(report.g_loss)

    val_iou, val_dice = evaluate(state.params, state.flags, val, batch_size)
    return EpochReport(
        epoch=epoch,
        seg_loss=float(np.mean(seg_losses)),
        d_loss=float(np.mean(d_losses)) if d_losses else None,
        g_loss=float(np.mean(g_losses)) if g_losses else None,
        val_iou=val_iou,
        val_dice=val_dice,
    )


def run_training(cfg: RunConfig,
                 on_epoch: Optional[Callable[[EpochReport, TrainState], None]] = None
                 ) -> tuple:
    """Train per the config; returns (reports, final state).

    ``on_epoch`` fires after every epoch (CSV/checkpoint streaming), so a
    numerical abort still leaves the last stable epoch on disk.
    """
    source, target, val = make_splits(cfg)
    state = create_state(cfg, in_channels=source[0].image.shape[0])
    reports = []
    for epoch in range(1, cfg.epochs + 1):
        report = train_epoch(state, epoch, source, target, val, cfg.batch_size)
        reports.append(report)
        if on_epoch is not None:
            on_epoch(report, state)
    return reports, state
