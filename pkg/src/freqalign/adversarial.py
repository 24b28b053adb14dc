"""Adversarial alignment of amplitude spectra.

A small convolutional generator perturbs normalized source amplitudes; a
convolutional discriminator scores amplitudes as target (1) vs generated
(0). Discriminator and generator are updated alternately, one step each.
The generator loss defaults to the non-saturating form -log D(G(A_s));
the literal saturating form log(1 - D(G(A_s))) sits behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor
from .errors import ContractError, NumericalError

PROB_EPS = 1e-7


# -- amplitude normalization ---------------------------------------------------


def _sample_axes(arr: np.ndarray) -> tuple:
    # per-sample stats: all axes for a single C,H,W sample, (1,2,3) for a batch
    return tuple(range(arr.ndim)) if arr.ndim == 3 else tuple(range(1, arr.ndim))


def log_normalize_stats(amplitude) -> tuple:
    """log(1 + A) scaled per sample to [0, 1]; returns (tensor, lo, hi).

    lo/hi are the per-sample log1p extrema needed to invert the scaling.
    A constant sample has zero range and maps to all-zeros.
    """
    arr = np.asarray(getattr(amplitude, "data", amplitude), dtype=np.float64)
    if np.any(arr < 0):
        raise ContractError("log_normalize: amplitude must be non-negative")
    logged = np.log1p(arr)
    axes = _sample_axes(arr)
    lo = logged.min(axis=axes, keepdims=True)
    hi = logged.max(axis=axes, keepdims=True)
    span = hi - lo
    scaled = np.where(span > 0, (logged - lo) / np.where(span > 0, span, 1.0), 0.0)
    return Tensor(scaled), lo, hi


def log_normalize(amplitude) -> Tensor:
    """log(1 + A) followed by per-sample min-max scaling to [0, 1]."""
    tensor, _, _ = log_normalize_stats(amplitude)
    return tensor


def denormalize_amplitude(normalized: np.ndarray, lo: np.ndarray,
                          hi: np.ndarray) -> np.ndarray:
    """Invert log_normalize back to a raw non-negative amplitude."""
    normalized = np.asarray(getattr(normalized, "data", normalized))
    logged = normalized * (hi - lo) + lo
    return np.maximum(np.expm1(logged), 0.0)


# -- networks -------------------------------------------------------------------


class GeneratorNet:
    """Residual 3-layer conv net on normalized amplitudes (C->16->16->C).

    The last conv starts at zero so the residual path is an exact identity
    at initialization; the game moves it off identity gradually.
    """

    def __init__(self, channels: int, rng: np.random.Generator, hidden: int = 16):
        self.channels = channels
        self.weights = []
        specs = [(hidden, channels), (hidden, hidden), (channels, hidden)]
        for idx, (out_ch, in_ch) in enumerate(specs, start=1):
            if idx == len(specs):
                w = Tensor(np.zeros((out_ch, in_ch, 3, 3)), requires_grad=True)
            else:
                w = Tensor(ad.glorot_uniform(rng, (out_ch, in_ch, 3, 3),
                                             in_ch * 9, out_ch * 9),
                           requires_grad=True)
            b = Tensor(np.zeros(out_ch), requires_grad=True)
            self.weights.append((f"gen.conv{idx}.w", w))
            self.weights.append((f"gen.conv{idx}.b", b))

    def params(self):
        return list(self.weights)

    def forward(self, x: Tensor) -> Tensor:
        w1, b1 = self.weights[0][1], self.weights[1][1]
        w2, b2 = self.weights[2][1], self.weights[3][1]
        w3, b3 = self.weights[4][1], self.weights[5][1]
        h = ad.relu(ad.conv2d(x, w1, b1, stride=1, padding=1))
        h = ad.relu(ad.conv2d(h, w2, b2, stride=1, padding=1))
        return ad.add(x, ad.conv2d(h, w3, b3, stride=1, padding=1))

    __call__ = forward


class DiscriminatorNet:
    """Strided conv stack, global average pool, single sigmoid logit."""

    def __init__(self, channels: int, rng: np.random.Generator):
        def conv_param(name, out_ch, in_ch):
            w = Tensor(ad.glorot_uniform(rng, (out_ch, in_ch, 3, 3),
                                         in_ch * 9, out_ch * 9), requires_grad=True)
            b = Tensor(np.zeros(out_ch), requires_grad=True)
            return [(f"{name}.w", w), (f"{name}.b", b)]

        self.weights = conv_param("disc.conv1", 16, channels)
        self.weights += conv_param("disc.conv2", 32, 16)
        head_w = Tensor(ad.glorot_uniform(rng, (32, 1), 32, 1), requires_grad=True)
        head_b = Tensor(np.zeros(1), requires_grad=True)
        self.weights += [("disc.head.w", head_w), ("disc.head.b", head_b)]

    def params(self):
        return list(self.weights)

    def forward(self, x: Tensor) -> Tensor:
        w1, b1 = self.weights[0][1], self.weights[1][1]
        w2, b2 = self.weights[2][1], self.weights[3][1]
        hw, hb = self.weights[4][1], self.weights[5][1]
        h = ad.relu(ad.conv2d(x, w1, b1, stride=2, padding=1))
        h = ad.relu(ad.conv2d(h, w2, b2, stride=2, padding=1))
        pooled = ad.tmean(h, axis=(2, 3))          # (B, 32)
        logit = ad.add(ad.matmul(pooled, hw), hb)  # (B, 1)
        return ad.sigmoid(logit)

    __call__ = forward


# -- losses and steps -----------------------------------------------------------


def _clamped_log(prob: Tensor) -> Tensor:
    return ad.log(ad.clip(prob, PROB_EPS, 1.0 - PROB_EPS))


def adl_losses(d_net, g_net, amp_s: Tensor, amp_t: Tensor,
               saturating: bool = False) -> tuple:
    """Discriminator and generator losses of the amplitude alignment game.

    d_loss = -[mean log D(A_t) + mean log(1 - D(G(A_s)))] with G(A_s) held
    constant; g_loss = -mean log D(G(A_s)) (or the saturating variant).
    """
    fake = g_net(amp_s)
    p_real = d_net(amp_t)
    p_fake = d_net(fake.detach())
    d_loss = ad.sub(0.0, ad.add(ad.tmean(_clamped_log(p_real)),
                                ad.tmean(_clamped_log(ad.sub(1.0, p_fake)))))
    p_fake_g = d_net(fake)
    if saturating:
        g_loss = ad.tmean(_clamped_log(ad.sub(1.0, p_fake_g)))
    else:
        g_loss = ad.sub(0.0, ad.tmean(_clamped_log(p_fake_g)))
    if np.isnan(d_loss.item()) or np.isnan(g_loss.item()):
        raise NumericalError("adl_losses produced NaN; aborting the step")
    return d_loss, g_loss


def discriminator_accuracy(p_real: np.ndarray, p_fake: np.ndarray) -> float:
    """Fraction of correct real/fake calls at threshold 0.5."""
    correct = np.sum(p_real > 0.5) + np.sum(p_fake <= 0.5)
    return float(correct) / (p_real.size + p_fake.size)


@dataclass
class StepReport:
    d_loss: float
    g_loss: float
    d_acc: float


@dataclass
class AdlState:
    """Generator/discriminator pair with their optimizers."""

    g: GeneratorNet
    d: DiscriminatorNet
    opt_g: Adam
    opt_d: Adam
    saturating: bool = False

    @classmethod
    def create(cls, channels: int, rng: np.random.Generator, lr: float = 2e-4,
               saturating: bool = False) -> "AdlState":
        g = GeneratorNet(channels, rng)
        d = DiscriminatorNet(channels, rng)
        return cls(g=g, d=d,
                   opt_g=Adam([t for _, t in g.params()], lr=lr),
                   opt_d=Adam([t for _, t in d.params()], lr=lr),
                   saturating=saturating)


def adl_step(state: AdlState, amp_s: Tensor, amp_t: Tensor,
             update_g: bool = True) -> tuple:
    """One discriminator update then one generator update (1:1 schedule).

    Returns (StepReport, generated normalized amplitudes as an array).
    d_acc is measured on the pre-update discriminator outputs.
    """
    fake = state.g(amp_s)

    p_real = state.d(amp_t)
    p_fake = state.d(fake.detach())
    d_loss = ad.sub(0.0, ad.add(ad.tmean(_clamped_log(p_real)),
                                ad.tmean(_clamped_log(ad.sub(1.0, p_fake)))))
    if np.isnan(d_loss.item()):
        raise NumericalError("adl_step: discriminator loss is NaN")
    d_acc = discriminator_accuracy(p_real.data, p_fake.data)
    state.opt_d.zero_grad()
    d_loss.backward()
    state.opt_d.step()

    p_fake_g = state.d(fake)
    if state.saturating:
        g_loss = ad.tmean(_clamped_log(ad.sub(1.0, p_fake_g)))
    else:
        g_loss = ad.sub(0.0, ad.tmean(_clamped_log(p_fake_g)))
    if np.isnan(g_loss.item()):
        raise NumericalError("adl_step: generator loss is NaN")
    if update_g:
        state.opt_g.zero_grad()
        g_loss.backward()
        state.opt_g.step()

    return StepReport(d_loss=d_loss.item(), g_loss=g_loss.item(),
                      d_acc=d_acc), fake.data


# -- toy experiment -------------------------------------------------------------


def toy_amplitudes(rng: np.random.Generator, n: int, size: int,
                   scale: float) -> np.ndarray:
    """Random non-negative amplitude fields at a given overall scale.

    Half-normal per-bin amplitudes; the scale moves how far log1p bends,
    so the class signature survives per-sample min-max normalization.
    """
    return scale * np.abs(rng.normal(size=(n, 1, size, size)))


def toy_alignment_run(seed: int, frozen_steps: int = 200,
                      adversarial_steps: int = 2000, batch: int = 32,
                      size: int = 8, eval_every: int = 25,
                      eval_count: int = 48, lr: float = 5e-3) -> dict:
    """Scale-1 vs scale-10 amplitude game used by tests.

    Phase 1 trains only the discriminator for ``frozen_steps``; phase 2
    continues with alternating updates. Held-out accuracy is recorded
    every ``eval_every`` steps within each phase.
    """
    rng = np.random.default_rng(seed)
    state = AdlState.create(channels=1, rng=rng, lr=lr)

    eval_s = log_normalize(toy_amplitudes(rng, eval_count, size, 1.0))
    eval_t = log_normalize(toy_amplitudes(rng, eval_count, size, 10.0))

    def held_out_acc() -> float:
        with ad.no_grad():
            p_fake = state.d(state.g(eval_s))
            p_real = state.d(eval_t)
        return discriminator_accuracy(p_real.data, p_fake.data)

    def run_phase(steps: int, update_g: bool) -> list:
        trace = []
        for step in range(1, steps + 1):
            amp_s = log_normalize(toy_amplitudes(rng, batch, size, 1.0))
            amp_t = log_normalize(toy_amplitudes(rng, batch, size, 10.0))
            adl_step(state, amp_s, amp_t, update_g=update_g)
            if step % eval_every == 0 or step == steps:
                trace.append((step, held_out_acc()))
        return trace

    frozen_trace = run_phase(frozen_steps, update_g=False)
    adversarial_trace = run_phase(adversarial_steps, update_g=True)
    return {"frozen": frozen_trace, "adversarial": adversarial_trace}
