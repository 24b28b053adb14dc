import numpy as np
import pytest

from freqalign import fusion as fu
from freqalign import spectral as sp
from freqalign.errors import ConfigError, ShapeError, UsageError


def test_lf_mask_tiny_beta_is_dc_only():
    mask = fu.lf_mask(32, 32, 1e-9)
    assert mask.sum() == 1
    assert mask[16, 16]


def test_lf_mask_half_beta_covers_odd_array():
    # side 2*floor(0.5*33)+1 = 33
    mask = fu.lf_mask(33, 33, 0.5)
    assert mask.all()


def test_lf_mask_count_beta_01_64():
    # side 2*floor(6.4)+1 = 13 -> 169 bins
    mask = fu.lf_mask(64, 64, 0.1)
    assert mask.sum() == 169


def test_lf_mask_centrally_symmetric():
    # closed under centered-layout frequency negation i -> (2*floor(H/2) - i) % H
    for h, w in [(8, 8), (9, 7), (16, 12), (5, 5)]:
        mask = fu.lf_mask(h, w, 0.2)
        rows = (2 * (h // 2) - np.arange(h)) % h
        cols = (2 * (w // 2) - np.arange(w)) % w
        assert np.array_equal(mask, mask[rows][:, cols])


def test_lf_mask_beta_out_of_range():
    for beta in (0.0, -0.1, 0.6):
        with pytest.raises(ConfigError):
            fu.lf_mask(8, 8, beta)


def test_fusion_config_validation():
    with pytest.raises(ConfigError):
        fu.FusionConfig(beta=0.7)
    with pytest.raises(ConfigError):
        fu.FusionConfig(alpha_mode="fixed", alpha=1.5)
    with pytest.raises(ConfigError):
        fu.FusionConfig(alpha_mode="bogus")


def test_fuse_amplitude_alpha_one_returns_source_everywhere():
    rng = np.random.default_rng(0)
    a_s = rng.uniform(0, 5, (8, 8))
    a_t = rng.uniform(0, 5, (8, 8))
    mask = fu.lf_mask(8, 8, 0.2)
    out = fu.fuse_amplitude(a_s, a_t, 1.0, mask)
    assert np.array_equal(out, a_s)


def test_fuse_amplitude_alpha_zero_inside_mask_is_target():
    rng = np.random.default_rng(1)
    a_s = rng.uniform(0, 5, (8, 8))
    a_t = rng.uniform(0, 5, (8, 8))
    mask = fu.lf_mask(8, 8, 0.2)
    out = fu.fuse_amplitude(a_s, a_t, 0.0, mask)
    assert np.array_equal(out[mask], a_t[mask])
    assert np.array_equal(out[~mask], a_s[~mask])


def test_fuse_amplitude_constant_arrays():
    a_s = np.full((16, 16), 4.0)
    a_t = np.full((16, 16), 2.0)
    mask = fu.lf_mask(16, 16, 0.1)
    out = fu.fuse_amplitude(a_s, a_t, 0.5, mask)
    assert np.all(out[mask] == 3.0)
    assert np.all(out[~mask] == 4.0)


def test_fuse_amplitude_bitwise_matches_scalar_reference():
    rng = np.random.default_rng(2)
    for _ in range(20):
        h, w = rng.integers(4, 24, size=2)
        alpha = float(rng.uniform())
        beta = float(rng.uniform(0.05, 0.5))
        a_s = rng.uniform(0, 10, (h, w))
        a_t = rng.uniform(0, 10, (h, w))
        mask = fu.lf_mask(h, w, beta)
        out = fu.fuse_amplitude(a_s, a_t, alpha, mask)
        for i in range(h):
            for j in range(w):
                if mask[i, j]:
                    expect = alpha * a_s[i, j] + (1.0 - alpha) * a_t[i, j]
                else:
                    expect = a_s[i, j]
                assert out[i, j] == expect   # bitwise at 64-bit


def test_fuse_amplitude_hf_from_target_switch():
    rng = np.random.default_rng(3)
    a_s = rng.uniform(0, 5, (8, 8))
    a_t = rng.uniform(0, 5, (8, 8))
    mask = fu.lf_mask(8, 8, 0.2)
    out = fu.fuse_amplitude(a_s, a_t, 0.25, mask, hf_from_target=True)
    assert np.array_equal(out[~mask], a_t[~mask])


def test_fuse_amplitude_stays_non_negative():
    rng = np.random.default_rng(4)
    a_s = rng.uniform(0, 5, (8, 8))
    a_t = rng.uniform(0, 5, (8, 8))
    out = fu.fuse_amplitude(a_s, a_t, 0.3, fu.lf_mask(8, 8, 0.3))
    assert np.all(out >= 0)


def test_fuse_spectra_requires_centered_layout():
    spec = sp.decompose(np.ones((1, 8, 8)))
    mask = fu.lf_mask(8, 8, 0.2)
    with pytest.raises(UsageError):
        fu.fuse_spectra(spec, sp.center_shift(spec), 0.5, mask)


def test_monotone_blend_in_alpha():
    a_s = np.full((8, 8), 6.0)
    a_t = np.full((8, 8), 2.0)
    mask = fu.lf_mask(8, 8, 0.25)
    values = [fu.fuse_amplitude(a_s, a_t, alpha, mask)[4, 4]
              for alpha in (0.0, 0.25, 0.5, 0.75, 1.0)]
    assert all(b > a for a, b in zip(values, values[1:]))


def test_stff_identical_inputs_returns_source():
    rng = np.random.default_rng(5)
    x = rng.uniform(0.1, 0.9, (1, 16, 16))
    for alpha in (0.0, 0.37, 1.0):
        cfg = fu.FusionConfig(beta=0.2, alpha_mode=fu.FIXED, alpha=alpha)
        pair = fu.stff(x, x, cfg)
        assert np.max(np.abs(pair.fused_image - x)) < 1e-6


def test_stff_alpha_one_reproduces_source():
    rng = np.random.default_rng(6)
    x_s = rng.uniform(0.1, 0.9, (1, 16, 16))
    x_t = rng.uniform(0.1, 0.9, (1, 16, 16))
    cfg = fu.FusionConfig(beta=0.2, alpha_mode=fu.FIXED, alpha=1.0)
    pair = fu.stff(x_s, x_t, cfg)
    assert np.max(np.abs(pair.fused_image - x_s)) < 1e-6
    assert pair.alpha_used == 1.0


def test_stff_dc_substitution_shifts_image_uniformly():
    # impulse source, constant target, alpha=0 and a DC-only mask: the fused
    # image is the source plus (c*H*W - v0)/(H*W), verified against a naive
    # DFT evaluation of the single-bin substitution
    h = w = 8
    v0, c = 0.5, 0.4
    x_s = np.zeros((1, h, w))
    x_s[0, 0, 0] = v0
    x_t = np.full((1, h, w), c)
    cfg = fu.FusionConfig(beta=1e-9, alpha_mode=fu.FIXED, alpha=0.0)
    pair = fu.stff(x_s, x_t, cfg)
    offset = (c * h * w - v0) / (h * w)
    expected = x_s + offset
    assert np.max(np.abs(pair.fused_image - expected)) < 1e-9

    # independent check of the substituted spectrum via the direct DFT
    spec = sp.dft2d(x_s[0])
    spec[0, 0] = c * h * w
    by_oracle = np.real(np.conj(sp.dft2d(np.conj(spec)))) / (h * w)
    assert np.max(np.abs(pair.fused_image[0] - by_oracle)) < 1e-9


def test_stff_phase_preserved_where_amplitude_nonzero():
    rng = np.random.default_rng(7)
    x_s = rng.uniform(0, 1, (1, 16, 16))
    x_t = rng.uniform(0, 1, (1, 16, 16))
    cfg = fu.FusionConfig(beta=0.15, alpha_mode=fu.FIXED, alpha=0.3)
    pair = fu.stff(x_s, x_t, cfg)
    phi_s = sp.center_shift(sp.decompose(x_s)).phase
    live = pair.fused_spectrum.amplitude > 1e-12
    assert np.max(np.abs(pair.fused_spectrum.phase[live] - phi_s[live])) < 1e-9


def test_stff_high_frequency_amplitude_bitwise_source():
    rng = np.random.default_rng(8)
    x_s = rng.uniform(0, 1, (2, 16, 16))
    x_t = rng.uniform(0, 1, (2, 16, 16))
    cfg = fu.FusionConfig(beta=0.1, alpha_mode=fu.FIXED, alpha=0.4)
    pair = fu.stff(x_s, x_t, cfg)
    amp_s = sp.center_shift(sp.decompose(x_s)).amplitude
    outside = ~pair.lf_mask
    assert np.array_equal(pair.fused_spectrum.amplitude[:, outside],
                          amp_s[:, outside])


def test_stff_deterministic_for_fixed_seed():
    rng = np.random.default_rng(9)
    x_s = rng.uniform(0, 1, (1, 16, 16))
    x_t = rng.uniform(0, 1, (1, 16, 16))
    cfg = fu.FusionConfig(beta=0.2, seed=42)
    a = fu.stff(x_s, x_t, cfg)
    b = fu.stff(x_s, x_t, cfg)
    assert a.alpha_used == b.alpha_used
    assert np.array_equal(a.fused_image, b.fused_image)


def test_stff_alpha_stream_draws_per_sample():
    rng = np.random.default_rng(10)
    x = rng.uniform(0, 1, (1, 16, 16))
    cfg = fu.FusionConfig(seed=3)
    stream = np.random.default_rng(3)
    alphas = {fu.stff(x, x, cfg, rng=stream).alpha_used for _ in range(5)}
    assert len(alphas) == 5


def test_stff_shape_mismatch_is_usage_error():
    with pytest.raises(UsageError):
        fu.stff(np.zeros((1, 16, 16)), np.zeros((1, 8, 8)), fu.FusionConfig())


def test_stff_requires_chw():
    with pytest.raises(ShapeError):
        fu.stff(np.zeros((16, 16)), np.zeros((16, 16)), fu.FusionConfig())


def test_stff_clamps_to_unit_range():
    rng = np.random.default_rng(11)
    x_s = rng.uniform(0.6, 1.0, (1, 8, 8))
    x_t = rng.uniform(0.6, 1.0, (1, 8, 8)) * 3.0   # overdriven target
    cfg = fu.FusionConfig(beta=0.3, alpha_mode=fu.FIXED, alpha=0.0, clamp=True)
    pair = fu.stff(x_s, np.clip(x_t, 0, 1) * 3, cfg)
    assert pair.fused_image.min() >= 0.0 and pair.fused_image.max() <= 1.0
