import numpy as np
import pytest
from PIL import Image

from freqalign import data as dat
from freqalign.errors import ConfigError, DataError


def test_synth_is_deterministic_per_seed():
    cfg = dat.SynthConfig(n_source=4, n_target=3, n_val=2, seed=7)
    a = dat.synth_dataset(cfg)
    b = dat.synth_dataset(cfg)
    for split_a, split_b in zip(a, b):
        for ra, rb in zip(split_a, split_b):
            assert ra.id == rb.id
            assert np.array_equal(ra.image, rb.image)
            if ra.mask is not None:
                assert np.array_equal(ra.mask, rb.mask)
    c = dat.synth_dataset(dat.SynthConfig(n_source=4, n_target=3, n_val=2, seed=8))
    assert not np.array_equal(a[0][0].image, c[0][0].image)


def test_synth_masks_are_binary_and_images_in_range():
    source, target, val = dat.synth_dataset(
        dat.SynthConfig(n_source=6, n_target=4, n_val=3, seed=0))
    for rec in source + val:
        assert rec.mask is not None
        assert np.all((rec.mask == 0.0) | (rec.mask == 1.0))
    for rec in source + target + val:
        assert rec.image.min() >= 0.0 and rec.image.max() <= 1.0
    assert all(rec.mask is None for rec in target)


def test_synth_split_ids_are_disjoint():
    source, target, val = dat.synth_dataset(
        dat.SynthConfig(n_source=5, n_target=5, n_val=5, seed=1))
    ids = [r.id for r in source + target + val]
    assert len(set(ids)) == len(ids)


def test_synth_identical_domains_when_style_is_identity():
    cfg = dat.SynthConfig(n_source=30, n_target=30, n_val=2, seed=3,
                          source_noise=0.0, target_gain=1.0, target_bias=0.0,
                          target_illum=0.0, target_noise=0.0)
    source, target, _ = dat.synth_dataset(cfg)
    src_means = np.array([r.image.mean() for r in source])
    tgt_means = np.array([r.image.mean() for r in target])
    # same generative law: first moments agree within sampling noise
    assert abs(src_means.mean() - tgt_means.mean()) < 0.05


def test_synth_noiseless_source_recoverable_by_thresholding():
    cfg = dat.SynthConfig(n_source=5, n_target=1, n_val=1, seed=4,
                          source_noise=0.0)
    source, _, _ = dat.synth_dataset(cfg)
    from freqalign.metrics import binarize, iou_dice

    for rec in source:
        m = iou_dice(binarize(rec.image[:1]), rec.mask)
        assert m.iou == 1.0


def test_synth_foreground_fraction_in_band():
    cfg = dat.SynthConfig(n_source=100, n_target=1, n_val=1, seed=5)
    source, _, _ = dat.synth_dataset(cfg)
    fraction = np.mean([r.mask.mean() for r in source])
    assert 0.05 <= fraction <= 0.4


def test_synth_validates_config():
    with pytest.raises(ConfigError):
        dat.SynthConfig(size=60)
    with pytest.raises(ConfigError):
        dat.SynthConfig(n_source=0)
    with pytest.raises(ConfigError):
        dat.SynthConfig(shape_family="squares")


def test_load_dir_empty(tmp_path):
    (tmp_path / "images").mkdir()
    assert dat.load_dir(tmp_path, with_masks=False) == []


def test_load_dir_missing_images_dir(tmp_path):
    with pytest.raises(DataError):
        dat.load_dir(tmp_path, with_masks=False)


def test_load_dir_scaling_endpoints(tmp_path):
    (tmp_path / "images").mkdir()
    arr = np.array([[0, 255], [128, 64]], dtype=np.uint8)
    Image.fromarray(arr).save(tmp_path / "images" / "a.png")
    rec = dat.load_dir(tmp_path, with_masks=False)[0]
    assert rec.image[0, 0, 0] == 0.0
    assert rec.image[0, 0, 1] == 1.0


def test_load_dir_orders_by_stem_and_reads_masks(tmp_path):
    rng = np.random.default_rng(0)
    (tmp_path / "images").mkdir()
    (tmp_path / "masks").mkdir()
    for stem in ("charlie", "alpha", "bravo"):
        img = (rng.uniform(size=(8, 8)) * 255).astype(np.uint8)
        Image.fromarray(img).save(tmp_path / "images" / f"{stem}.png")
        mask = (rng.uniform(size=(8, 8)) > 0.5).astype(np.uint8) * 255
        Image.fromarray(mask).save(tmp_path / "masks" / f"{stem}.png")
    records = dat.load_dir(tmp_path, with_masks=True)
    assert [r.id for r in records] == ["alpha", "bravo", "charlie"]
    for rec in records:
        assert np.all((rec.mask == 0.0) | (rec.mask == 1.0))


def test_load_dir_missing_mask_names_stem(tmp_path):
    (tmp_path / "images").mkdir()
    (tmp_path / "masks").mkdir()
    Image.fromarray(np.zeros((4, 4), dtype=np.uint8)).save(
        tmp_path / "images" / "lonely.png")
    with pytest.raises(DataError, match="lonely"):
        dat.load_dir(tmp_path, with_masks=True)


def test_load_dir_undecodable_file(tmp_path):
    (tmp_path / "images").mkdir()
    (tmp_path / "images" / "broken.png").write_bytes(b"not a png at all")
    with pytest.raises(DataError):
        dat.load_dir(tmp_path, with_masks=False)


def test_load_dir_reads_pgm_and_rgb(tmp_path):
    (tmp_path / "images").mkdir()
    gray = np.arange(64, dtype=np.uint8).reshape(8, 8)
    Image.fromarray(gray).save(tmp_path / "images" / "gray.pgm")
    rgb = np.zeros((8, 8, 3), dtype=np.uint8)
    rgb[..., 0] = 200
    Image.fromarray(rgb).save(tmp_path / "images" / "color.ppm")
    records = dat.load_dir(tmp_path, with_masks=False)
    by_id = {r.id: r for r in records}
    assert by_id["gray.pgm".split(".")[0]].image.shape == (1, 8, 8)
    assert by_id["color"].image.shape == (3, 8, 8)


def test_write_image_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    img = rng.uniform(size=(1, 8, 8))
    dat.write_image(tmp_path / "x.png", img)
    with Image.open(tmp_path / "x.png") as im:
        back = np.asarray(im, dtype=np.float64) / 255.0
    assert np.max(np.abs(back - img[0])) <= 0.5 / 255 + 1e-12


def test_resample_identity():
    rec = dat.SampleRecord(image=np.random.default_rng(2).uniform(size=(1, 32, 32)),
                           mask=None, domain="source", id="x")
    out = dat.resample_to(rec, (32, 32))
    assert out is rec


def test_resample_preserves_mask_binarity():
    rng = np.random.default_rng(3)
    mask = (rng.uniform(size=(1, 32, 32)) > 0.5).astype(np.float64)
    rec = dat.SampleRecord(image=rng.uniform(size=(1, 32, 32)), mask=mask,
                           domain="source", id="x")
    for size in ((64, 64), (48, 48)):
        out = dat.resample_to(rec, size)
        assert np.all((out.mask == 0.0) | (out.mask == 1.0))


def test_resample_checkerboard_quadruples_foreground():
    yy, xx = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
    checker = ((yy + xx) % 2).astype(np.float64)[None]
    rec = dat.SampleRecord(image=checker.copy(), mask=checker.copy(),
                           domain="source", id="x")
    out = dat.resample_to(rec, (64, 64))
    assert out.mask.sum() == 4 * checker.sum()


def test_resample_rejects_bad_target():
    rec = dat.SampleRecord(image=np.zeros((1, 32, 32)), mask=None,
                           domain="source", id="x")
    with pytest.raises(ConfigError):
        dat.resample_to(rec, (50, 50))
