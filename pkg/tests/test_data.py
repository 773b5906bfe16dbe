import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from cookcnn.data import (CLASS_NAMES, AugConfig, ImageDataset, Stats, augment, batches, compute_stats,
                          decode_image, denormalize, gaussian_blur, gaussian_kernel, hflip, hsv_to_rgb,
                          load_image, normalize, random_affine_apply, resample_matrix, resize,
                          resize_center_crop, rgb_to_hsv, save_image_png, scan_dataset, vflip)
from cookcnn.errors import ConfigError, DataError, DecodeError, FormatError, ManifestError
from cookcnn.synthetic import make_synthetic_dataset
from cookcnn.tensor import Rng


def png_bytes(arr, mode=None):
    buf = io.BytesIO()
    Image.fromarray(arr, mode).save(buf, format="PNG")
    return buf.getvalue()


def jpeg_bytes(arr):
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="JPEG", quality=95)
    return buf.getvalue()


def constant_tree(root, values, split="train", label="diced"):
    """One constant 8x8 PNG per value, in a single class of ``split``."""
    for s in ("train", "valid"):
        (root / s / label).mkdir(parents=True, exist_ok=True)
    for i, v in enumerate(values):
        save_image_png(np.full((8, 8, 3), v, np.float32), root / split / label / f"c{i}.png")
    return root


image01 = arrays(np.float32, (12, 10, 3), elements=st.floats(0, 1, width=32))


# --- manifest ---------------------------------------------------------------

def test_scan_two_classes(tmp_path):
    root = make_synthetic_dataset(tmp_path, per_class=3, size=8, classes=[1, 9], splits=("train",))
    (root / "valid").mkdir()
    m = scan_dataset(root)
    assert len(m.records) == 6
    assert sorted({r.label for r in m.records}) == [1, 9]
    assert all(CLASS_NAMES[r.label] in r.path for r in m.records)
    assert len({r.path for r in m.records}) == 6
    assert m.counts()["train"][1] == 3
    assert any("valid/diced has no images" in w for w in m.warnings)


def test_scan_unknown_class(tmp_path):
    (tmp_path / "train" / "minced").mkdir(parents=True)
    (tmp_path / "valid").mkdir()
    with pytest.raises(ManifestError, match="minced"):
        scan_dataset(tmp_path)


def test_scan_missing_root(tmp_path):
    with pytest.raises(DataError, match="nowhere"):
        scan_dataset(tmp_path / "nowhere")


def test_class_table():
    assert set(CLASS_NAMES) == {"creamy_paste", "diced", "floured", "grated", "juiced", "julienne",
                                "mixed", "other", "peeled", "sliced", "whole"}


# --- decoding ---------------------------------------------------------------

def test_decode_red_pixel():
    img = decode_image(png_bytes(np.array([[[255, 0, 0]]], np.uint8)))
    assert img.shape == (1, 1, 3) and img.dtype == np.float32
    assert np.array_equal(img[0, 0], [1, 0, 0])


def test_decode_gray_128():
    img = decode_image(png_bytes(np.full((2, 3), 128, np.uint8), "L"))
    assert img.shape == (2, 3, 3)
    assert np.allclose(img, 128 / 255)
    assert abs(img[0, 0, 0] - 0.502) < 5e-4


def test_decode_16bit_gray():
    img = decode_image(png_bytes(np.full((2, 2), 65535, np.uint16)))
    assert np.allclose(img, 1.0)


def test_decode_jpeg_round_trip():
    arr = np.full((16, 16, 3), (40, 120, 200), np.uint8)
    img = decode_image(jpeg_bytes(arr))
    assert np.allclose(img * 255, arr, atol=3)


def test_truncated_jpeg():
    data = jpeg_bytes(np.random.default_rng(0).integers(0, 255, (32, 32, 3), dtype=np.uint8))
    with pytest.raises(DecodeError, match="offset"):
        decode_image(data[: len(data) // 2])


def test_not_an_image(tmp_path):
    with pytest.raises(DecodeError):
        decode_image(b"GIF89a....")
    p = tmp_path / "x.png"
    p.write_bytes(b"\x89PNG\r\n\x1a\n garbage")
    with pytest.raises(DecodeError, match="x.png"):
        load_image(p)


# --- resize and crop ----------------------------------------------------------

def test_resample_rows_sum_to_one():
    for a, b in [(256, 224), (100, 256), (7, 3), (5, 5)]:
        assert np.allclose(resample_matrix(a, b).sum(axis=1), 1.0)
    assert np.array_equal(resample_matrix(6, 6), np.eye(6))


def test_center_crop_offset_16():
    img = np.zeros((256, 256, 3), np.float32)
    img[16, 16] = 1.0
    img[239, 239] = 0.5
    out = resize_center_crop(img)
    assert out.shape == (224, 224, 3)
    assert np.all(out[0, 0] == 1.0) and np.all(out[223, 223] == 0.5)
    assert out.sum() == pytest.approx(3 * 1.5)


def test_constant_invariance():
    img = np.full((224, 224, 3), 0.37, np.float32)
    assert np.allclose(resize_center_crop(img), 0.37, atol=1e-6)


@pytest.mark.parametrize("shape", [(256, 512), (512, 256), (300, 1000)])
def test_shorter_side_rule(shape):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    img = np.stack([yy / h, xx / w, np.zeros_like(yy, float)], -1).astype(np.float32)
    out = resize_center_crop(img)
    assert out.shape == (224, 224, 3)
    # the crop is centred: mean normalized coordinate stays at one half
    assert out[..., 0].mean() == pytest.approx(0.5, abs=0.01)
    assert out[..., 1].mean() == pytest.approx(0.5, abs=0.01)


def test_resize_512x256_keeps_short_side():
    img = np.random.default_rng(0).random((256, 512, 3)).astype(np.float32)
    # shorter side already 256: the resize is the identity and the crop starts at column 144
    assert np.array_equal(resize(img, 256, 512), img)
    assert np.array_equal(resize_center_crop(img), img[16:240, 144:368])


# --- augmentation -------------------------------------------------------------

def test_identity_config():
    img = np.random.default_rng(1).random((20, 24, 3)).astype(np.float32)
    assert np.array_equal(augment(img, AugConfig.identity(), Rng(0)), img)


@given(image01)
def test_flips_are_involutions(img):
    assert np.array_equal(hflip(hflip(img)), img)
    assert np.array_equal(vflip(vflip(img)), img)
    assert np.array_equal(np.sort(hflip(img), axis=None), np.sort(img, axis=None))


def test_kernel_sums_to_one():
    for sigma in (0.1, 0.7, 2.0):
        assert abs(gaussian_kernel(13, sigma).sum() - 1) <= 1e-9


def test_blur_constant():
    img = np.full((20, 20, 3), 0.3, np.float32)
    assert np.allclose(gaussian_blur(img, 13, 1.5), 0.3, atol=1e-6)


@settings(max_examples=40)
@given(image01, st.floats(0.1, 2.0))
def test_blur_range(img, sigma):
    out = gaussian_blur(img, 13, sigma)
    assert out.min() >= img.min() - 1e-6 and out.max() <= img.max() + 1e-6


@given(image01)
def test_affine_zero_is_identity(img):
    assert np.max(np.abs(random_affine_apply(img, 0.0, (0, 0), 0.0) - img)) <= 1e-6


def test_affine_integer_translation():
    img = np.random.default_rng(2).random((12, 12, 3)).astype(np.float32)
    out = random_affine_apply(img, 0.0, (2, 1), 0.0)
    assert np.allclose(out[1:, 2:], img[:-1, :-2], atol=1e-6)
    assert not out[0].any() and not out[:, :2].any()


@settings(max_examples=30)
@given(image01)
def test_hsv_round_trip(img):
    assert np.allclose(hsv_to_rgb(rgb_to_hsv(img)), img, atol=1e-5)


def test_augment_deterministic_and_in_range():
    img = np.random.default_rng(3).random((64, 64, 3)).astype(np.float32)
    a = augment(img, AugConfig(), Rng(9, ("augment", 1, 0)))
    b = augment(img, AugConfig(), Rng(9, ("augment", 1, 0)))
    c = augment(img, AugConfig(), Rng(9, ("augment", 2, 0)))
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.min() >= 0 and a.max() <= 1


def test_aug_config_validation():
    with pytest.raises(ConfigError):
        AugConfig(hflip_p=1.5)
    with pytest.raises(ConfigError):
        AugConfig(blur_kernel=12)
    with pytest.raises(ConfigError):
        AugConfig.from_dict({"reflect_pad": True})
    assert AugConfig.from_dict(AugConfig().to_dict()) == AugConfig()


# --- statistics and normalization ---------------------------------------------

def test_stats_single_constant(tmp_path):
    stats = compute_stats(scan_dataset(constant_tree(tmp_path, [0.5])), resize_to=8, crop_to=8)
    assert np.allclose(stats.mean, 128 / 255)
    assert np.allclose(stats.std, 0.0)
    with pytest.raises(ConfigError, match="std"):
        normalize(np.zeros((2, 2, 3), np.float32), stats.mean, stats.std)


def test_stats_zero_and_one(tmp_path):
    stats = compute_stats(scan_dataset(constant_tree(tmp_path, [0.0, 1.0])), resize_to=8, crop_to=8)
    assert np.allclose(stats.mean, 0.5, atol=1e-12)
    assert np.allclose(stats.std, 0.5, atol=1e-12)
    assert stats.count == 128


def test_stats_order_independent(tmp_path):
    root = make_synthetic_dataset(tmp_path, per_class=2, size=16, classes=[0, 3, 7], splits=("train", "valid"))
    m = scan_dataset(root)
    a = compute_stats(m.split("train"), resize_to=16, crop_to=16)
    b = compute_stats(list(reversed(m.split("train"))), resize_to=16, crop_to=16, workers=3)
    assert np.allclose(a.mean, b.mean, atol=1e-12) and np.allclose(a.std, b.std, atol=1e-12)


def test_stats_empty_split(tmp_path):
    with pytest.raises(DataError):
        compute_stats(scan_dataset(constant_tree(tmp_path, [0.2])), split="valid")


def test_stats_json():
    s = Stats((0.1, 0.2, 0.3), (0.4, 0.5, 0.6), 10)
    assert Stats.from_json(s.to_json()) == s
    with pytest.raises(FormatError):
        Stats.from_json('{"mean": [1, 2]}')


def test_normalize_identity_and_centering():
    img = np.random.default_rng(4).random((5, 6, 3)).astype(np.float32)
    assert np.array_equal(normalize(img, (0, 0, 0), (1, 1, 1)), img.transpose(2, 0, 1))
    mean = (0.2, 0.4, 0.6)
    assert not normalize(np.broadcast_to(np.float32(mean), (4, 4, 3)), mean, (0.3, 0.3, 0.3)).any()


@given(image01)
def test_normalize_round_trip(img):
    mean, std = (0.485, 0.456, 0.406), (0.229, 0.224, 0.225)
    assert np.max(np.abs(denormalize(normalize(img, mean, std), mean, std) - img)) <= 1e-6


# --- batching ---------------------------------------------------------------

@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    root = make_synthetic_dataset(tmp_path_factory.mktemp("small"), per_class=1, size=40,
                                  classes=range(7), splits=("train", "valid"))
    return scan_dataset(root).split("train")


def make_ds(records, train=True):
    return ImageDataset(records, (0.5, 0.5, 0.5), (0.25, 0.25, 0.25), train=train, resize_to=36, crop_to=32)


def test_batch_sizes(small_dataset):
    sizes = [len(b.labels) for b in batches(make_ds(small_dataset), 3, rng=Rng(0))]
    assert sizes == [3, 3, 1]


def test_batches_deterministic(small_dataset):
    ds = make_ds(small_dataset)
    a = list(batches(ds, 3, rng=Rng(5), epoch=2))
    b = list(batches(make_ds(small_dataset), 3, rng=Rng(5), epoch=2))
    for x, y in zip(a, b):
        assert np.array_equal(x.x, y.x) and np.array_equal(x.labels, y.labels)
    c = list(batches(ds, 3, rng=Rng(5), epoch=3))
    assert not all(np.array_equal(x.indices, y.indices) for x, y in zip(a, c))


def test_no_shuffle_keeps_order(small_dataset):
    idx = np.concatenate([b.indices for b in batches(make_ds(small_dataset, train=False), 3, shuffle=False)])
    assert np.array_equal(idx, np.arange(7))


def test_batches_invariant_to_workers(small_dataset):
    one = list(batches(make_ds(small_dataset), 3, rng=Rng(1), epoch=4, workers=1))
    four = list(batches(make_ds(small_dataset), 3, rng=Rng(1), epoch=4, workers=4))
    for a, b in zip(one, four):
        assert np.array_equal(a.x, b.x)
        assert np.array_equal(a.labels, b.labels)


def test_validation_pipeline_has_no_randomness(small_dataset):
    ds = make_ds(small_dataset, train=False)
    a = [b.x for b in batches(ds, 4, shuffle=False)]
    b = [b.x for b in batches(make_ds(small_dataset, train=False), 4, shuffle=False)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert a[0].shape == (4, 3, 32, 32) and a[0].dtype == np.float32
