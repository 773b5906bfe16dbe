"""Dataset discovery, decoding, preprocessing, augmentation and batching.

Images are float32 arrays of shape (H, W, 3) with values in [0, 1]. Model
inputs are channel-major (3, H, W) after ``normalize``.
"""

import io
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

from .errors import ConfigError, DataError, DecodeError, FormatError, ManifestError
from .tensor import Rng

log = logging.getLogger(__name__)

CLASS_NAMES = (
    "creamy_paste", "diced", "floured", "grated", "juiced", "julienne",
    "mixed", "other", "peeled", "sliced", "whole",
)
SPLITS = ("train", "valid")
IMAGE_EXTENSIONS = (".png", ".jpg", ".jpeg")
LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)


@dataclass(frozen=True)
class Record:
    path: str
    label: int
    split: str


@dataclass
class Manifest:
    records: list
    class_names: tuple = CLASS_NAMES
    root: str | None = None
    warnings: list = field(default_factory=list)

    def split(self, name):
        return [r for r in self.records if r.split == name]

    def counts(self):
        """{split: [count per class]}"""
        out = {s: [0] * len(self.class_names) for s in SPLITS}
        for r in self.records:
            out[r.split][r.label] += 1
        return out

    def report(self):
        lines = [f"{'class':<14}" + "".join(f"{s:>8}" for s in SPLITS)]
        counts = self.counts()
        for i, name in enumerate(self.class_names):
            lines.append(f"{name:<14}" + "".join(f"{counts[s][i]:>8}" for s in SPLITS))
        lines.append(f"{'total':<14}" + "".join(f"{sum(counts[s]):>8}" for s in SPLITS))
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


def scan_dataset(root, splits=SPLITS):
    """Index ``<root>/<split>/<class_name>/<image>`` into a Manifest."""
    root = Path(root)
    if not root.is_dir():
        raise DataError(f"dataset root {str(root)!r} does not exist")
    records, warnings = [], []
    for split in splits:
        split_dir = root / split
        if not split_dir.is_dir():
            raise DataError(f"missing split directory {str(split_dir)!r}")
        for entry in sorted(split_dir.iterdir()):
            if entry.is_dir() and entry.name not in CLASS_NAMES:
                raise ManifestError(
                    f"unknown class directory {entry.name!r} in {str(split_dir)!r}; "
                    f"expected one of {', '.join(CLASS_NAMES)}")
        for label, name in enumerate(CLASS_NAMES):
            class_dir = split_dir / name
            files = []
            if class_dir.is_dir():
                files = sorted(p for p in class_dir.iterdir()
                               if p.is_file() and p.suffix.lower() in IMAGE_EXTENSIONS)
            if not files:
                warnings.append(f"{split}/{name} has no images")
            records += [Record(str(p), label, split) for p in files]
    for w in warnings:
        log.warning(w)
    return Manifest(records, root=str(root), warnings=warnings)


def decode_image(data):
    """PNG or JPEG bytes -> (H, W, 3) float32 in [0, 1]."""
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        fmt = "PNG"
    elif data[:3] == b"\xff\xd8\xff":
        fmt = "JPEG"
    else:
        raise DecodeError("not a PNG or JPEG payload", offset=0)
    try:
        with PILImage.open(io.BytesIO(data), formats=[fmt]) as img:
            img.load()
            if img.mode in ("I;16", "I;16B", "I;16L", "I"):
                arr = np.asarray(img, dtype=np.float32) / 65535.0
                arr = np.repeat(arr[..., None], 3, axis=2)
            else:
                arr = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except (OSError, SyntaxError, ValueError) as exc:
        raise DecodeError(f"corrupt {fmt} data: {exc}", offset=len(data)) from None
    return np.ascontiguousarray(arr)


def load_image(path):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from None
    try:
        return decode_image(data)
    except DecodeError as exc:
        raise DecodeError(f"{path}: {exc}") from None


def resample_matrix(in_size, out_size):
    """Triangle-filter resampling weights (out_size x in_size), rows summing to 1.

    Upscaling reduces to bilinear interpolation with half-pixel centers and
    clamped edges; downscaling widens the filter to avoid aliasing.
    """
    scale = in_size / out_size
    support = max(scale, 1.0)
    centers = (np.arange(out_size) + 0.5) * scale
    src = np.arange(in_size) + 0.5
    w = np.clip(1.0 - np.abs(src[None, :] - centers[:, None]) / support, 0.0, None)
    w /= w.sum(axis=1, keepdims=True)
    return w


def resize(img, height, width):
    h, w, _ = img.shape
    if (h, w) == (height, width):
        return img.copy()
    rh = resample_matrix(h, height).astype(np.float32)
    rw = resample_matrix(w, width).astype(np.float32)
    rows = (rh @ img.reshape(h, w * 3)).reshape(height, w, 3)
    out = np.matmul(rw, rows)  # broadcast over output rows
    return np.clip(out, 0.0, 1.0, out=out)


def resize_center_crop(img, resize_to=256, crop_to=224):
    """Scale the shorter side to ``resize_to`` then cut the central square."""
    if crop_to > resize_to:
        raise ConfigError(f"crop {crop_to} is larger than resize target {resize_to}")
    h, w, _ = img.shape
    if h <= w:
        nh, nw = resize_to, int(resize_to * w / h)
    else:
        nh, nw = int(resize_to * h / w), resize_to
    img = resize(img, nh, nw)
    top = int(round((nh - crop_to) / 2.0))
    left = int(round((nw - crop_to) / 2.0))
    return np.ascontiguousarray(img[top:top + crop_to, left:left + crop_to])


@dataclass
class AugConfig:
    hflip_p: float = 0.7
    vflip_p: float = 0.3
    brightness: float = 0.2
    contrast: float = 0.2
    saturation: float = 0.2
    hue: float = 0.1
    rotation: float = 20.0
    translate: float = 0.1
    shear: float = 10.0
    blur_kernel: int = 13
    blur_sigma: tuple = (0.1, 2.0)
    blur_p: float = 1.0

    def __post_init__(self):
        self.blur_sigma = tuple(self.blur_sigma)
        for name in ("hflip_p", "vflip_p", "blur_p"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ConfigError(f"{name} must be a probability, got {v}")
        for name in ("brightness", "contrast", "saturation", "rotation", "translate", "shear"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if not 0 <= self.hue <= 0.5:
            raise ConfigError(f"hue must be in [0, 0.5], got {self.hue}")
        if self.blur_kernel < 1 or self.blur_kernel % 2 == 0:
            raise ConfigError(f"blur kernel size must be odd and positive, got {self.blur_kernel}")
        lo, hi = self.blur_sigma
        if not 0 < lo <= hi:
            raise ConfigError(f"blur sigma range must satisfy 0 < lo <= hi, got {self.blur_sigma}")

    @classmethod
    def identity(cls):
        return cls(hflip_p=0, vflip_p=0, brightness=0, contrast=0, saturation=0, hue=0,
                   rotation=0, translate=0, shear=0, blur_p=0)

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown augmentation keys: {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["blur_sigma"] = list(self.blur_sigma)
        return d


def hflip(img):
    return img[:, ::-1].copy()


def vflip(img):
    return img[::-1].copy()


def rgb_to_hsv(rgb):
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    maxc = rgb.max(axis=-1)
    minc = rgb.min(axis=-1)
    v = maxc
    delta = maxc - minc
    s = np.where(maxc > 0, delta / np.where(maxc > 0, maxc, 1), 0)
    safe = np.where(delta > 0, delta, 1)
    rc = (maxc - r) / safe
    gc = (maxc - g) / safe
    bc = (maxc - b) / safe
    h = np.where(maxc == r, bc - gc, np.where(maxc == g, 2.0 + rc - bc, 4.0 + gc - rc))
    h = np.where(delta > 0, (h / 6.0) % 1.0, 0.0)
    return np.stack([h, s, v], axis=-1).astype(rgb.dtype)


def hsv_to_rgb(hsv):
    h, s, v = hsv[..., 0], hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0)
    f = h * 6.0 - i
    p = v * (1 - s)
    q = v * (1 - s * f)
    t = v * (1 - s * (1 - f))
    i = i.astype(np.int64) % 6
    choices = [
        np.stack([v, t, p], -1), np.stack([q, v, p], -1), np.stack([p, v, t], -1),
        np.stack([p, q, v], -1), np.stack([t, p, v], -1), np.stack([v, p, q], -1),
    ]
    out = np.choose(i[..., None], choices)
    return out.astype(hsv.dtype)


def adjust_brightness(img, factor):
    return np.clip(img * np.float32(factor), 0, 1)


def adjust_contrast(img, factor):
    mean = np.float32((img @ LUMA).mean())
    return np.clip(img * np.float32(factor) + mean * np.float32(1 - factor), 0, 1)


def adjust_saturation(img, factor):
    gray = (img @ LUMA)[..., None]
    return np.clip(img * np.float32(factor) + gray * np.float32(1 - factor), 0, 1)


def adjust_hue(img, shift):
    if shift == 0:
        return img
    hsv = rgb_to_hsv(img)
    hsv[..., 0] = (hsv[..., 0] + np.float32(shift)) % 1.0
    return hsv_to_rgb(hsv)


def affine_matrix(angle, translate, shear, center):
    """Inverse map (output (row, col) -> input (row, col)) and offset.

    The forward transform rotates by ``angle`` degrees and shears x by
    ``shear`` degrees about ``center`` then translates by ``translate``
    = (dx, dy) pixels.
    """
    a = math.radians(angle)
    s = math.radians(shear)
    rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
    sh = np.array([[1.0, math.tan(s)], [0.0, 1.0]])
    fwd_xy = rot @ sh
    inv_xy = np.linalg.inv(fwd_xy)
    # swap to (row, col) = (y, x) ordering
    perm = np.array([[0, 1], [1, 0]])
    inv_rc = perm @ inv_xy @ perm
    c = np.array([center[0], center[1]], dtype=np.float64)
    t = np.array([translate[1], translate[0]], dtype=np.float64)
    offset = c - inv_rc @ (c + t)
    return inv_rc, offset


def random_affine_apply(img, angle, translate, shear):
    if angle == 0 and shear == 0 and translate == (0, 0):
        return img.copy()
    h, w, _ = img.shape
    mat, offset = affine_matrix(angle, translate, shear, ((h - 1) * 0.5, (w - 1) * 0.5))
    out = np.empty_like(img)
    for ch in range(img.shape[2]):
        ndimage.affine_transform(img[..., ch], mat, offset=offset, output=out[..., ch],
                                 order=1, mode="constant", cval=0.0, prefilter=False)
    return out


def gaussian_kernel(size, sigma):
    half = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - half
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img, size, sigma):
    k = gaussian_kernel(size, sigma).astype(np.float32)
    out = ndimage.correlate1d(img, k, axis=0, mode="nearest")
    return ndimage.correlate1d(out, k, axis=1, mode="nearest")


def augment(img, cfg, rng):
    """Random train-time transforms in a fixed order; deterministic under ``rng``.

    hflip -> vflip -> brightness -> contrast -> saturation -> hue -> affine -> blur.
    Every random draw happens regardless of which transforms fire, so a
    sample's stream does not depend on the configuration's probabilities.
    """
    u = rng.random(12)
    h, w, _ = img.shape
    if u[0] < cfg.hflip_p:
        img = hflip(img)
    if u[1] < cfg.vflip_p:
        img = vflip(img)

    def factor(x, amount):
        return 1.0 + amount * (2.0 * x - 1.0)

    if cfg.brightness:
        img = adjust_brightness(img, factor(u[2], cfg.brightness))
    if cfg.contrast:
        img = adjust_contrast(img, factor(u[3], cfg.contrast))
    if cfg.saturation:
        img = adjust_saturation(img, factor(u[4], cfg.saturation))
    if cfg.hue:
        img = adjust_hue(img, cfg.hue * (2.0 * u[5] - 1.0))

    angle = cfg.rotation * (2.0 * u[6] - 1.0)
    tx = round(cfg.translate * w * (2.0 * u[7] - 1.0))
    ty = round(cfg.translate * h * (2.0 * u[8] - 1.0))
    shear = cfg.shear * (2.0 * u[9] - 1.0)
    img = random_affine_apply(img, angle, (tx, ty), shear)

    if u[10] < cfg.blur_p:
        lo, hi = cfg.blur_sigma
        img = gaussian_blur(img, cfg.blur_kernel, lo + (hi - lo) * u[11])
    return img


def normalize(img, mean, std):
    """(H, W, 3) image -> (3, H, W) float32 tensor, ``(x - mean) / std`` per channel."""
    mean = np.asarray(mean, dtype=np.float32)
    std = np.asarray(std, dtype=np.float32)
    if np.any(std <= 0):
        raise ConfigError(
            f"normalization std must be positive per channel, got {std.tolist()}; "
            "override the statistics in the config")
    out = (img - mean) / std
    return np.ascontiguousarray(out.transpose(2, 0, 1))


def denormalize(tensor, mean, std):
    mean = np.asarray(mean, dtype=np.float32)
    std = np.asarray(std, dtype=np.float32)
    return tensor.transpose(1, 2, 0) * std + mean


@dataclass
class Stats:
    mean: tuple
    std: tuple
    count: int = 0

    def to_json(self):
        return json.dumps({"mean": list(self.mean), "std": list(self.std), "pixels": self.count},
                          indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
            mean = tuple(float(v) for v in doc["mean"])
            std = tuple(float(v) for v in doc["std"])
        except (ValueError, KeyError, TypeError) as exc:
            raise FormatError(f"malformed stats file: {exc}") from None
        if len(mean) != 3 or len(std) != 3:
            raise FormatError("stats file must hold 3 means and 3 standard deviations")
        return cls(mean, std, int(doc.get("pixels", 0)))


def compute_stats(manifest, split="train", resize_to=256, crop_to=224, workers=1):
    """Per-channel mean and population std over preprocessed pixels of a split."""
    records = manifest.split(split) if isinstance(manifest, Manifest) else list(manifest)
    if not records:
        raise DataError(f"no images in the {split!r} split")

    def moments(rec):
        img = resize_center_crop(load_image(rec.path), resize_to, crop_to).astype(np.float64)
        flat = img.reshape(-1, 3)
        return flat.shape[0], flat.mean(axis=0), ((flat - flat.mean(axis=0)) ** 2).sum(axis=0)

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        parts = list(pool.map(moments, records))
    # Chan et al. pairwise merge, in record order
    n, mean, m2 = 0, np.zeros(3), np.zeros(3)
    for nb, mb, m2b in parts:
        delta = mb - mean
        tot = n + nb
        mean = mean + delta * nb / tot
        m2 = m2 + m2b + delta ** 2 * n * nb / tot
        n = tot
    std = np.sqrt(m2 / n)
    return Stats(tuple(mean.tolist()), tuple(std.tolist()), n)


@dataclass
class SampleBatch:
    x: np.ndarray
    labels: np.ndarray
    indices: np.ndarray


class ImageDataset:
    """One split ready for the model: load, resize/crop, (augment), normalize.

    Preprocessed images are cached in memory. The augmentation stream of
    sample ``i`` in ``epoch`` is ``rng.child("augment", epoch, i)``.
    """

    def __init__(self, records, mean, std, train=False, aug=None, resize_to=256, crop_to=224, cache=True):
        self.records = list(records)
        self.mean = tuple(mean)
        self.std = tuple(std)
        normalize(np.zeros((1, 1, 3), np.float32), self.mean, self.std)
        self.train = train
        self.aug = aug if aug is not None else AugConfig()
        self.resize_to = resize_to
        self.crop_to = crop_to
        self._cache = {} if cache else None

    def __len__(self):
        return len(self.records)

    @property
    def labels(self):
        return np.array([r.label for r in self.records], dtype=np.int64)

    def image(self, i):
        if self._cache is not None and i in self._cache:
            return self._cache[i]
        img = resize_center_crop(load_image(self.records[i].path), self.resize_to, self.crop_to)
        if self._cache is not None:
            self._cache[i] = img
        return img

    def sample(self, i, rng=None, epoch=0):
        img = self.image(i)
        if self.train:
            if rng is None:
                raise ConfigError("training samples need an rng for augmentation")
            img = augment(img, self.aug, rng.child("augment", epoch, i))
        return normalize(img, self.mean, self.std)


def batches(dataset, batch_size=32, shuffle=True, rng=None, epoch=1, workers=1):
    """Yield SampleBatches; the order depends only on (seed, epoch)."""
    if batch_size < 1:
        raise ConfigError(f"batch_size must be >= 1, got {batch_size}")
    n = len(dataset)
    if shuffle:
        if rng is None:
            raise ConfigError("shuffling needs an rng")
        order = rng.child("shuffle", epoch).permutation(n)
    else:
        order = np.arange(n)
    labels = dataset.labels
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            if pool is None:
                xs = [dataset.sample(int(i), rng, epoch) for i in idx]
            else:
                xs = list(pool.map(lambda i: dataset.sample(int(i), rng, epoch), idx))
            yield SampleBatch(np.stack(xs), labels[idx], np.asarray(idx))
    finally:
        if pool is not None:
            pool.shutdown()


def save_image_png(img, path):
    arr = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    PILImage.fromarray(arr, "RGB").save(path, format="PNG", optimize=False)


def write_text_atomic(path, text):
    """Write ``text`` to ``path`` via a temp file and rename."""
    path = os.fspath(path)
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)
