"""Synthetic image sets in the dataset directory layout, for tests and demos."""

from pathlib import Path

import numpy as np

from .data import CLASS_NAMES, SPLITS, save_image_png
from .tensor import Rng

PALETTE = np.array([
    [0.90, 0.15, 0.10],
    [0.10, 0.65, 0.20],
    [0.15, 0.25, 0.90],
    [0.95, 0.85, 0.10],
    [0.60, 0.15, 0.75],
    [0.10, 0.80, 0.85],
], dtype=np.float32)

# (texture, period in pixels, foreground palette index, background palette index)
PATTERNS = [
    ("solid", 0, 0, 0),
    ("hstripes", 16, 1, 3),
    ("vstripes", 16, 2, 3),
    ("checker", 24, 4, 1),
    ("hstripes", 48, 5, 0),
    ("vstripes", 48, 0, 2),
    ("checker", 56, 3, 2),
    ("rings", 28, 1, 4),
    ("dots", 32, 2, 0),
    ("solid", 0, 5, 5),
    ("rings", 64, 3, 5),
]


def pattern_image(label, variant=0, size=224, seed=0):
    """Deterministic (size, size, 3) image for class ``label``.

    Variants of one class share texture and colours but differ in phase and
    a little pixel noise.
    """
    texture, period, fg, bg = PATTERNS[label % len(PATTERNS)]
    rng = Rng(seed, ("synthetic", label, variant))
    phase = rng.uniform(0, max(period, 1))
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    if texture == "solid":
        mask = np.zeros((size, size), dtype=bool)
    elif texture == "hstripes":
        mask = ((yy + phase) // (period / 2)) % 2 == 0
    elif texture == "vstripes":
        mask = ((xx + phase) // (period / 2)) % 2 == 0
    elif texture == "checker":
        mask = (((yy + phase) // period) + ((xx + phase) // period)) % 2 == 0
    elif texture == "rings":
        r = np.hypot(yy - size / 2, xx - size / 2)
        mask = ((r + phase) // (period / 2)) % 2 == 0
    elif texture == "dots":
        cy = (yy + phase) % period - period / 2
        cx = (xx + phase) % period - period / 2
        mask = np.hypot(cy, cx) < period / 4
    else:
        raise ValueError(f"unknown texture {texture!r}")
    img = np.where(mask[..., None], PALETTE[fg], PALETTE[bg] * 0.55)
    if texture == "solid" and fg == 5:
        img = img * 0.5
    img = img + rng.uniform(-0.03, 0.03, img.shape).astype(np.float32)
    return np.clip(img, 0.0, 1.0).astype(np.float32)


def make_synthetic_dataset(root, per_class=2, size=224, seed=0, splits=SPLITS, classes=None):
    """Write ``per_class`` PNGs per class into every split; returns the root path.

    All splits receive the same images, so a validation pass measures how
    well the training set was fitted.
    """
    root = Path(root)
    classes = range(len(CLASS_NAMES)) if classes is None else classes
    for split in splits:
        for label in classes:
            d = root / split / CLASS_NAMES[label]
            d.mkdir(parents=True, exist_ok=True)
            for v in range(per_class):
                save_image_png(pattern_image(label, v, size, seed), d / f"img_{v:03d}.png")
    return root
