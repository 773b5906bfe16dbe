"""
Preprocessing and augmentation
==============================

Images are resized so the shorter side is 256, centre-cropped to 224 and, for
training, passed through flips, colour jitter, a random affine warp and a
Gaussian blur with a 13-pixel kernel. All randomness comes from a counter
based stream, so sample ``i`` of epoch ``e`` always gets the same transform.
"""

# %%
import tempfile
from pathlib import Path

import numpy as np

from cookcnn.data import AugConfig, augment, resize_center_crop, save_image_png
from cookcnn.synthetic import pattern_image
from cookcnn.tensor import Rng

img = resize_center_crop(pattern_image(7, 0, size=300))
print(img.shape, img.dtype, float(img.min()), float(img.max()))

# %%
cfg = AugConfig()
print(cfg)

out = Path(tempfile.mkdtemp()) / "preview"
out.mkdir()
save_image_png(img, out / "original.png")
stream = Rng(0)
for i in range(6):
    save_image_png(augment(img, cfg, stream.child("augment", 1, i)), out / f"augmented_{i:02d}.png")
print("wrote previews to", out)

# %% Same stream, same picture.
a = augment(img, cfg, Rng(0).child("augment", 1, 0))
b = augment(img, cfg, Rng(0).child("augment", 1, 0))
print("reproducible:", np.array_equal(a, b))

# %% A configuration with everything switched off is the identity.
print("identity:", np.array_equal(augment(img, AugConfig.identity(), stream), img))
