"""
The proposed network and its parameter budget
=============================================

Six conv blocks of width 16-32-32-64-128-128, an adaptive average pool to 5x5,
dropout and one dense layer: 290,283 trainable parameters.
"""

# %%
import numpy as np

from cookcnn.model import ModelGraph, count_params, param_breakdown, preset_proposed, preset_vgg16

spec = preset_proposed()
for label, n in param_breakdown(spec):
    print(f"{label:<14}{n:>8}")
print("total", count_params(spec))

# %% Activation shapes on a 224x224 input.
for desc, shape in zip(spec.layers, spec.shape_trace()):
    print(f"{type(desc).__name__:<16}{shape}")

# %% Ablation variants from the same preset.
print("no batch-norm:", count_params(preset_proposed(with_batchnorm=False)))
for out in (3, 5, 7):
    print(f"pool {out}x{out}:", count_params(preset_proposed(pool_out=(out, out))))
print("VGG16 for comparison:", count_params(preset_vgg16()))

# %% The spec is a plain JSON document.
print(spec.to_json()[:300], "...")

# %% An untrained network starts from a zero output layer, so every class is equally likely.
graph = ModelGraph(spec, seed=0)
logits = graph.forward(np.random.default_rng(0).normal(size=(2, 3, 224, 224)).astype(np.float32))
print(logits)
