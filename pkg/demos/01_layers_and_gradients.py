"""
Layers and their backward passes
================================

Every layer in cookcnn has a hand-written backward pass. This script builds a
few of them, runs them forward, and compares the analytic gradients with
central finite differences.
"""

# %%
import numpy as np

from cookcnn import layers as L
from cookcnn.gradcheck import format_report, run_suite

rng = np.random.default_rng(0)

# %% A 3x3 convolution whose kernel is a centred delta copies its input.
w = np.zeros((1, 1, 3, 3))
w[0, 0, 1, 1] = 1.0
x = rng.uniform(-1, 1, (1, 1, 4, 4))
print("delta conv is identity:", np.array_equal(L.Conv2d(w, np.zeros(1)).forward(x), x))

# %% Max pooling routes the gradient to the single winner of each window.
pool = L.MaxPool2d()
print(pool.forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), train=True))
print(pool.backward(np.ones((1, 1, 1, 1))))

# %% The adaptive pool can also upsample: a 3x3 map becomes 5x5.
grid = np.arange(1.0, 10.0).reshape(1, 1, 3, 3)
print(L.AdaptiveAvgPool2d((5, 5)).forward(grid)[0, 0])

# %% Finite-difference check of a dense layer, in float64.
dense = L.Dense(rng.normal(size=(3, 4)), rng.normal(size=4))
print("dense relative error:", L.grad_check(dense, rng.uniform(-1, 1, (2, 3))))

# %% The full suite: every layer type plus a tiny network, over five seeds.
print(format_report(run_suite(seeds=range(5))))
