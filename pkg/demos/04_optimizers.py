"""
Eight optimizers on a one-dimensional quadratic
===============================================

f(w) = w^2 / 2 has gradient w. Starting from w = 1 with lr = 0.1, every rule
except Adadelta gets below 0.01 within 200 steps. Adadelta's step size does
not scale with lr, so it only creeps downward.
"""

# %%
import numpy as np

from cookcnn.optim import OPTIMIZERS, LrSchedule, make_optimizer

for kind in OPTIMIZERS:
    opt = make_optimizer(kind)
    w = np.array([1.0])
    for _ in range(200):
        opt.step([w], [w.copy()], 0.1)
    print(f"{kind:<9} w = {w[0]: .6f}   {opt.hyper}")

# %% The step-decay schedule used for SGD.
sched = LrSchedule.step_decay()
print({e: sched(e) for e in (1, 54, 55, 70, 71, 80, 81, 85, 86, 90, 91, 150)})
print("rate changes at epochs", sched.change_epochs(150))
