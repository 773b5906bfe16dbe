"""
Confusion matrices and classification reports
=============================================
"""

# %%
import numpy as np

from cookcnn.data import CLASS_NAMES
from cookcnn.metrics import EvalReport, confusion_matrix

rng = np.random.default_rng(0)
y_true = rng.integers(0, 11, 500)
# a classifier that is right about two thirds of the time
y_pred = np.where(rng.random(500) < 0.67, y_true, rng.integers(0, 11, 500))

report = EvalReport(confusion_matrix(y_true, y_pred), loss=1.1)
print(report.to_text())

# %% Rows of the normalized matrix are per-class recall.
print(np.round(report.normalized[:3], 2))
for name, recall in zip(CLASS_NAMES[:3], np.diag(report.normalized)):
    print(f"{name:<14}recall {recall:.2f}")
