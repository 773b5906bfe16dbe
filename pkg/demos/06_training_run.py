"""
A complete training run on synthetic data
=========================================

Two images per class with distinct colour and texture patterns. The network
should fit them within a few dozen epochs. This takes one to two minutes on a
laptop CPU; pass a smaller ``max_epochs`` to stop earlier.
"""

# %%
import tempfile
from pathlib import Path

from cookcnn.plot import history_svg
from cookcnn.synthetic import make_synthetic_dataset
from cookcnn.train import TrainConfig, train

work = Path(tempfile.mkdtemp())
root = make_synthetic_dataset(work / "data", per_class=2)

cfg = TrainConfig(data_root=str(root), out_dir=str(work / "run"), batch_size=8, max_epochs=60, seed=0)


def show(rec, is_best):
    print(f"epoch {rec.epoch:3d}  train {rec.train_loss:.3f}/{rec.train_acc:.2f}  "
          f"valid {rec.val_loss:.3f}/{rec.val_acc:.2f}{'  *' if is_best else ''}")


result = train(cfg, progress=show)

# %%
print(result.report.to_text())
(work / "run" / "curves.svg").write_text(history_svg(result.history))
print("outputs in", work / "run")
