"""Training protocol: epoch loop, lr schedule, early stopping, best checkpoint."""

import csv
import io
import json
import logging
import os
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data import CLASS_NAMES, AugConfig, ImageDataset, Stats, batches, compute_stats, scan_dataset, write_text_atomic
from .errors import ConfigError, DataError, NumericError
from .layers import softmax_cross_entropy
from .metrics import EvalReport, confusion_matrix
from .model import PRESETS, ModelGraph, ModelSpec
from .optim import LrSchedule, make_optimizer
from .tensor import Rng

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "lr", "train_loss", "train_acc", "val_loss", "val_acc", "seconds")


@dataclass
class TrainConfig:
    data_root: str | None = None
    out_dir: str = "runs/default"
    model: object = "proposed"
    optimizer: dict = field(default_factory=lambda: {"kind": "SGD", "momentum": 0.9})
    schedule: object = "step_decay"
    batch_size: int = 32
    max_epochs: int = 150
    patience: int = 20
    seed: int = 0
    stats: object = None
    augment: object = field(default_factory=dict)
    dtype: str = "f32"
    workers: int = 1
    timing: bool = False
    resize_to: int = 256
    crop_to: int = 224

    def __post_init__(self):
        for name in ("max_epochs", "patience", "batch_size", "workers"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v!r}")

    @classmethod
    def from_dict(cls, doc, base_dir=None):
        known = {f.name for f in fields(cls)}
        for key in doc:
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
        doc = dict(doc)
        if base_dir is not None:
            for key in ("data_root", "out_dir"):
                if doc.get(key) is not None:
                    doc[key] = str((Path(base_dir) / doc[key]).resolve())
            if isinstance(doc.get("stats"), str):
                doc["stats"] = str((Path(base_dir) / doc["stats"]).resolve())
        return cls(**doc)

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {str(path)!r}: {exc}") from None
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {str(path)!r} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(doc, base_dir=path.parent)

    def model_spec(self):
        m = self.model
        if isinstance(m, ModelSpec):
            return m
        if isinstance(m, str):
            m = {"preset": m}
        if not isinstance(m, dict):
            raise ConfigError(f"model must be a preset name or an object, got {m!r}")
        if "layers" in m:
            return ModelSpec.from_dict(m)
        m = dict(m)
        name = m.pop("preset", "proposed")
        if name not in PRESETS:
            raise ConfigError(f"unknown model preset {name!r}; choose from {sorted(PRESETS)}")
        if "pool_out" in m:
            m["pool_out"] = tuple(m["pool_out"])
        try:
            return PRESETS[name](**m)
        except TypeError as exc:
            raise ConfigError(f"bad options for preset {name!r}: {exc}") from None

    def make_optimizer(self):
        opt = dict(self.optimizer)
        kind = opt.pop("kind", "SGD")
        if "betas" in opt:
            opt["betas"] = tuple(opt["betas"])
        return make_optimizer(kind, **opt)

    def lr_schedule(self):
        return LrSchedule.from_config(self.schedule)

    def aug_config(self):
        if self.augment is False:
            return AugConfig.identity()
        if not isinstance(self.augment, dict):
            raise ConfigError(f"augment must be an object or false, got {self.augment!r}")
        return AugConfig.from_dict(self.augment)

    def resolve_stats(self, manifest):
        s = self.stats
        if s is None:
            return compute_stats(manifest, "train", self.resize_to, self.crop_to, self.workers)
        if isinstance(s, str):
            try:
                return Stats.from_json(Path(s).read_text(encoding="utf-8"))
            except OSError as exc:
                raise ConfigError(f"cannot read stats file {s!r}: {exc}") from None
        if isinstance(s, dict):
            extra = set(s) - {"mean", "std"}
            if extra:
                raise ConfigError(f"unknown stats keys: {sorted(extra)}")
            return Stats(tuple(s["mean"]), tuple(s["std"]))
        raise ConfigError(f"stats must be null, a path or an object, got {s!r}")


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    seconds: float = 0.0

    def csv_row(self):
        return [str(self.epoch)] + [repr(float(getattr(self, c))) for c in HISTORY_COLUMNS[1:]]


@dataclass
class History:
    records: list = field(default_factory=list)

    def append(self, rec):
        expected = len(self.records) + 1
        if rec.epoch != expected:
            raise ValueError(f"history epochs must be contiguous: expected {expected}, got {rec.epoch}")
        self.records.append(rec)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return [getattr(r, name) for r in self.records]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for r in self.records:
            w.writerow(r.csv_row())
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        reader = csv.reader(io.StringIO(text))
        try:
            header = next(reader)
        except StopIteration:
            raise DataError("history CSV is empty") from None
        if tuple(header) != HISTORY_COLUMNS:
            raise DataError(f"unexpected history header {header}")
        hist = cls()
        for row in reader:
            if not row:
                continue
            try:
                hist.append(EpochRecord(int(row[0]), *(float(v) for v in row[1:])))
            except (ValueError, TypeError) as exc:
                raise DataError(f"bad history row {row}: {exc}") from None
        return hist


class EarlyStopping:
    """Tracks the best validation accuracy; improvement is strict (>)."""

    def __init__(self, patience=20):
        if patience < 1:
            raise ConfigError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best = None
        self.best_epoch = None
        self.epoch = 0
        self.bad_epochs = 0

    def update(self, val_accuracy):
        """Returns ``(should_stop, is_new_best)``."""
        self.epoch += 1
        if self.best is None or val_accuracy > self.best:
            self.best = val_accuracy
            self.best_epoch = self.epoch
            self.bad_epochs = 0
            return False, True
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience, False


def early_stop_update(tracker, val_accuracy):
    stop, is_new_best = tracker.update(val_accuracy)
    return ("stop" if stop else "continue"), is_new_best


def evaluate(graph, dataset, batch_size=32, workers=1):
    """Eval-mode pass over a dataset; ties in argmax go to the lowest class index."""
    if len(dataset) == 0:
        raise DataError("cannot evaluate an empty split")
    k = graph.spec.num_classes
    counts = np.zeros((k, k), dtype=np.int64)
    loss_sum = 0.0
    for batch in batches(dataset, batch_size, shuffle=False, workers=workers):
        logits = graph.forward(batch.x, train=False)
        loss, _ = softmax_cross_entropy(logits.astype(np.float64), batch.labels)
        loss_sum += loss * len(batch.labels)
        counts += confusion_matrix(batch.labels, logits.argmax(axis=1), k)
    names = list(CLASS_NAMES) if k == len(CLASS_NAMES) else [str(i) for i in range(k)]
    return EvalReport(counts, loss_sum / counts.sum(), names)


@dataclass
class TrainResult:
    history: History
    best_checkpoint: str
    best_epoch: int
    best_val_acc: float
    report: EvalReport
    stopped_early: bool


def _datasets(cfg, manifest, stats):
    train_recs = manifest.split("train")
    valid_recs = manifest.split("valid")
    if not train_recs:
        raise DataError(f"no training images under {manifest.root}")
    if not valid_recs:
        raise DataError(f"no validation images under {manifest.root}")
    aug = cfg.aug_config()
    train_ds = ImageDataset(train_recs, stats.mean, stats.std, train=True, aug=aug,
                            resize_to=cfg.resize_to, crop_to=cfg.crop_to)
    valid_ds = ImageDataset(valid_recs, stats.mean, stats.std, train=False,
                            resize_to=cfg.resize_to, crop_to=cfg.crop_to)
    return train_ds, valid_ds


def train(cfg, progress=None):
    """Run the full protocol and return a TrainResult.

    Writes ``history.csv``, ``best.ckpt``, ``report.txt`` and ``report.json``
    under ``cfg.out_dir``. Files are staged under temporary names and only
    renamed into place after the run succeeds.
    """
    # all config and data errors surface before the first epoch
    spec = cfg.model_spec()
    schedule = cfg.lr_schedule()
    optimizer = cfg.make_optimizer()
    if cfg.data_root is None:
        raise ConfigError("data_root is required")
    manifest = scan_dataset(cfg.data_root)
    stats = cfg.resolve_stats(manifest)
    train_ds, valid_ds = _datasets(cfg, manifest, stats)
    if spec.num_classes != len(manifest.class_names):
        raise ConfigError(f"model predicts {spec.num_classes} classes, dataset has {len(manifest.class_names)}")

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    staged_hist = out / ".history.csv.partial"
    staged_ckpt = out / ".best.ckpt.partial"
    staged = [staged_hist, staged_ckpt]

    graph = ModelGraph(spec, seed=cfg.seed, dtype=cfg.dtype)
    params = [p for _, p in graph.parameters()]
    rng = Rng(cfg.seed)
    tracker = EarlyStopping(cfg.patience)
    history = History()
    stopped = False
    meta_base = {
        "seed": cfg.seed,
        "optimizer": optimizer.state_dict(),
        "schedule": schedule.to_config(),
        "stats": {"mean": list(stats.mean), "std": list(stats.std)},
        "batch_size": cfg.batch_size,
        "augment": cfg.aug_config().to_dict(),
        "resize_to": cfg.resize_to,
        "crop_to": cfg.crop_to,
    }
    try:
        with open(staged_hist, "w", encoding="utf-8", newline="\n") as hist_fh:
            hist_fh.write(",".join(HISTORY_COLUMNS) + "\n")
            for epoch in range(1, cfg.max_epochs + 1):
                t0 = time.perf_counter()
                lr = schedule(epoch)
                loss_sum, correct, seen = 0.0, 0, 0
                for b, batch in enumerate(batches(train_ds, cfg.batch_size, shuffle=True, rng=rng,
                                                  epoch=epoch, workers=cfg.workers)):
                    logits = graph.forward(batch.x, train=True, rng=rng.child("dropout", epoch, b))
                    loss, dlogits = softmax_cross_entropy(logits, batch.labels)
                    if not np.isfinite(loss):
                        raise NumericError(f"non-finite training loss at epoch {epoch}", epoch=epoch)
                    graph.backward(dlogits)
                    optimizer.step(params, graph.gradients(), lr)
                    n = len(batch.labels)
                    loss_sum += loss * n
                    correct += int((logits.argmax(axis=1) == batch.labels).sum())
                    seen += n
                val = evaluate(graph, valid_ds, cfg.batch_size, cfg.workers)
                if not np.isfinite(val.loss):
                    raise NumericError(f"non-finite validation loss at epoch {epoch}", epoch=epoch)
                rec = EpochRecord(epoch, lr, loss_sum / seen, correct / seen, val.loss, val.accuracy,
                                  round(time.perf_counter() - t0, 3) if cfg.timing else 0.0)
                history.append(rec)
                hist_fh.write(",".join(rec.csv_row()) + "\n")
                hist_fh.flush()
                stop, is_best = tracker.update(val.accuracy)
                if is_best:
                    save_checkpoint(graph, {**meta_base, "epoch": epoch, "best_val_acc": val.accuracy},
                                    staged_ckpt)
                if progress is not None:
                    progress(rec, is_best)
                log.info("epoch %d lr %.0e train %.4f/%.3f val %.4f/%.3f%s", epoch, lr, rec.train_loss,
                         rec.train_acc, rec.val_loss, rec.val_acc, " *" if is_best else "")
                if stop:
                    stopped = True
                    break

        best = load_checkpoint(staged_ckpt)
        report = evaluate(best, valid_ds, cfg.batch_size, cfg.workers)
        os.replace(staged_hist, out / "history.csv")
        os.replace(staged_ckpt, out / "best.ckpt")
        write_text_atomic(out / "report.txt", report.to_text())
        write_text_atomic(out / "report.json", report.to_json())
    except BaseException:
        for p in staged:
            if p.exists():
                p.unlink()
        raise
    return TrainResult(history, str(out / "best.ckpt"), tracker.best_epoch, tracker.best, report, stopped)
