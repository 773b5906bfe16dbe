import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

from cookcnn.cli import main
from cookcnn.synthetic import make_synthetic_dataset


def write_config(path, **doc):
    path.write_text(json.dumps(doc, indent=2), encoding="utf-8")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def overfit_data(tmp_path_factory):
    """22 images at 224x224, two per class, mirrored into train and valid."""
    return make_synthetic_dataset(tmp_path_factory.mktemp("overfit") / "data")


@dataclass
class OverfitRun:
    code: int
    out_dir: Path
    seconds: float


def _overfit_run(tmp_path_factory, overfit_data, tag):
    work = tmp_path_factory.mktemp(tag)
    cfg = write_config(work / "config.json", data_root=str(overfit_data), out_dir="out",
                       batch_size=8, max_epochs=150, seed=0,
                       optimizer={"kind": "SGD", "momentum": 0.9}, schedule="step_decay")
    t0 = time.perf_counter()
    code = main(["train", "--config", str(cfg), "--quiet"])
    return OverfitRun(code, work / "out", time.perf_counter() - t0)


@pytest.fixture(scope="session")
def overfit_run(tmp_path_factory, overfit_data):
    """The scripted overfit run, driven through the command line. Takes a couple of minutes."""
    return _overfit_run(tmp_path_factory, overfit_data, "run_a")


@pytest.fixture(scope="session")
def overfit_rerun(tmp_path_factory, overfit_data):
    return _overfit_run(tmp_path_factory, overfit_data, "run_b")


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
