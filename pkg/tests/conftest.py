import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from helioseer.model import ModelConfig  # noqa: E402
from helioseer.pipeline import SynthConfig, TrainConfig, synth_dataset, train  # noqa: E402

# acceptance criterion -> (passed, detail); printed in the terminal summary
ACCEPTANCE: dict[str, tuple[bool, str]] = {}

# standard toy recipe: 64x64 grid, 30 synthetic days, toy model
TOY_TRAIN = TrainConfig(steps=3000, batch_size=2, lr=1e-3, seed=0)


@pytest.fixture(scope="session")
def toy_dataset():
    return synth_dataset(SynthConfig.toy())


@pytest.fixture(scope="session")
def trained_toy(toy_dataset):
    """Toy recipe trained once per session (a few minutes on one core)."""
    return train(ModelConfig.toy(), TOY_TRAIN, toy_dataset)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, (ok, detail) in ACCEPTANCE.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
