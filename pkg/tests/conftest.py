import os

import numpy as np
import pytest
import torch
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

torch.set_num_threads(1)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture(scope="session")
def tiny_dataset():
    from actlumos.clipgen import generate_dataset
    return generate_dataset(4, 5, (16, 16, 16), 0)


@pytest.fixture(scope="session")
def tiny_bank(tiny_dataset):
    from actlumos.trainer import ClipBank
    return ClipBank.from_dataset(tiny_dataset)


# Small but complete training configuration shared by trainer/cli tests.
TINY = dict(epochs=1, channels=4, head_layers=1, head_heads=1, B_kd=8, B_u=4)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
