import os
import sys

import pytest
import torch
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

GOLDEN = os.path.join(os.path.dirname(__file__), "golden")


@pytest.fixture(autouse=True)
def _single_thread():
    torch.set_num_threads(1)
    yield


@pytest.fixture
def golden_dir():
    return GOLDEN


@pytest.fixture(scope="session")
def informative():
    """The small qualifier-informative FI dataset used by several modules."""
    from hyperind.data import InductiveData
    from hyperind.synthetic import qualifier_informative

    bundle, ents, rels, feats = qualifier_informative(num_train=120, num_test=30, feature_dim=16, seed=1)
    return InductiveData(bundle, ents, rels, feats)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
