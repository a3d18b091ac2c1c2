import logging

import numpy as np
import pytest

from haar_averager.engine.quad import QuadConfig


@pytest.fixture
def rng():
    return np.random.default_rng(7)


@pytest.fixture
def quad_cfg():
    return QuadConfig()


@pytest.fixture(autouse=True)
def _reset_root_handlers():
    """The CLI reconfigures the root logger on captured streams; drop those handlers afterwards."""
    root = logging.getLogger()
    before = list(root.handlers)
    level = root.level
    yield
    for handler in list(root.handlers):
        if handler not in before:
            root.removeHandler(handler)
    root.setLevel(level)
