import numpy as np
import pytest

from ammgame.config import default_config


@pytest.fixture
def cfg():
    """Resolved default configuration."""
    return default_config()


@pytest.fixture
def tiny_cfg():
    """Small instance that solves in well under a second."""
    return default_config(
        grid_steps=10,
        grid_x_points=41,
        grid_control_points=5,
        engine_traders=16,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(987654321)
