import numpy as np
import pytest

from crossnorm.model import CrossModalModel, ModelConfig


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def tiny_config(**overrides):
    """32x32 / width-4 model: every architectural feature at minimal cost."""
    defaults = dict(input_resolution=32, base_width=4, seed=7)
    defaults.update(overrides)
    return ModelConfig(**defaults)


@pytest.fixture
def tiny_model():
    return CrossModalModel(tiny_config())
