import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sketchrep import sketch_data as sd
from sketchrep.encoder import EncoderConfig, init_encoder_params


@pytest.fixture(scope="session")
def tiny_dataset():
    """4 classes x 12 samples at 32px, enough to exercise every pipeline."""
    samples, split, records = sd.generate_synthetic(
        4, 12, seed=11, quotas=sd.SplitQuotas(6, 2, 3, 1), raster_size=32)
    return samples, split, records


@pytest.fixture(scope="session")
def tiny_config():
    return EncoderConfig(raster_size=32, cnn_stages=2, cnn_base_channels=4,
                         rnn_layers=1, rnn_hidden=8, fusion_dim=16,
                         fusion_activation="sigmoid", num_classes=4)


@pytest.fixture()
def tiny_params(tiny_config):
    return init_encoder_params(tiny_config, seed=3)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(2024)
