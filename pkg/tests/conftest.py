import numpy as np
import pytest

from avmil.data import VideoBag
from avmil.model import ModelConfig


def random_bag(rng, M=4, T=3, d_v=6, d_a=5, C=3, bag_id="bag"):
    labels = np.full(C, -1, dtype=np.int8)
    labels[rng.integers(C)] = 1
    return VideoBag(
        id=bag_id,
        visual=rng.normal(size=(M, d_v)),
        audio=rng.normal(size=(T, d_a)),
        labels=labels,
    )


def small_config(C=3, d_v=6, d_a=5, kind="two_stream", mode="av", hidden=True, dropout=0.0):
    return ModelConfig(
        num_classes=C,
        visual_dim=d_v,
        audio_dim=d_a,
        kind=kind,
        mode=mode,
        visual_hidden=(7,) if hidden else (),
        audio_hidden=(4,) if hidden else (),
        dropout=dropout,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
