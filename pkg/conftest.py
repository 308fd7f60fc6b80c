"""Shared fixtures: small corpora, partitions and training configs."""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), "srcs"))

import pytest

from config import load_config, synth_config, train_config
from dataset import auto_protocol, generate_synthetic, split_partitions
from numerics import make_rng

# Six speakers: four train, one dev, one eval
TINY_CORPUS = {
    "seed": "0",
    "n_speakers": "6",
    "bona_per_speaker": "12",
    "spoof_per_attack": "18",
    "n_attacks": "3",
    "feature_dim": "8",
    "n_train_speakers": "4",
    "n_dev_speakers": "1",
    "enroll_per_speaker": "3",
}

TINY_TRAINING = {
    "epochs": "3",
    "batch_size": "8",
    "hidden_dims": "16",
    "embedding_dim": "8",
    "lr0": "1e-3",
}


def tiny_config(**overrides) -> dict[str, str]:
    """Resolved raw config for the tiny corpus, with extra overrides."""

    values = {**TINY_CORPUS, **TINY_TRAINING}
    values.update({key: str(value) for key, value in overrides.items()})
    return load_config(None, values)


@pytest.fixture
def tiny_corpus():
    return generate_synthetic(synth_config(tiny_config()))


@pytest.fixture
def tiny_partitions(tiny_corpus):
    protocol = auto_protocol(tiny_corpus, 4, 1, 3)
    return split_partitions(tiny_corpus, protocol, make_rng(0))


@pytest.fixture
def make_train_cfg():
    """Factory: make_train_cfg(objective="samo", epochs=3, ...)."""

    def _make(**overrides):
        return train_config(tiny_config(**overrides))

    return _make
