import numpy as np
import pytest

from paraspeech.audio import AudioConfig
from paraspeech.corpus import FeatureStore, ingest
from paraspeech.toydata import make_toy_corpus


@pytest.fixture(scope="session")
def audio_cfg():
    return AudioConfig()


@pytest.fixture(scope="session")
def toy_corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("toy")
    make_toy_corpus(root, seed=7)
    return root


@pytest.fixture(scope="session")
def toy_store(toy_corpus_dir, tmp_path_factory, audio_cfg) -> FeatureStore:
    out = tmp_path_factory.mktemp("store")
    return ingest(toy_corpus_dir / "manifest.jsonl", audio_cfg, out, seed=7)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
