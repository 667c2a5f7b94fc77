import numpy as np
import pytest

from timbrebridge.dataset import CorpusSpec, build_corpus
from timbrebridge.featurecodec import FeatureCodecSpec
from timbrebridge.network import ArchSpec


@pytest.fixture(scope="session")
def codec():
    return FeatureCodecSpec()


@pytest.fixture(scope="session")
def tiny_arch():
    # 139 parameters; small enough for exhaustive finite differences
    return ArchSpec(channels=2, width1=2, width2=3, kernel=3, noise_features=4)


@pytest.fixture(scope="session")
def small_corpus_pair(codec):
    """A small flute/violin corpus pair shared by metrics and dataset tests."""
    flute = build_corpus(CorpusSpec("flute_like", n_train=48, n_test=16, seed=7), codec)
    violin = build_corpus(CorpusSpec("violin_like", n_train=48, n_test=16, seed=8), codec)
    return flute, violin


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
