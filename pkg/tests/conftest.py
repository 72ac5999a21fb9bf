import numpy as np
import pytest

from anystereo.config import MatcherConfig, tuned_decoder_config
from anystereo.synthetic import generate


@pytest.fixture(scope="session")
def small_scene():
    """Constant-disparity scene small enough for per-test matching."""
    return generate("constant", hw=(128, 192), seed=11, d0=13.0)


@pytest.fixture(scope="session")
def plane_scene():
    return generate("plane", hw=(128, 192), seed=12, a=0.03, b=-0.01, c=18.0)


@pytest.fixture(scope="session")
def small_cfg():
    return MatcherConfig(d_max=48, decoder=tuned_decoder_config(), threads=1)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260816)
