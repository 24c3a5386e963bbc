import numpy as np
import pytest

from aoi_online.delay_models import Deterministic, LeCamPerturbed, LogNormal, Uniform


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


MODELS = {
    "uniform": Uniform(0.0, 1.0),
    "uniform_shifted": Uniform(0.5, 2.0),
    "deterministic": Deterministic(1.0),
    "lognormal": LogNormal(1.0, 1.3),
    "lognormal_trunc": LogNormal.truncated(1.0, 1.3),
    "lecam": LeCamPerturbed(0.1611, 0.5, 100),
}
