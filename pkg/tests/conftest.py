import numpy as np
import pytest

from aiqt.model import ParameterSet, TransformModel, ladder_size


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_parameter_set(n: int, rng) -> ParameterSet:
    return ParameterSet(
        n,
        rng.uniform(-np.pi, np.pi, (n, 3)),
        rng.uniform(-np.pi, np.pi, ladder_size(n)),
    )


def random_model(n: int, depth: int, rng) -> TransformModel:
    return TransformModel([random_parameter_set(n, rng) for _ in range(depth)])
