import numpy as np
import pytest

from roughdyadic.models import RateCheckSpec, RhoParams
from roughdyadic.rough.dyadic_paths import generate


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def small_path():
    return generate(2, 8, 7)


@pytest.fixture
def rho_params() -> RhoParams:
    return RhoParams(p=2.5, gamma=0.5)


@pytest.fixture
def quick_spec() -> RateCheckSpec:
    """A reduced rate-check configuration for the default (non-slow) suite."""
    return RateCheckSpec(
        dim=2,
        samples=400,
        seed=3,
        m_range=(2, 3, 4, 5),
        n_range=(2, 3, 4, 5, 6, 7),
        chunk_size=200,
        tol=0.5,
    )


def random_tensor(rng: np.random.Generator, dim: int):
    from roughdyadic.rough.tensor_algebra import GroupTensor2

    return GroupTensor2(rng.standard_normal(dim), rng.standard_normal((dim, dim)))
