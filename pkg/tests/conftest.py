"""
Shared fixtures of the test suites.
"""

from collections.abc import Callable, Iterator

import numpy as np
import pytest

from app.config.config import get_settings
from app.schemas.arrays import FloatArray
from app.schemas.chain import NormalMixturePrior, PriorConfig
from app.schemas.mixture import GumbelMixture
from app.schemas.model import DDCModel, EmaxConfig
from app.services.mixture import make_mixture

ModelFactory = Callable[..., DDCModel]
MixtureFactory = Callable[..., GumbelMixture]


@pytest.fixture(autouse=True, scope="session")
def console_only_logging() -> Iterator[None]:
    """Keep command logs out of the working directory."""
    patch = pytest.MonkeyPatch()
    patch.setenv("LOG_TO_FILE", "false")
    get_settings.cache_clear()
    yield
    patch.undo()
    get_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240917)


@pytest.fixture
def tight_config() -> EmaxConfig:
    return EmaxConfig(tol=1e-13, switch_tol=1e-2, max_newton=60)


def _stochastic(
    rng: np.random.Generator, shape: tuple[int, ...]
) -> FloatArray:
    raw: FloatArray = rng.uniform(0.1, 1.0, size=shape)
    return raw / raw.sum(axis=-1, keepdims=True)


@pytest.fixture
def random_model() -> ModelFactory:
    """Random model with utilities linear in n_theta parameters."""

    def build(
        seed: int = 0,
        K: int = 5,
        J: int = 2,
        n_theta: int = 3,
        beta: float = 0.9,
    ) -> DDCModel:
        generator = np.random.default_rng(seed)
        return DDCModel(
            name="custom",
            beta=beta,
            transitions=_stochastic(generator, (J + 1, K, K)),
            design=generator.normal(size=(K, J + 1, n_theta)),
            theta=generator.normal(scale=0.5, size=n_theta),
        )

    return build


@pytest.fixture
def random_mixture() -> MixtureFactory:
    """Random valid mixture with m components in J coordinates."""

    def build(seed: int = 0, m: int = 2, J: int = 2) -> GumbelMixture:
        generator = np.random.default_rng(seed)
        return make_mixture(
            _stochastic(generator, (m,)),
            generator.normal(size=(m, J)),
            generator.uniform(0.5, 1.5, size=m),
            float(generator.uniform(0.7, 1.3)),
        )

    return build


@pytest.fixture
def small_prior() -> PriorConfig:
    return PriorConfig(
        dirichlet_concentration=4.0,
        a_m=0.05,
        tau=5.0,
        m_max=4,
        log_scale=NormalMixturePrior.normal(0.0, 0.5),
        location=[NormalMixturePrior.normal(0.0, 2.0)],
        log_component_scale=NormalMixturePrior.normal(0.0, 1.0),
        theta={0: NormalMixturePrior.normal(0.0, 2.0)},
    )
