import pytest

from promptmatch import preset
from promptmatch.providers import MockProvider, ProviderConfig, reset_scoring_calls


@pytest.fixture(autouse=True)
def _fresh_counter():
    reset_scoring_calls()
    yield


@pytest.fixture
def sst2():
    return preset("sst2")


@pytest.fixture
def small_task():
    return preset("sst2", m=4, n=5, round_max=2, h=6, top_k=3)


@pytest.fixture
def mock():
    return MockProvider(ProviderConfig(state_dim=16, seed=0))
