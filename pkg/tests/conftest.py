from functools import lru_cache

import pytest
from hypothesis import HealthCheck, settings

from shubin_lab.operator import ShubinParams, eigenbasis

settings.register_profile("lab", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("lab")


@lru_cache(maxsize=None)
def cached_basis(k: int, m: int, s: float = 1.0, n: int = 256):
    return eigenbasis(ShubinParams(k, m, s), n)


@pytest.fixture
def basis():
    return cached_basis
