import pytest

from boostarena.stage_game import canonical_r1, rational_benchmark


@pytest.fixture
def r1():
    return canonical_r1()


@pytest.fixture
def sigma_r(r1):
    return rational_benchmark(r1)
