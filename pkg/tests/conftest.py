import numpy as np
import pytest

from kvmpc.field import FixedPointCodec, PrimeField


@pytest.fixture(scope="session")
def field():
    return PrimeField()


@pytest.fixture(scope="session")
def codec(field):
    return FixedPointCodec(field)


@pytest.fixture(scope="session")
def tiny_field():
    return PrimeField(101)


@pytest.fixture()
def rng():
    return np.random.default_rng(0xC0FFEE)
