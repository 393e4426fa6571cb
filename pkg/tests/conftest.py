import numpy as np
import pytest

from taylorlab.cross_section import (CrossSectionSpec, build_spectrum, decompose_shear,
                                     profile_cosine, profile_plug)


@pytest.fixture(scope="session")
def interval16():
    return build_spectrum(CrossSectionSpec("interval", modes=16))


@pytest.fixture(scope="session")
def interval8():
    return build_spectrum(CrossSectionSpec("interval", modes=8))


@pytest.fixture(scope="session")
def cos1(interval16):
    """V = 1 + cos(pi y): r = 0."""
    return decompose_shear(profile_cosine((1.0,)), interval16)


@pytest.fixture(scope="session")
def cos2(interval16):
    """V = 1 + cos(pi y) + cos(2 pi y)/2: r != 0."""
    return decompose_shear(profile_cosine((1.0, 0.5)), interval16)


@pytest.fixture(scope="session")
def plug16(interval16):
    return decompose_shear(profile_plug(2.0), interval16)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
