import numpy as np
import pytest

from perquad.kernels import KernelApprox
from perquad.spectra import BorderUnivariate, Geometric, IsotropicLog, MixedLog, truncate_at


@pytest.fixture(scope="session")
def geo():
    return truncate_at(Geometric(1.0, 2.0), 120)


@pytest.fixture(scope="session")
def geo_kernel(geo):
    return KernelApprox.from_truncation(geo)


@pytest.fixture(scope="session")
def border():
    return truncate_at(BorderUnivariate(1.0), 2048)


@pytest.fixture(scope="session")
def iso2():
    return truncate_at(IsotropicLog(2, 1.0), 24)


@pytest.fixture(scope="session")
def mixed2():
    return truncate_at(MixedLog(2, 1.0), 400)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
