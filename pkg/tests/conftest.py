import numpy as np
import pytest

from ratmoment.domain import bilinear_unit_square, build_tableau, cosine_basis


@pytest.fixture(scope="session")
def trig_tab():
    return build_tableau(cosine_basis(2), 2048)


@pytest.fixture(scope="session")
def cos3_tab():
    return build_tableau(cosine_basis(3), 2048)


@pytest.fixture(scope="session")
def square_tab():
    return build_tableau(bilinear_unit_square(), 128)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
