import numpy as np
import pytest

from hetqnd.decoherence import rb87_d2


@pytest.fixture(scope="session")
def rb87():
    return rb87_d2()


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
