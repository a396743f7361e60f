import warnings

import numpy as np
import pytest

from critgw import SeededStreamFamily, builtin_model, perron_eigen


@pytest.fixture(scope="session")
def model_a():
    return builtin_model("a")


@pytest.fixture(scope="session")
def model_b():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        return builtin_model("b")


@pytest.fixture(scope="session")
def model_c():
    return builtin_model("c")


@pytest.fixture(scope="session")
def spectral_a(model_a):
    return perron_eigen(model_a)


@pytest.fixture(scope="session")
def spectral_b(model_b):
    return perron_eigen(model_b)


@pytest.fixture(scope="session")
def spectral_c(model_c):
    return perron_eigen(model_c)


@pytest.fixture()
def streams():
    return SeededStreamFamily(master_seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
