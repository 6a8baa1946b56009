import hypothesis
import numpy as np
import pytest

from mbtfit import AtmmppParams, build_atmmpp, preset_model

hypothesis.settings.register_profile(
    "suite", deadline=None, max_examples=25,
    suppress_health_check=[hypothesis.HealthCheck.too_slow],
    derandomize=True)
hypothesis.settings.load_profile("suite")


@pytest.fixture(scope="session")
def ex1():
    return preset_model("example1")


@pytest.fixture(scope="session")
def ex2():
    return preset_model("example2")


@pytest.fixture(scope="session")
def ex3():
    return preset_model("example3")


@pytest.fixture(scope="session")
def n1_model():
    def make(lam=2.0, mu=0.5):
        return build_atmmpp(AtmmppParams(gamma=np.zeros(0),
                                         mu=np.array([mu]),
                                         lam=np.array([lam])))
    return make
