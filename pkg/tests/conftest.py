import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ouspde.basis import BasisSpec
from ouspde.operators import ConstantOperator, CovarianceField, inner_product_example

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def spec8():
    return BasisSpec(8, 256)


@pytest.fixture(scope="session")
def inner_field(spec8):
    return CovarianceField(inner_product_example(), spec8)


@pytest.fixture(scope="session")
def constant_field(spec8):
    return CovarianceField(ConstantOperator(value=1.0, kappa2=1.0), spec8)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
