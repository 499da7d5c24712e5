import numpy as np
import pytest

from critgw import (
    asymmetric_two_type,
    binary_fission,
    coupled_pair,
    skewed_pair,
    validate_spec,
)


@pytest.fixture(scope="session")
def e1():
    return binary_fission()


@pytest.fixture(scope="session")
def e2():
    return coupled_pair()


@pytest.fixture(scope="session")
def e3():
    return skewed_pair()


@pytest.fixture(scope="session")
def e4():
    return asymmetric_two_type()


@pytest.fixture(scope="session")
def eigens(e1, e2, e3, e4):
    """name -> (spec, EigenData, quad_form_at_u) for the four benchmarks."""
    out = {}
    for name, spec in [("e1", e1), ("e2", e2), ("e3", e3), ("e4", e4)]:
        report = validate_spec(spec)
        assert report.ok
        out[name] = (spec, report.eigen, report.quad_form_at_u)
    return out


def pytest_addoption(parser):
    parser.addoption(
        "--workers",
        action="store",
        default="2",
        help="worker processes for the heavy acceptance runs",
    )


@pytest.fixture(scope="session")
def workers(request):
    return int(request.config.getoption("--workers"))
