import numpy as np
import pytest

from services.algebra_service import algebra_service
from services.solution_service import solution_service
from services.toda_service import toda_service


@pytest.fixture(scope="session")
def sl2():
    return algebra_service.build_sl(2, 2.0)


@pytest.fixture(scope="session")
def sl3():
    return algebra_service.build_sl(3, 2.0)


@pytest.fixture(scope="session")
def sl2_model():
    return toda_service.build_model(2)


@pytest.fixture(scope="session")
def sl2_model_negative():
    return toda_service.build_model(2, c=-1.0)


@pytest.fixture(scope="session")
def sl3_model():
    # sl3_symmetric_cosh(a=1) 需要 μ⁺μ⁻ = 2
    return toda_service.build_model(3, mu_plus=2.0, mu_minus=1.0)


@pytest.fixture(scope="session")
def cosh_field():
    return solution_service.liouville_cosh(1.0)


@pytest.fixture(scope="session")
def sl3_field():
    return solution_service.sl3_symmetric_cosh(1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
