import pytest
from threadpoolctl import threadpool_limits


@pytest.fixture(autouse=True, scope="session")
def single_threaded_blas():
    # the workloads are many small factorizations; BLAS threading only adds
    # sync overhead and perturbs timing-based assertions
    with threadpool_limits(limits=1):
        yield
