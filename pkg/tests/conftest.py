import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("rsdp", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("rsdp")


@pytest.fixture
def two_state_linear():
    from rsdp.model import ConstantRates, ConstantSigma, PolyDrift, RSDPModel
    return RSDPModel(ConstantRates([[0, 1.0], [2.0, 0]]), PolyDrift(A=[[[-1.0]], [[-1.0]]]),
                     ConstantSigma([[1.0]], 2))


def tanh_model(a, b, v=None, n=1, A=None):
    from rsdp.model import ConstantSigma, PolyDrift, RSDPModel, TanhRates
    N = len(a)
    v = np.ones((N, N, n)) if v is None else v
    A = [-np.eye(n)] * N if A is None else A
    return RSDPModel(TanhRates(a, b, v), PolyDrift(A=A), ConstantSigma(np.eye(n), N))
