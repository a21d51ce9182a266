import numpy as np
import pytest

from multidefer import _kernels


@pytest.fixture(params=["numpy", "numba"])
def backend(request, monkeypatch):
    """Run the test once per kernel implementation."""
    table = _kernels.NUMPY_KERNELS if request.param == "numpy" else _kernels.NUMBA_KERNELS
    monkeypatch.setattr(_kernels, "_ACTIVE", table)
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
