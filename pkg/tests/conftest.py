import numpy as np
import pytest
import threadpoolctl

from freqalign.autodiff import Tensor

FD_STEP = 1e-5


@pytest.fixture(scope="session", autouse=True)
def single_threaded_blas():
    # Runtime budgets are stated for one CPU core; besides, OpenBLAS workers
    # spin after large matmuls and starve the small ops the training and toy
    # loops are made of.
    with threadpoolctl.threadpool_limits(limits=1):
        yield


def central_difference(fn, arrays, which, step=FD_STEP):
    """Numerical gradient of scalar fn(*arrays) w.r.t. arrays[which]."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    grad = np.zeros_like(base[which])
    for idx in np.ndindex(*base[which].shape):
        plus = [a.copy() for a in base]
        minus = [a.copy() for a in base]
        plus[which][idx] += step
        minus[which][idx] -= step
        grad[idx] = (fn(*plus) - fn(*minus)) / (2 * step)
    return grad


def max_rel_error(analytic, numeric, floor=1e-6):
    scale = np.maximum(np.abs(numeric), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def grad_of(fn, arrays, which):
    """Analytic gradient of scalar fn(tensors...) w.r.t. arrays[which]."""
    tensors = [Tensor(a, requires_grad=(i == which)) for i, a in enumerate(arrays)]
    fn(*tensors).backward()
    return tensors[which].grad
