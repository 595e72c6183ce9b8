import numpy as np
import pytest

from splat360.geometry import ImageDims


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def dims():
    return ImageDims(1024, 512)


@pytest.fixture
def small_dims():
    return ImageDims(128, 64)


def fd_jacobian(f, x, h=1e-5, wrap=None):
    """Central finite differences of f: R^n -> R^m at x.

    wrap optionally gives per-output periods for wrap-aware differences
    (None entries mean no wrapping).
    """
    x = np.asarray(x, dtype=np.float64)
    f0 = np.asarray(f(x), dtype=np.float64)
    J = np.zeros(f0.shape + x.shape)
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx.flat[i] = h
        d = np.asarray(f(x + dx)) - np.asarray(f(x - dx))
        if wrap is not None:
            for out_i, period in enumerate(wrap):
                if period:
                    d[out_i] = (d[out_i] + period / 2) % period - period / 2
        J[..., i] = d / (2 * h)
    return J
