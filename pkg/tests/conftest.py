"""Shared test helpers: finite-difference oracles and random instances."""

import numpy as np
import pytest


def central_difference(fn, x, h=1e-5):
    """Numerical gradient of a scalar function at x, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        bumped = x.copy()
        bumped[idx] = x[idx] + h
        hi = fn(bumped)
        bumped[idx] = x[idx] - h
        lo = fn(bumped)
        grad[idx] = (hi - lo) / (2.0 * h)
        it.iternext()
    return grad


def assert_grad_close(analytic, numeric, rel=1e-4, abs_tol=1e-6):
    """Relative comparison with an absolute floor near zero."""
    analytic = np.asarray(analytic)
    numeric = np.asarray(numeric)
    assert analytic.shape == numeric.shape
    denom = np.maximum(np.abs(numeric), abs_tol / rel)
    err = np.abs(analytic - numeric) / denom
    assert err.max() <= rel, f"max relative gradient error {err.max():.3e}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
