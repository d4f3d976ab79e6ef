import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def central_diff(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar f w.r.t. every element of x."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def central_diff5(f, x: np.ndarray, h: float = 5e-4) -> np.ndarray:
    """Fourth-order central differences; tighter than the 3-point stencil
    when the target tolerance is below ~1e-7."""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        samples = []
        for step in (2 * h, h, -h, -2 * h):
            flat[i] = orig + step
            samples.append(f())
        flat[i] = orig
        f2u, f1u, f1d, f2d = samples
        gflat[i] = (-f2u + 8 * f1u - 8 * f1d + f2d) / (12 * h)
    return grad


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))
