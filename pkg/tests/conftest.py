import numpy as np
import pytest

from autoconv import _backend


@pytest.fixture
def rng():
    return np.random.default_rng(20241115)


BACKENDS = [_backend.fallback]
if _backend.compiled:
    BACKENDS.insert(0, _backend.kernels)


@pytest.fixture(params=BACKENDS, ids=lambda k: k.NAME)
def backend(request, monkeypatch):
    """Run a test against each available kernel implementation."""
    from autoconv import evaluation

    monkeypatch.setattr(evaluation, "kernels", request.param)
    return request.param


def brute_samples(v):
    """L_j by the double loop over all pairs (n, m) with n + m = j - 1."""
    n = len(v)
    L = [0.0] * (2 * n + 1)
    for j in range(2 * n + 1):
        for a in range(n):
            for b in range(n):
                if a + b == j - 1:
                    L[j] += v[a] * v[b]
    return np.array(L)


def unique_argmax_vector(rng, n, gap=1e-3):
    """Random positive vector whose autoconvolution peak is strictly unique."""
    from autoconv.evaluation import autoconv_samples

    while True:
        v = rng.random(n) + 0.05
        L = np.sort(autoconv_samples(v).samples)
        if n == 1 or L[-1] - L[-2] > gap * L[-1]:
            return v
