import numpy as np
import pytest

from lpmkl import _jit


@pytest.fixture(params=["numba", "numpy"])
def backend(request, monkeypatch):
    """Run the test once per solver backend."""
    if request.param == "numba" and not _jit.HAVE_NUMBA:
        pytest.skip("numba not installed")
    monkeypatch.setattr(_jit, "USE_NUMBA", request.param == "numba")
    return request.param


def random_psd(rng, n, rank=None):
    A = rng.standard_normal((n, rank or n))
    return A @ A.T


def balanced_labels(rng, n):
    y = np.where(np.arange(n) < n // 2, 1.0, -1.0)
    return rng.permutation(y)


def rbf_instance(seed, n=100, M=5, d=5):
    """Two noisy classes and M Gaussian kernels of spread-out widths."""
    from lpmkl.kernels import KernelStack, rbf_kernel

    rng = np.random.default_rng(seed)
    y = balanced_labels(rng, n)
    X = rng.standard_normal((n, d)) + 0.6 * y[:, None] * (np.arange(d) < 2)
    widths = d * 2.0 ** np.linspace(-3, 3, M)
    return KernelStack([rbf_kernel(X, w, name=f"rbf{m}") for m, w in enumerate(widths)]), y


# one (number, passed, detail) tuple per acceptance criterion, printed at the end
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
