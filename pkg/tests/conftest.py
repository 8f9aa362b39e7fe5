import numpy as np
import pytest


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run full-size reconstruction experiments")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full-size experiment, only runs with --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def _no_run_ledger(monkeypatch):
    """Keep the run ledger off unless a test turns it on."""
    from app import config
    monkeypatch.setitem(config.Config, "MASKRECON_RECORD_RUNS", False)


def haar_matrix_1d(n: int) -> np.ndarray:
    """Single-level orthonormal Haar analysis matrix: lowpass rows, then highpass rows."""
    W = np.zeros((n, n))
    for k in range(n // 2):
        W[k, 2 * k] = W[k, 2 * k + 1] = 1.0 / np.sqrt(2.0)
        W[n // 2 + k, 2 * k] = 1.0 / np.sqrt(2.0)
        W[n // 2 + k, 2 * k + 1] = -1.0 / np.sqrt(2.0)
    return W


def dense_haar2(image: np.ndarray, levels: int) -> np.ndarray:
    """Mallat-layout multilevel Haar analysis built from explicit matrices."""
    out = np.array(image, dtype=float)
    side = out.shape[0]
    for _ in range(levels):
        W = haar_matrix_1d(side)
        out[:side, :side] = W @ out[:side, :side] @ W.T
        side //= 2
    return out


def planted_instance(rng, rows: int, cols: int, sparsity: int):
    """Column-normalized Gaussian H with a planted ``sparsity``-sparse solution."""
    H = rng.standard_normal((rows, cols))
    H /= np.linalg.norm(H, axis=0)
    s_true = np.zeros(cols)
    support = rng.choice(cols, sparsity, replace=False)
    s_true[support] = rng.standard_normal(sparsity)
    return H, s_true, H @ s_true
