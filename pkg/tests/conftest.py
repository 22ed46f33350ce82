import numpy as np
import pytest


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timed tests measure execution."""
    from tdolab import _kernels

    v = np.zeros(8)
    out = np.empty(8, np.complex128)
    _kernels.sl_run_split(1.0 + 0.0j, v, 1e-7, 1e-3, 1.0, out)
    _kernels.sl_run_real(1.0, 0.0, v, 1e-7, 1e-3, 1.0, np.empty(8),
                         np.empty(8))
    _kernels.sl_run_rk4(1.0 + 0.0j, v, 1e-7, 1e-3, 1.0, out)

    buf = np.full(249, np.sqrt(3.0), np.complex128)
    env = np.empty(64, np.complex128)
    _kernels.tdo_open_loop(64, 1e-7, buf.copy(), 0, 0j, np.exp(-1.0), 2.0,
                           1.0, _kernels.TUNE_STATIC, 1.0 + 0.0j,
                           np.empty(0), 0.0, 0.0, 1e-3, 1.0, 1.0 + 0.0j,
                           0.0, np.empty(0), env)
    for mode in (_kernels.PLL_SCALAR, _kernels.PLL_VECTOR):
        _kernels.pll_closed_loop(
            mode, 64, 1e-7, buf.copy(), 0, 0j, np.exp(-1.0), 2.0, 1.0,
            0.0, np.empty(0), np.zeros(64), 100.0, 2 * np.pi,
            np.sqrt(5.0), 1e-3, 1e-3, 1.0, 250, np.empty(0), 10,
            np.empty(64), np.empty(64), np.empty(64, np.complex128),
            np.empty(7), np.empty(7), np.empty(7))
