import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mirrorfree import _kernels_py as py
from mirrorfree import kernels

cy = pytest.importorskip("mirrorfree._ckernels")


def _params(n, seed):
    rng = np.random.default_rng(seed)
    E, A, C, B = (rng.standard_normal((n, n)) for _ in range(4))
    return E, A, rng.standard_normal(n), C, rng.standard_normal(n), B


@given(st.integers(1, 6), st.integers(1, 20), st.integers(0, 2 ** 16))
def test_backends_agree(n, rows, seed):
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((rows, 2 * n))
    E, A, b, C, d, B = _params(n, seed)
    for split in (n, 2 * n):
        np.testing.assert_allclose(cy.cubic_blocks(Z, split, 1.5, 0.5),
                                   py.cubic_blocks(Z, split, 1.5, 0.5), rtol=1e-12, atol=1e-12)
    scale = 1.0 + np.abs(py.quartic_saddle(Z, E, A, b, C, d, B)).max()
    np.testing.assert_allclose(cy.quartic_saddle(Z, E, A, b, C, d, B),
                               py.quartic_saddle(Z, E, A, b, C, d, B), atol=1e-12 * scale)
    np.testing.assert_allclose(cy.quartic_game(Z, A), py.quartic_game(Z, A), atol=1e-11)
    V = rng.standard_normal((rows, 5, 2 * n))
    dz = rng.standard_normal((rows, 2 * n))
    w = rng.random(5)
    np.testing.assert_allclose(cy.segment_sums(V, dz, w), py.segment_sums(V, dz, w), atol=1e-12)


def test_numpy_kernels_match_loops():
    rng = np.random.default_rng(0)
    n = 3
    Z = rng.standard_normal((4, 2 * n))
    E, A, b, C, d, B = _params(n, 1)

    def grad(x):
        return (E @ x) @ (E @ x) * E.T @ (E @ x) + A.T @ (A @ x - b) ** 3 + C.T @ (C @ x - d)

    want = np.array([np.concatenate([grad(z[:n]) + B @ z[n:], grad(z[n:]) - B.T @ z[:n]]) for z in Z])
    np.testing.assert_allclose(py.quartic_saddle(Z, E, A, b, C, d, B), want, rtol=1e-12)
    want = np.array([np.concatenate([4 * (z[:n] @ z[:n]) * z[:n] + A @ z[n:],
                                     4 * (z[n:] @ z[n:]) * z[n:] - A.T @ z[:n]]) for z in Z])
    np.testing.assert_allclose(py.quartic_game(Z, A), want, rtol=1e-12)


def test_backend_is_compiled_when_available():
    assert kernels.BACKEND == "cython"


def test_env_var_forces_fallback():
    env = dict(os.environ, MIRRORFREE_KERNELS="python")
    out = subprocess.run([sys.executable, "-c", "import mirrorfree; print(mirrorfree.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
