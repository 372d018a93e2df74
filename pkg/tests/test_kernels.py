import os
import subprocess
import sys

import numpy as np
import pytest

from dpglasso import _kernels
from dpglasso.estimator import LassoConfig, glasso_cd

from conftest import random_spd

needs_numba = pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")


@needs_numba
def test_lasso_cd_backends_agree(rng):
    for _ in range(5):
        A = random_spd(rng, 7)
        b = rng.standard_normal(7)
        b1, b2 = np.zeros(7), np.zeros(7)
        n1 = _kernels.lasso_cd_numpy(A, b, 0.2, b1, 1e-12, 10_000)
        n2 = _kernels.lasso_cd_numba(A, b, 0.2, b2, 1e-12, 10_000)
        np.testing.assert_allclose(b1, b2, atol=1e-13)
        assert n1 == n2


@needs_numba
def test_glasso_sweep_backends_agree(rng):
    S = np.ascontiguousarray(random_spd(rng, 12))
    out = []
    for sweep in (_kernels.glasso_sweep_numpy, _kernels.glasso_sweep_numba):
        W = S + 0.1 * np.eye(12)
        B = np.zeros((12, 12))
        dws = [sweep(S, W, B, 0.1, 1e-10, 1000) for _ in range(4)]
        out.append((W, B, dws))
    np.testing.assert_allclose(out[0][0], out[1][0], atol=1e-12)
    np.testing.assert_allclose(out[0][1], out[1][1], atol=1e-12)
    np.testing.assert_allclose(out[0][2], out[1][2], atol=1e-12)


def _run_with_backend(value):
    env = dict(os.environ, DPGLASSO_BACKEND=value)
    code = ("import numpy as np; from dpglasso import _kernels; from dpglasso.estimator import *;"
            "S = np.array([[1.0, 0.4, 0.1], [0.4, 1.0, 0.3], [0.1, 0.3, 1.0]]);"
            "t, _ = glasso_cd(S, LassoConfig(lam=0.05, tol=1e-10));"
            "print(_kernels.BACKEND); print(repr(t.tolist()))")
    return subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)


def test_env_flag_selects_backend():
    res = {}
    for value in ("numpy", "numba") if _kernels.HAVE_NUMBA else ("numpy",):
        r = _run_with_backend(value)
        assert r.returncode == 0, r.stderr
        backend, theta = r.stdout.splitlines()
        assert backend == value
        res[value] = np.array(eval(theta))
    if len(res) == 2:
        np.testing.assert_allclose(res["numpy"], res["numba"], atol=1e-12)


def test_env_flag_rejects_unknown():
    r = _run_with_backend("fortran")
    assert r.returncode != 0 and "DPGLASSO_BACKEND" in r.stderr


def test_dispatch_uses_active_backend(rng):
    S = random_spd(rng, 5)
    theta, diag = glasso_cd(S, LassoConfig(lam=0.1, tol=1e-10))
    assert diag.converged and _kernels.BACKEND in ("numba", "numpy")
