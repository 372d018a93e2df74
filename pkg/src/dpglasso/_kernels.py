"""Hot inner loops of the coordinate-descent solver.

Two interchangeable implementations are kept side by side: numba-compiled
kernels and a pure-numpy fallback. The active one is chosen at import time
from the ``DPGLASSO_BACKEND`` environment variable (``numba`` or ``numpy``);
if unset, numba is used when it can be imported.
"""

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

_requested = os.environ.get("DPGLASSO_BACKEND", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ImportError(f"DPGLASSO_BACKEND must be 'numba' or 'numpy', got {_requested!r}")
BACKEND = "numpy" if (_requested == "numpy" or not HAVE_NUMBA) else "numba"


# ---------------------------------------------------------------------------
# numpy fallback


def lasso_cd_numpy(A, b, lam, beta, tol, max_iter):
    """Cyclic coordinate descent for ``0.5 b'Ab - b'x + lam*|x|_1``.

    ``beta`` is updated in place and used as the warm start. Returns the
    number of passes performed.
    """
    m = b.shape[0]
    grad = A @ beta
    for it in range(max_iter):
        max_step = 0.0
        for k in range(m):
            akk = A[k, k]
            old = beta[k]
            r = b[k] - grad[k] + akk * old
            if r > lam:
                new = (r - lam) / akk
            elif r < -lam:
                new = (r + lam) / akk
            else:
                new = 0.0
            if new != old:
                step = new - old
                grad += A[:, k] * step
                beta[k] = new
                if abs(step) > max_step:
                    max_step = abs(step)
        if max_step < tol:
            return it + 1
    return max_iter


def glasso_sweep_numpy(S, W, B, lam, inner_tol, max_inner):
    """One pass over all columns of the block coordinate scheme.

    ``W`` (working covariance) and ``B`` (column j holds the lasso
    coefficients of column j, ``B[j, j] == 0``) are updated in place.
    Returns the largest absolute change of an entry of ``W``.
    """
    p = S.shape[0]
    max_dw = 0.0
    idx = np.arange(p)
    for j in range(p):
        rest = idx != j
        W11 = W[np.ix_(rest, rest)]
        beta = B[rest, j].copy()
        lasso_cd_numpy(W11, S[rest, j], lam, beta, inner_tol, max_inner)
        B[rest, j] = beta
        w12 = W11 @ beta
        dw = np.max(np.abs(w12 - W[rest, j]))
        if dw > max_dw:
            max_dw = dw
        W[rest, j] = w12
        W[j, rest] = w12
    return max_dw


# ---------------------------------------------------------------------------
# numba kernels

if HAVE_NUMBA:

    @njit(cache=True)
    def lasso_cd_numba(A, b, lam, beta, tol, max_iter):
        m = b.shape[0]
        grad = np.zeros(m)
        for i in range(m):
            s = 0.0
            for k in range(m):
                s += A[i, k] * beta[k]
            grad[i] = s
        for it in range(max_iter):
            max_step = 0.0
            for k in range(m):
                akk = A[k, k]
                old = beta[k]
                r = b[k] - grad[k] + akk * old
                if r > lam:
                    new = (r - lam) / akk
                elif r < -lam:
                    new = (r + lam) / akk
                else:
                    new = 0.0
                if new != old:
                    step = new - old
                    for i in range(m):
                        grad[i] += A[i, k] * step
                    beta[k] = new
                    if abs(step) > max_step:
                        max_step = abs(step)
            if max_step < tol:
                return it + 1
        return max_iter

    @njit(cache=True)
    def glasso_sweep_numba(S, W, B, lam, inner_tol, max_inner):
        p = S.shape[0]
        m = p - 1
        W11 = np.empty((m, m))
        s12 = np.empty(m)
        beta = np.empty(m)
        max_dw = 0.0
        for j in range(p):
            # gather the (p-1)x(p-1) block without row/column j
            r = 0
            for a in range(p):
                if a == j:
                    continue
                c = 0
                for bb in range(p):
                    if bb == j:
                        continue
                    W11[r, c] = W[a, bb]
                    c += 1
                s12[r] = S[a, j]
                beta[r] = B[a, j]
                r += 1
            lasso_cd_numba(W11, s12, lam, beta, inner_tol, max_inner)
            r = 0
            for a in range(p):
                if a == j:
                    continue
                B[a, j] = beta[r]
                w = 0.0
                for c in range(m):
                    w += W11[r, c] * beta[c]
                dw = abs(w - W[a, j])
                if dw > max_dw:
                    max_dw = dw
                W[a, j] = w
                W[j, a] = w
                r += 1
        return max_dw

else:  # pragma: no cover
    lasso_cd_numba = None
    glasso_sweep_numba = None


def _pick(name):
    if BACKEND == "numba":
        return globals()[name + "_numba"]
    return globals()[name + "_numpy"]


def lasso_cd(A, b, lam, beta, tol, max_iter):
    return _pick("lasso_cd")(A, b, float(lam), beta, float(tol), int(max_iter))


def glasso_sweep(S, W, B, lam, inner_tol, max_inner):
    return _pick("glasso_sweep")(S, W, B, float(lam), float(inner_tol), int(max_inner))
