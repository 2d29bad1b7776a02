"""Small dense linear algebra: symmetric eigendecomposition, PSD square roots
and sample moments.

The eigensolver is the classical row-cyclic Jacobi method, compiled with
numba. Rotations are applied in a fixed order with scalar arithmetic only, so
results are bit-identical across runs and BLAS thread counts.
"""

import numba
import numpy as np

from .errors import NegativeEigenvalue, NoConvergence, NotSquare, NotSymmetric, TooFewSamples

__all__ = ["sym_eigen", "sqrtm_psd", "mean_and_cov"]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_SWEEPS = 100
DEFAULT_CLAMP = 1e-10


def _check_symmetric(a, tol):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {a.shape}")
    scale = np.max(np.abs(a)) if a.size else 0.0
    asym = np.max(np.abs(a - a.T)) if a.size else 0.0
    if asym > tol * scale:
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds {tol:.1e} * max|a| = {tol * scale:.3e}")
    return a


@numba.njit(cache=True)
def _jacobi(a, target, max_sweeps):
    """Row-cyclic Jacobi on ``a`` in place. Returns ``(v, sweeps)``;
    ``sweeps == -1`` signals non-convergence."""
    n = a.shape[0]
    v = np.eye(n)
    for sweep in range(max_sweeps + 1):
        off = 0.0
        for i in range(n):
            for j in range(n):
                if i != j:
                    off += a[i, j] * a[i, j]
        if np.sqrt(off) <= target:
            return v, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                # overflow-free tangent of the rotation angle; sign(0) is +1
                t = 2.0 * apq / (abs(diff) + np.hypot(diff, 2.0 * apq))
                if diff < 0.0:
                    t = -t
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for r in range(n):
                    arp = a[r, p]
                    arq = a[r, q]
                    a[r, p] = c * arp - s * arq
                    a[r, q] = s * arp + c * arq
                for r in range(n):
                    apr = a[p, r]
                    aqr = a[q, r]
                    a[p, r] = c * apr - s * aqr
                    a[q, r] = s * apr + c * aqr
                a[p, q] = 0.0
                a[q, p] = 0.0
                for r in range(n):
                    vrp = v[r, p]
                    vrq = v[r, q]
                    v[r, p] = c * vrp - s * vrq
                    v[r, q] = s * vrp + c * vrq
    return v, -1


def sym_eigen(a, tol=DEFAULT_TOL, max_sweeps=DEFAULT_MAX_SWEEPS):
    """Eigendecomposition of a real symmetric matrix by cyclic Jacobi sweeps.

    Args:
        a: Square symmetric matrix.
        tol: Relative tolerance. Used both for the symmetry check
            (``max|a - a.T| <= tol * max|a|``) and as the stopping rule
            (off-diagonal Frobenius norm ``<= tol * ||a||_F``).
        max_sweeps: Sweep limit before :class:`NoConvergence` is raised.

    Returns:
        ``(eigenvalues, eigenvectors)`` with eigenvalues sorted in descending
        order and eigenvectors stored as columns, so that
        ``a ~= V @ diag(w) @ V.T``.
    """
    a = np.array(_check_symmetric(a, tol), dtype=np.float64, order="C")
    target = tol * np.sqrt(float(np.sum(a * a)))
    v, sweeps = _jacobi(a, target, max_sweeps)
    if sweeps < 0:
        raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.diag(a).copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def sqrtm_psd(a, clamp=DEFAULT_CLAMP, tol=DEFAULT_TOL):
    """Symmetric square root of a positive semi-definite matrix.

    Eigenvalues in ``[-clamp * scale, 0)`` are treated as rounding noise and
    set to zero, where ``scale = max(1, ||a||_F)``. Anything more negative
    raises :class:`NegativeEigenvalue`.
    """
    w, v = sym_eigen(a, tol=tol)
    scale = max(1.0, float(np.sqrt(np.sum(np.asarray(a, dtype=np.float64) ** 2))))
    if w.size and w[-1] < -clamp * scale:
        raise NegativeEigenvalue(f"eigenvalue {w[-1]:.3e} below -{clamp:.1e} * {scale:.3e}")
    root = np.sqrt(np.clip(w, 0.0, None))
    s = (v * root) @ v.T
    return _mirror_upper(s)


def _mirror_upper(s):
    upper = np.triu(s)
    return upper + np.triu(s, 1).T


def mean_and_cov(rows):
    """Per-column mean and unbiased sample covariance of ``rows`` (n x d).

    The covariance is computed from centered data, and only its upper triangle
    is kept and then mirrored, so ``cov[i, j] == cov[j, i]`` holds bit for bit.
    """
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if n < 2:
        raise TooFewSamples(f"need at least 2 samples, got {n}")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = (centered.T @ centered) / (n - 1)
    return mean, _mirror_upper(cov)
