"""Small dense linear-algebra helpers shared across the package."""

import numpy as np

PSD_TOL = 1e-10


def sym(a):
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + a.T)


def psd_floor(a, tol=PSD_TOL):
    """Symmetrize and clip eigenvalues in ``[-tol, 0)`` to zero.

    Eigenvalues below ``-tol`` are left alone so that genuinely indefinite
    input stays visible to callers.
    """
    a = sym(a)
    if a.size == 0:
        return a
    w, v = np.linalg.eigh(a)
    if np.all(w >= 0):
        return a
    w = np.where((w < 0) & (w >= -tol), 0.0, w)
    return sym((v * w) @ v.T)


def psd_sqrt(a):
    """Symmetric square root of a PSD matrix (negative eigenvalues clipped)."""
    a = sym(a)
    w, v = np.linalg.eigh(a)
    w = np.clip(w, 0.0, None)
    return sym((v * np.sqrt(w)) @ v.T)


def min_eig(a):
    a = sym(a)
    if a.size == 0:
        return np.inf
    return float(np.linalg.eigvalsh(a)[0])


def is_psd(a, tol=PSD_TOL):
    return min_eig(a) >= -tol


def solve_psd(k, rhs, tol=1e-12):
    """Solve ``k x = rhs`` for symmetric ``k``.

    Returns ``(x, singular)``. A numerically singular ``k`` falls back to the
    minimum-norm least-squares solution, flagged through ``singular``.
    """
    k = sym(k)
    w = np.linalg.eigvalsh(k) if k.size else np.zeros(0)
    scale = max(1.0, float(np.max(np.abs(w))) if w.size else 1.0)
    if w.size and np.min(np.abs(w)) > tol * scale:
        return np.linalg.solve(k, rhs), False
    return np.linalg.pinv(k, rcond=tol, hermitian=True) @ rhs, True


def block_slices(sizes):
    """Consecutive slices for a list of block sizes."""
    out, start = [], 0
    for s in sizes:
        out.append(slice(start, start + s))
        start += s
    return out
