"""Independent reference implementations used only by the tests."""

from __future__ import annotations

import itertools

import numpy as np


def projection_by_enumeration(target, A, b, tol=1e-9):
    """Brute-force QP projection: try every active set, keep the best feasible KKT point.

    Returns ``None`` when no subset yields a feasible point.
    """
    target = np.asarray(target, float)
    A = np.atleast_2d(np.asarray(A, float)).reshape(-1, target.size)
    b = np.asarray(b, float).reshape(-1)
    best, best_val = None, np.inf
    for size in range(b.size + 1):
        for subset in itertools.combinations(range(b.size), size):
            idx = list(subset)
            if idx:
                As = A[idx]
                lam, *_ = np.linalg.lstsq(As @ As.T, As @ target - b[idx], rcond=None)
                if np.any(lam < -tol):
                    continue
                x = target - As.T @ lam
                if np.max(np.abs(As @ x - b[idx])) > 1e-7:
                    continue
            else:
                x = target.copy()
            if b.size and np.max(A @ x - b) > 1e-7:
                continue
            val = 0.5 * np.sum((x - target) ** 2)
            if val < best_val:
                best, best_val = x, val
    return best


def cofactor_wedge(vectors):
    """Generalized cross product by explicit Laplace expansion (no numpy.linalg)."""
    rows = [list(map(float, v)) for v in vectors]
    m = len(rows)

    def det(mat):
        if not mat:
            return 1.0
        if len(mat) == 1:
            return mat[0][0]
        total = 0.0
        for c in range(len(mat)):
            minor = [row[:c] + row[c + 1 :] for row in mat[1:]]
            total += (-1) ** c * mat[0][c] * det(minor)
        return total

    return np.array([(-1) ** q * det([row[:q] + row[q + 1 :] for row in rows]) for q in range(m + 1)])


def finite_diff_jacobian(fn, x, h=1e-6):
    x = np.asarray(x, float)
    f0 = np.asarray(fn(x), float)
    J = np.zeros(f0.shape + x.shape)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        J[..., i] = (np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * h)
    return J
