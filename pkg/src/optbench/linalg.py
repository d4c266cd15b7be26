"""Dense small-scale linear algebra: Haar-orthogonal sampling, Householder QR,
a cyclic Jacobi eigensolver, and Euclidean box projection.

Everything here is a pure function of its inputs (plus an explicitly passed
seeded generator where randomness is involved).
"""

from __future__ import annotations

import numpy as np

# Module tolerances; every routine accepts overrides.
JACOBI_MAX_SWEEPS = 100
JACOBI_TOL_FACTOR = 1e-12
JACOBI_MAX_DIM = 512
SYMMETRY_TOL = 1e-9


class EigenConvergenceError(RuntimeError):
    """Raised when the Jacobi sweep budget is exhausted."""


def householder_qr(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factor a (m x n, m >= n) as q @ r with orthonormal columns in q.

    The factorization is normalized so that diag(r) >= 0, which makes the
    identity factor as q = I, r = I and makes the Gaussian -> QR map produce
    Haar-distributed orthogonal matrices without a separate sign fix.
    Rank-deficient input is permitted; exhausted columns leave zeros on the
    diagonal of r.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2:
        raise ValueError("expected a 2-d array")
    m, n = a.shape
    if m < n:
        raise ValueError(f"need rows >= cols, got {m}x{n}")
    r = a.copy()
    q = np.eye(m)
    for k in range(n):
        x = r[k:, k]
        norm_x = float(np.linalg.norm(x))
        if norm_x == 0.0:
            continue
        v = x.copy()
        v[0] += norm_x if v[0] >= 0 else -norm_x
        v /= np.linalg.norm(v)
        r[k:, k:] -= 2.0 * np.outer(v, v @ r[k:, k:])
        q[:, k:] -= 2.0 * np.outer(q[:, k:] @ v, v)
    r = np.triu(r[:n, :n])
    q = q[:, :n]
    signs = np.where(np.diag(r) < 0.0, -1.0, 1.0)
    r *= signs[:, None]
    q *= signs[None, :]
    return q, r


def haar_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """Sample a d x d orthogonal matrix uniformly (Haar measure).

    Gaussian matrix -> QR with the R diagonal forced non-negative; the
    resulting Q is exactly Haar-distributed.
    """
    if d < 1:
        raise ValueError("dimension must be >= 1")
    g = rng.standard_normal((d, d))
    q, _ = householder_qr(g)
    return q


def haar_frame(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Sample an n x k matrix with orthonormal columns, uniform on the Stiefel
    manifold (equivalently the first k columns of a Haar n x n matrix)."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    g = rng.standard_normal((n, k))
    q, _ = householder_qr(g)
    return q


def jacobi_eigh(
    s: np.ndarray,
    *,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
    tol_factor: float = JACOBI_TOL_FACTOR,
    symmetry_tol: float = SYMMETRY_TOL,
) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecompose a symmetric matrix with cyclic Jacobi rotations.

    Returns (q, lam) with s = q.T @ diag(lam) @ q, eigenvalues sorted in
    descending order and the ROWS of q holding the matching orthonormal
    eigenvectors.  Off-diagonal entries below tol_factor * max|s| are left
    untouched, so exact zero rows/columns keep axis-aligned eigenvectors.
    """
    a = np.array(s, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    n = a.shape[0]
    if n > JACOBI_MAX_DIM:
        raise ValueError(f"dimension {n} exceeds supported maximum {JACOBI_MAX_DIM}")
    if n == 0:
        raise ValueError("empty matrix")
    asym = float(np.max(np.abs(a - a.T))) if n > 1 else 0.0
    if asym >= symmetry_tol:
        raise ValueError(f"matrix is not symmetric (max |s - s.T| = {asym:g})")
    a = 0.5 * (a + a.T)
    scale = float(np.max(np.abs(a)))
    v = np.eye(n)
    if scale == 0.0 or n == 1:
        lam = np.diag(a).copy()
        order = np.argsort(-lam, kind="stable")
        return v.T[order], lam[order]
    thresh = tol_factor * scale
    converged = False
    for _ in range(max_sweeps):
        upper = np.triu(np.abs(a), k=1)
        if float(upper.max()) <= thresh:
            converged = True
            break
        for p in range(n - 1):
            for q_ in range(p + 1, n):
                apq = a[p, q_]
                if abs(apq) <= thresh:
                    continue
                app = a[p, p]
                aqq = a[q_, q_]
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s_ = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q_].copy()
                a[:, p] = c * col_p - s_ * col_q
                a[:, q_] = s_ * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q_, :].copy()
                a[p, :] = c * row_p - s_ * row_q
                a[q_, :] = s_ * row_p + c * row_q
                a[p, p] = app - t * apq
                a[q_, q_] = aqq + t * apq
                a[p, q_] = 0.0
                a[q_, p] = 0.0
                v_p = v[:, p].copy()
                v_q = v[:, q_].copy()
                v[:, p] = c * v_p - s_ * v_q
                v[:, q_] = s_ * v_p + c * v_q
    else:
        converged = float(np.triu(np.abs(a), k=1).max()) <= thresh
    if not converged:
        raise EigenConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    lam = np.diag(a).copy()
    order = np.argsort(-lam, kind="stable")
    return v.T[order], lam[order]


def project_box(theta: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the axis-aligned box [lo, hi] (coordinate-wise
    clamping); idempotent by construction."""
    theta = np.asarray(theta, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if lo.shape != theta.shape or hi.shape != theta.shape:
        raise ValueError("box bounds must match the vector shape")
    if np.any(lo > hi):
        raise ValueError("box is empty: lo > hi in some coordinate")
    return np.minimum(np.maximum(theta, lo), hi)
