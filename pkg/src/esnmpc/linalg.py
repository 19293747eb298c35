"""Small dense linear-algebra kernel.

Matrices are plain 2-D ``numpy.ndarray`` objects of dtype float64. Every
function here is pure: inputs are never modified.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
import scipy.linalg
import scipy.sparse


class SpectralEstimate(NamedTuple):
    radius: float
    converged: bool
    iterations: int


def as_mat(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float64 array, promoting 1-D input to a column."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D matrix, got shape {m.shape}")
    return m


def matmul(a, b) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = as_mat(a, "a")
    b = as_mat(b, "b")
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"dimension mismatch: cannot multiply {a.shape[0]}x{a.shape[1]} "
            f"by {b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


def ridge_solve(s_matrix, y_matrix, beta: float) -> np.ndarray:
    """Regularized least-squares readout ``W = Y S^T (S S^T + beta I)^-1``.

    Args:
        s_matrix: Regressors, one column per sample, shape ``(d, T)``.
        y_matrix: Targets, one column per sample, shape ``(n, T)``.
        beta: Tikhonov coefficient, ``>= 0``.

    Returns:
        Readout matrix of shape ``(n, d)``.

    Raises:
        ValueError: on shape mismatch, non-finite data, negative ``beta``, or a
            normal matrix that is not positive definite.
    """
    s = as_mat(s_matrix, "s_matrix")
    y = as_mat(y_matrix, "y_matrix")
    if s.shape[1] != y.shape[1]:
        raise ValueError(
            f"sample count mismatch: s_matrix is {s.shape[0]}x{s.shape[1]}, "
            f"y_matrix is {y.shape[0]}x{y.shape[1]}"
        )
    if beta < 0 or not np.isfinite(beta):
        raise ValueError(f"beta must be finite and >= 0, got {beta}")
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))):
        raise ValueError("ridge_solve received non-finite entries")

    gram = s @ s.T
    gram[np.diag_indices_from(gram)] += beta
    rhs = s @ y.T  # (d, n); solve gram @ W^T = S Y^T
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "normal matrix S S^T + beta I is singular or not positive definite"
        ) from exc
    w_t = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    if not np.all(np.isfinite(w_t)):
        raise ValueError("ridge_solve produced non-finite weights")
    return np.ascontiguousarray(w_t.T)


def _ritz_radius(basis_a: np.ndarray, basis_b: np.ndarray, m) -> float:
    # Rayleigh-Ritz on span{v, Mv}: resolves +-lambda and complex-conjugate pairs.
    q, _ = np.linalg.qr(np.column_stack([basis_a, basis_b]))
    h = q.T @ (m @ q)
    return float(np.max(np.abs(np.linalg.eigvals(h))))


def spectral_radius(m, max_iters: int = 10_000, tol: float = 1e-10) -> SpectralEstimate:
    """Estimate the largest eigenvalue magnitude of a square matrix by power iteration.

    Each sweep applies the matrix twice and takes the Ritz values of the
    two-dimensional Krylov block, so a dominant complex-conjugate or
    sign-alternating pair converges like an ordinary dominant eigenvalue.
    Iteration stops once successive estimates differ by less than ``tol``.
    Accepts dense arrays and ``scipy.sparse`` matrices.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if scipy.sparse.issparse(m):
        op = m.tocsr().astype(np.float64)
    else:
        op = np.asarray(m, dtype=np.float64)
        if op.ndim != 2:
            raise ValueError(f"spectral_radius needs a 2-D matrix, got shape {op.shape}")
    if op.shape[0] != op.shape[1]:
        raise ValueError(f"spectral_radius needs a square matrix, got {op.shape[0]}x{op.shape[1]}")
    n = op.shape[0]
    if n == 1:
        return SpectralEstimate(abs(float(op[0, 0])), True, 1)

    # deterministic, generic start vector
    v = 1.0 + 0.5 * np.sin(np.arange(1, n + 1, dtype=np.float64))
    v /= np.linalg.norm(v)
    estimate = 0.0
    for it in range(1, max_iters + 1):
        w = op @ v
        w_norm = np.linalg.norm(w)
        if w_norm == 0.0:
            return SpectralEstimate(0.0, True, it)
        w = w / w_norm
        new = _ritz_radius(v, w, op)
        if it > 1 and abs(new - estimate) < tol:
            return SpectralEstimate(new, True, it)
        estimate = new
        # advance two steps per sweep so the block keeps spanning the dominant pair
        v = op @ w
        v_norm = np.linalg.norm(v)
        if v_norm == 0.0:
            return SpectralEstimate(estimate, True, it)
        v /= v_norm
    return SpectralEstimate(estimate, False, max_iters)


def riccati_recursion(a, b, q, r, iters: int = 10_000) -> np.ndarray:
    """Backward discrete Riccati recursion started from ``P = Q``.

    Stops after ``iters`` updates or when successive iterates agree to 1e-10
    in max-norm, whichever comes first.
    """
    a = as_mat(a, "a")
    b = as_mat(b, "b")
    q = as_mat(q, "q")
    r = as_mat(r, "r")
    nx, nu = b.shape
    if a.shape != (nx, nx) or q.shape != (nx, nx) or r.shape != (nu, nu):
        raise ValueError(
            f"inconsistent shapes: a {a.shape}, b {b.shape}, q {q.shape}, r {r.shape}"
        )
    p = q.copy()
    for _ in range(iters):
        with np.errstate(over="ignore", invalid="ignore"):
            bp = b.T @ p
            gain = np.linalg.solve(r + bp @ b, bp @ a)
            p_next = q + a.T @ p @ a - (bp @ a).T @ gain
            p_next = 0.5 * (p_next + p_next.T)
        if not np.all(np.isfinite(p_next)):
            raise ValueError("Riccati recursion diverged (non-finite iterate)")
        done = np.max(np.abs(p_next - p)) < 1e-10
        p = p_next
        if done:
            break
    return p


def dare_residual(a, b, q, r, p) -> float:
    """Max-norm of ``A'PA - P - A'PB (R + B'PB)^-1 B'PA + Q``."""
    a, b, q, r, p = (as_mat(x) for x in (a, b, q, r, p))
    bp = b.T @ p
    res = a.T @ p @ a - p - (bp @ a).T @ np.linalg.solve(r + bp @ b, bp @ a) + q
    return float(np.max(np.abs(res)))


def lqr_gain(a, b, r, p) -> np.ndarray:
    """State-feedback gain ``K = (R + B'PB)^-1 B'PA`` for terminal weight ``P``."""
    a, b, r, p = (as_mat(x) for x in (a, b, r, p))
    bp = b.T @ p
    return np.linalg.solve(r + bp @ b, bp @ a)
