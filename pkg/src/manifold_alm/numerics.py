"""Dense matrix kernels and seeded randomness shared by the whole solver stack.

All routines work on plain ``numpy.ndarray`` objects and are pure: nothing is
mutated in place, so values can be shared freely across threads.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.linalg


class EigenConvergenceError(RuntimeError):
    """Lanczos failed to converge within the iteration cap.

    Carries the best available estimate in ``best_estimate``.
    """

    def __init__(self, message: str, best_estimate: float):
        super().__init__(message)
        self.best_estimate = best_estimate


def as_generator(seed) -> np.random.Generator:
    """Turn an integer seed (or an existing generator) into a Generator.

    The same integer always yields a bit-identical sample stream.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(int(seed))


def gaussian_matrix(seed, n: int, r: int) -> np.ndarray:
    """Sample an n-by-r matrix with i.i.d. standard normal entries."""
    if n < 1 or r < 1:
        raise ValueError("matrix dimensions must be positive")
    return as_generator(seed).standard_normal((n, r))


def qr_orthonormal_factor(M: np.ndarray, return_r: bool = False):
    """Orthonormal factor of the thin QR decomposition, M = Q R.

    The sign convention makes the diagonal of R strictly positive, which
    pins down Q uniquely for full-column-rank input.

    Raises ``numpy.linalg.LinAlgError`` on rank-deficient input.
    """
    M = np.asarray(M, dtype=float)
    Q, R = np.linalg.qr(M)
    diag = np.diagonal(R)
    scale = np.max(np.abs(diag)) if diag.size else 0.0
    tol = max(M.shape) * np.finfo(float).eps * max(scale, 1.0)
    if np.any(np.abs(diag) <= tol):
        raise np.linalg.LinAlgError("rank deficient")
    signs = np.where(diag < 0, -1.0, 1.0)
    Q = Q * signs
    if return_r:
        return Q, signs[:, None] * R
    return Q


def polar_orthonormal_factor(M: np.ndarray) -> np.ndarray:
    """Orthonormal polar factor U = M (M^T M)^{-1/2}, computed via the SVD.

    U is the closest matrix with orthonormal columns in Frobenius norm.
    Raises ``numpy.linalg.LinAlgError`` on rank-deficient input.
    """
    M = np.asarray(M, dtype=float)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    tol = max(M.shape) * np.finfo(float).eps * (s[0] if s.size else 0.0)
    if s.size == 0 or s[-1] <= tol:
        raise np.linalg.LinAlgError("rank deficient")
    return U @ Vt


def matrix_exponential(M: np.ndarray) -> np.ndarray:
    """Matrix exponential of a square matrix (scaling-and-squaring Pade)."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("matrix_exponential expects a square matrix")
    if not np.all(np.isfinite(M)):
        raise ValueError("matrix_exponential expects finite entries")
    return scipy.linalg.expm(M)


def _extreme_ritz(alphas: np.ndarray, betas: np.ndarray, which: str):
    """Extreme eigenpair of the Lanczos tridiagonal; returns (theta, |s_last|)."""
    k = alphas.shape[0]
    if k == 1:
        return float(alphas[0]), 1.0
    idx = k - 1 if which == "max" else 0
    vals, vecs = scipy.linalg.eigh_tridiagonal(
        alphas, betas, select="i", select_range=(idx, idx)
    )
    return float(vals[0]), float(abs(vecs[-1, 0]))


def symmetric_extreme_eigenvalue(
    apply_op: Callable[[np.ndarray], np.ndarray],
    dim: int,
    which: str = "max",
    tol: float = 1e-10,
) -> float:
    """Extreme eigenvalue of a self-adjoint operator given by its matvec.

    Lanczos iteration with full reorthogonalization at every step; the
    returned value has absolute error at most ``tol * (1 + |lambda|)``.
    Krylov spaces are shift invariant, so the minimum eigenvalue is read off
    the same tridiagonal matrix as the maximum (no explicit shift needed).

    Parameters
    ----------
    apply_op : callable
        Matrix-vector product of the operator, acting on vectors of length
        ``dim``. Must be self-adjoint.
    dim : int
        Dimension of the space.
    which : {"max", "min"}
        Which end of the spectrum to compute.
    tol : float
        Relative residual tolerance.

    Raises
    ------
    EigenConvergenceError
        If the residual target is not met within ``5 * dim`` matvecs. The
        exception carries the best estimate found.
    """
    if which not in ("max", "min"):
        raise ValueError("which must be 'max' or 'min'")
    if dim < 1:
        raise ValueError("dimension must be positive")
    if dim == 1:
        return float(apply_op(np.ones(1))[0])

    rng = np.random.default_rng(0x5EED)
    cap = 5 * dim
    used = 0
    best = None
    check_every = 10

    while used < cap:
        max_steps = min(dim, cap - used)
        Vbasis = np.zeros((max_steps, dim))
        alphas = np.zeros(max_steps)
        betas = np.zeros(max(max_steps - 1, 0))
        q = rng.standard_normal(dim)
        q /= np.linalg.norm(q)
        beta = 0.0
        q_prev = np.zeros(dim)
        scale = 0.0

        for k in range(max_steps):
            Vbasis[k] = q
            u = apply_op(q)
            used += 1
            alpha = float(q @ u)
            scale = max(scale, abs(alpha), beta)
            u = u - alpha * q - beta * q_prev
            # full reorthogonalization; keeps Ritz values trustworthy
            u -= Vbasis[: k + 1].T @ (Vbasis[: k + 1] @ u)
            alphas[k] = alpha
            beta = float(np.linalg.norm(u))
            breakdown = beta <= 1e-14 * max(scale, 1.0)
            if breakdown or k == max_steps - 1 or (k + 1) % check_every == 0:
                theta, s_last = _extreme_ritz(alphas[: k + 1], betas[:k], which)
                best = theta if best is None else (
                    max(best, theta) if which == "max" else min(best, theta)
                )
                resid = beta * s_last
                if resid <= tol * (1.0 + abs(theta)):
                    return theta
            if breakdown:
                # invariant subspace hit before convergence: restart with a
                # fresh random vector (start was deficient in the extreme
                # eigenvector direction)
                break
            if k < max_steps - 1:
                betas[k] = beta
            q_prev = q
            q = u / beta

    raise EigenConvergenceError(
        f"Lanczos did not reach tol={tol:g} within {cap} matvecs", float(best)
    )
