"""Randomized elements of the Clarke generalized covariant derivative.

The Riemannian gradient of the augmented objective is locally Lipschitz but
not differentiable where the l1 envelope (or an inequality slack) sits
exactly on a kink. An element of its generalized derivative at such a point
is obtained by projecting a Gaussian matrix onto the tangent space and
reading the one-sided derivative of every scalar kink off the sign of the
sampled direction. At points of differentiability the construction reduces
to the ordinary Riemannian Hessian.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import as_generator, symmetric_extreme_eigenvalue
from .stiefel import (
    StiefelPoint,
    TangentVector,
    orthonormal_complement,
    sym,
    tangent_component,
)

# entries this close to a kink are classified by the sampled direction
KINK_TOL = 1e-12
# |Q_ij| must be within this tolerance of 1 for a structurally-zero V_ij
UNIT_ENTRY_TOL = 1e-9


class AdmissibleDirectionError(RuntimeError):
    """Resampling failed to produce an admissible tangent direction."""


@dataclass(frozen=True)
class DirectionSample:
    """A tangent direction together with its entrywise one-sided labels.

    ``from_above[i, j]`` is True when the limits defining the generalized
    derivative approach entry (i, j) from above: V_ij > 0, or V_ij = 0 at a
    structural entry with Q_ij = -1.
    """

    V: TangentVector
    from_above: np.ndarray


def sample_admissible_direction(
    point: StiefelPoint, seed, max_attempts: int = 50
) -> DirectionSample:
    """Project a Gaussian matrix onto the tangent space, resampling as needed.

    A draw is rejected when some V_ij = 0 while Q_ij is not a unit entry;
    that event has probability zero, so the first draw is essentially always
    accepted.
    """
    rng = as_generator(seed)
    Q = point.Q
    unit_entry = np.abs(np.abs(Q) - 1.0) <= UNIT_ENTRY_TOL
    for _ in range(max_attempts):
        Z = rng.standard_normal(Q.shape)
        V = tangent_component(Q, Z)
        zero = V == 0.0
        if np.any(zero & ~unit_entry):
            continue
        from_above = (V > 0.0) | (zero & (Q < 0.0))
        return DirectionSample(TangentVector(point, V, check=False), from_above)
    raise AdmissibleDirectionError(
        f"no admissible direction in {max_attempts} attempts"
    )


def l1_envelope_mask(
    X: np.ndarray,
    threshold: float,
    sample: DirectionSample | None = None,
    kink_tol: float = KINK_TOL,
) -> np.ndarray:
    """Dead-zone indicator of the soft threshold, resolved at kinks.

    Away from the kink the mask is E_ij = 1 iff |X_ij| < threshold (where
    the proximal map is locally constant). Within ``kink_tol`` of the kink
    the one-sided derivative selected by ``sample`` decides: the mask is 0
    exactly when the sampled perturbation leaves the dead zone. Without a
    sample, boundary entries default to 1 (closed dead zone).
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    X = np.asarray(X, dtype=float)
    dist = np.abs(X) - threshold
    inside = dist < -kink_tol
    boundary = np.abs(dist) <= kink_tol
    if sample is None:
        return (inside | boundary).astype(float)
    leaving = np.where(X > 0, sample.from_above, ~sample.from_above)
    return (inside | (boundary & ~leaving)).astype(float)


def _inequality_activity(
    slack: np.ndarray, directional: np.ndarray, kink_tol: float = KINK_TOL
) -> np.ndarray:
    """Activity flags of the orthant-envelope curvature term.

    The second derivative of (sigma/2)||max(s, 0)||^2 is 1 where s > 0 and 0
    where s < 0; at s = 0 the sign of the sampled directional derivative of
    the slack picks the one-sided limit (nonnegative sign maps to active).
    """
    active = (slack > kink_tol).astype(float)
    at_kink = np.abs(slack) <= kink_tol
    if np.any(at_kink):
        active[at_kink] = (directional[at_kink] >= 0.0).astype(float)
    return active


class ClarkeElement:
    """One self-adjoint element of the generalized derivative of grad L_k.

    Applying the element to a tangent W computes

        P_Q( D[W] - W sym(Q^T G) ),

    where G is the Euclidean gradient of the augmented objective at Q and
    D[W] its generalized Euclidean Hessian with the kink choices frozen at
    assembly time (l1 dead-zone mask and inequality activity flags).
    """

    def __init__(self, oracle, point: StiefelPoint, lam, gamma, sigma, sample=None):
        self.oracle = oracle
        self.base = point
        self.sigma = float(sigma)
        self.lam = np.asarray(lam, dtype=float)
        self.gamma = np.asarray(gamma, dtype=float)
        self.sample = sample

        Q = point.Q
        X = Q + oracle.dh1_adjoint(self.lam) / sigma
        if oracle.mu > 0.0:
            self.l1_mask = l1_envelope_mask(X, oracle.mu / sigma, sample)
        else:
            self.l1_mask = np.zeros_like(Q)
        if oracle.q:
            slack = oracle.h2(Q) + self.gamma / sigma
            directional = (
                oracle.dh2_apply(Q, sample.V.V)
                if sample is not None
                else np.ones_like(slack)
            )
            self.beta = sigma * np.maximum(slack, 0.0)
            self.active = _inequality_activity(slack, directional)
        else:
            self.beta = np.zeros(0)
            self.active = np.zeros(0)
        egrad = oracle.lk_euclidean_grad(Q, self.lam, self.gamma, sigma)
        self.sym_qtg = sym(Q.T @ egrad)

    def apply_array(self, W: np.ndarray) -> np.ndarray:
        """Raw-array application; W must already be tangent at the base."""
        Q = self.base.Q
        D = self.oracle.lk_euclidean_hessvec(
            Q, W, self.sigma, self.l1_mask, self.beta, self.active
        )
        return tangent_component(Q, D - W @ self.sym_qtg)

    def apply(self, W: TangentVector) -> TangentVector:
        if W.base is not self.base and not np.array_equal(W.base.Q, self.base.Q):
            raise ValueError("tangent vector is based at a different point")
        return TangentVector(self.base, self.apply_array(W.V), check=False)


def apply_clarke_element(element: ClarkeElement, W: TangentVector) -> TangentVector:
    """Apply a generalized-Hessian element to a tangent vector."""
    return element.apply(W)


def tangent_dimension(n: int, r: int) -> int:
    return n * r - r * (r + 1) // 2


def min_eigenvalue_probe(element: ClarkeElement, tol: float = 1e-8) -> float:
    """Smallest eigenvalue of the element restricted to the tangent space.

    The tangent space is parametrized by the orthonormal basis
    {Q (e_i e_j^T - e_j e_i^T)/sqrt(2) : i < j} united with
    {Qperp e_a e_b^T}; the element's coordinate matrix in that basis is
    symmetric, and its extreme eigenvalue is found by Lanczos iteration.
    """
    Q = element.base.Q
    n, r = Q.shape
    Qperp = orthonormal_complement(Q)
    iu, ju = np.triu_indices(r, k=1)
    n_skew = iu.size
    dim = tangent_dimension(n, r)
    inv_sqrt2 = 1.0 / np.sqrt(2.0)

    def coords_to_matrix(c):
        Omega = np.zeros((r, r))
        Omega[iu, ju] = c[:n_skew] * inv_sqrt2
        Omega -= Omega.T
        K = c[n_skew:].reshape(n - r, r)
        return Q @ Omega + Qperp @ K

    def matrix_to_coords(V):
        A = Q.T @ V
        c_skew = (A[iu, ju] - A[ju, iu]) * inv_sqrt2
        return np.concatenate([c_skew, (Qperp.T @ V).ravel()])

    def apply_coords(c):
        return matrix_to_coords(element.apply_array(coords_to_matrix(c)))

    return symmetric_extreme_eigenvalue(apply_coords, dim, which="min", tol=tol)
