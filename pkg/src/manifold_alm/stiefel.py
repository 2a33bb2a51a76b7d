"""Geometry of the Stiefel manifold St(n, r) = {Q : Q^T Q = I_r}.

The Riemannian metric is the one inherited from the ambient Frobenius inner
product (the embedded metric); projections, retractions and the exponential
map below are all with respect to that choice.
"""

from __future__ import annotations

import enum

import numpy as np
import scipy.linalg

from .numerics import (
    as_generator,
    gaussian_matrix,
    polar_orthonormal_factor,
    qr_orthonormal_factor,
)

ORTHONORMALITY_TOL = 1e-12
TANGENCY_TOL = 1e-10


class RetractionKind(enum.Enum):
    """Available maps from tangent vectors back onto the manifold."""

    QR = "qr"
    POLAR = "polar"
    EXPONENTIAL = "exp"

    @classmethod
    def parse(cls, name) -> "RetractionKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower()
        aliases = {
            "qr": cls.QR,
            "polar": cls.POLAR,
            "exp": cls.EXPONENTIAL,
            "exponential": cls.EXPONENTIAL,
        }
        if key not in aliases:
            raise ValueError(f"unknown retraction {name!r}")
        return aliases[key]


def sym(S: np.ndarray) -> np.ndarray:
    """Symmetric part (S + S^T) / 2."""
    return 0.5 * (S + S.T)


class StiefelPoint:
    """A point on St(n, r), i.e. an n-by-r matrix with orthonormal columns.

    The orthonormality defect ||Q^T Q - I||_F is checked on construction, so
    every instance in circulation satisfies the manifold constraint to
    ``ORTHONORMALITY_TOL``. Treat ``Q`` as read-only.
    """

    __slots__ = ("Q",)

    def __init__(self, Q: np.ndarray, check: bool = True):
        Q = np.asarray(Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] < Q.shape[1]:
            raise ValueError("expected an n-by-r matrix with n >= r")
        if check:
            defect = orthonormality_defect(Q)
            if not defect <= ORTHONORMALITY_TOL:
                raise ValueError(
                    f"columns not orthonormal: defect {defect:.3e} exceeds "
                    f"{ORTHONORMALITY_TOL:g}"
                )
        self.Q = Q

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def r(self) -> int:
        return self.Q.shape[1]

    def __repr__(self):
        return f"StiefelPoint(n={self.n}, r={self.r})"


class TangentVector:
    """Element of the tangent space at ``base``: Q^T V + V^T Q = 0."""

    __slots__ = ("base", "V")

    def __init__(self, base: StiefelPoint, V: np.ndarray, check: bool = True):
        V = np.asarray(V, dtype=float)
        if V.shape != base.Q.shape:
            raise ValueError("tangent shape does not match base point")
        if check:
            defect = np.linalg.norm(base.Q.T @ V + V.T @ base.Q)
            bound = TANGENCY_TOL * (1.0 + np.linalg.norm(V))
            if not defect <= bound:
                raise ValueError(
                    f"not tangent: defect {defect:.3e} exceeds {bound:.3e}"
                )
        self.base = base
        self.V = V

    def norm(self) -> float:
        return float(np.linalg.norm(self.V))

    def __repr__(self):
        return f"TangentVector(n={self.base.n}, r={self.base.r})"


def orthonormality_defect(Q: np.ndarray) -> float:
    """||Q^T Q - I_r||_F."""
    r = Q.shape[1]
    return float(np.linalg.norm(Q.T @ Q - np.eye(r)))


def tangent_component(Q: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Raw-array tangent projection W - Q sym(Q^T W) (allocation-light path)."""
    return W - Q @ sym(Q.T @ W)


def project_tangent(point: StiefelPoint, W: np.ndarray) -> TangentVector:
    """Orthogonal projection of an ambient matrix onto the tangent space.

    Idempotent and self-adjoint as an operator on R^{n x r}.
    """
    W = np.asarray(W, dtype=float)
    if W.shape != point.Q.shape:
        raise ValueError("shape mismatch in project_tangent")
    return TangentVector(point, tangent_component(point.Q, W), check=False)


def inner(V: TangentVector, W: TangentVector) -> float:
    """Frobenius inner product trace(V^T W) of two tangents at the same base."""
    if V.base is not W.base and not np.array_equal(V.base.Q, W.base.Q):
        raise ValueError("tangent vectors have different base points")
    return float(np.tensordot(V.V, W.V))


def _exponential(Q: np.ndarray, V: np.ndarray) -> np.ndarray:
    # Geodesic of the embedded metric (Edelman-Arias-Smith closed form):
    #   Exp_Q(V) = [Q, V] expm([[A, -V^T V], [I, A]]) [I; 0] expm(-A),  A = Q^T V
    r = Q.shape[1]
    A = Q.T @ V
    blk = np.block([[A, -(V.T @ V)], [np.eye(r), A]])
    E = scipy.linalg.expm(blk)
    return np.hstack([Q, V]) @ E[:, :r] @ scipy.linalg.expm(-A)


def retract(point: StiefelPoint, tangent: TangentVector, kind: RetractionKind) -> StiefelPoint:
    """Move from ``point`` along ``tangent`` and land back on the manifold."""
    if tangent.base is not point and not np.array_equal(tangent.base.Q, point.Q):
        raise ValueError("tangent is not based at the given point")
    Q_new = retract_array(point.Q, tangent.V, kind)
    return StiefelPoint(Q_new)


def retract_array(Q: np.ndarray, V: np.ndarray, kind: RetractionKind) -> np.ndarray:
    """Raw-array retraction; the result still satisfies the manifold invariant."""
    kind = RetractionKind.parse(kind)
    if kind is RetractionKind.QR:
        return qr_orthonormal_factor(Q + V)
    if kind is RetractionKind.POLAR:
        return polar_orthonormal_factor(Q + V)
    return _exponential(Q, V)


def random_point(seed, n: int, r: int) -> StiefelPoint:
    """Orthonormal factor of a seeded Gaussian matrix (uniform-ish start)."""
    if not (n >= r >= 1):
        raise ValueError("need n >= r >= 1")
    Z = gaussian_matrix(as_generator(seed), n, r)
    return StiefelPoint(qr_orthonormal_factor(Z), check=False)


def orthonormal_complement(Q: np.ndarray) -> np.ndarray:
    """An n-by-(n-r) matrix whose columns complete col(Q) to an orthonormal basis."""
    n, r = Q.shape
    full, _ = np.linalg.qr(Q, mode="complete")
    comp = full[:, r:]
    # full QR may flip spans only in the leading block; the trailing block is
    # orthogonal to col(Q) by construction
    return comp - Q @ (Q.T @ comp)
