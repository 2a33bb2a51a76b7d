import numpy as np

from manifold_alm.stiefel import orthonormal_complement


def tangent_basis_maps(Q):
    """Orthonormal tangent-space parametrization used by dense test oracles.

    Returns (dim, coords_to_matrix, matrix_to_coords) for the basis
    {Q (e_i e_j^T - e_j e_i^T)/sqrt(2)} union {Qperp e_a e_b^T}.
    """
    n, r = Q.shape
    Qperp = orthonormal_complement(Q)
    iu, ju = np.triu_indices(r, k=1)
    dim = n * r - r * (r + 1) // 2
    inv_sqrt2 = 1.0 / np.sqrt(2.0)

    def coords_to_matrix(c):
        Om = np.zeros((r, r))
        Om[iu, ju] = c[: iu.size] * inv_sqrt2
        Om -= Om.T
        K = c[iu.size :].reshape(n - r, r)
        return Q @ Om + Qperp @ K

    def matrix_to_coords(V):
        A = Q.T @ V
        return np.concatenate(
            [(A[iu, ju] - A[ju, iu]) * inv_sqrt2, (Qperp.T @ V).ravel()]
        )

    return dim, coords_to_matrix, matrix_to_coords


def dense_operator_matrix(apply_array, Q):
    """Assemble the matrix of a tangent-space operator in the above basis."""
    dim, c2m, m2c = tangent_basis_maps(Q)
    Mat = np.zeros((dim, dim))
    for j in range(dim):
        c = np.zeros(dim)
        c[j] = 1.0
        Mat[:, j] = m2c(apply_array(c2m(c)))
    return Mat
