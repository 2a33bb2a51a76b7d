"""The three benchmark problems, exposed through a common oracle interface.

Each problem minimizes  f(Q) + mu*||Q||_1  over the Stiefel manifold, with an
optional vector of smooth inequality constraints h2(Q) <= 0:

* compressed modes:      f(Q) =  tr(Q^T H Q),      H a discretized Hamiltonian
* sparse PCA:            f(Q) = -tr(Q^T A^T A Q)
* constrained sparse PCA: sparse PCA plus |Q_i^T A^T A Q_j| <= Delta_ij (i != j)

The l1 term is handled through the identity map h1(Q) = vec(Q), so a single
oracle contract covers all three instances.
"""

from __future__ import annotations

import json

import numpy as np

from .moreau import EnvelopeResult, env_indicator_nonpositive, env_l1, prox_l1
from .numerics import as_generator
from .stiefel import StiefelPoint


class ProblemOracle:
    """Callback bundle consumed by the augmented Lagrangian solver.

    Subclasses provide the smooth term and (optionally) inequality
    constraints; the augmented-objective assembly below is generic. The
    Euclidean Hessian-vector product is linear and self-adjoint in W, and
    h1 is always the identity embedding Q -> vec(Q).
    """

    name = "abstract"

    def __init__(self, n: int, r: int, mu: float):
        if mu < 0:
            raise ValueError("mu must be nonnegative")
        self.n = int(n)
        self.r = int(r)
        self.mu = float(mu)

    # -- smooth part ------------------------------------------------------
    def smooth_value(self, Q: np.ndarray) -> float:
        raise NotImplementedError

    def euclidean_grad_smooth(self, Q: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def euclidean_hessvec_smooth(self, Q: np.ndarray, W: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def smooth_value_and_grad(self, Q: np.ndarray):
        return self.smooth_value(Q), self.euclidean_grad_smooth(Q)

    # -- constraint maps --------------------------------------------------
    @property
    def m(self) -> int:
        """Length of h1(Q) = vec(Q)."""
        return self.n * self.r

    @property
    def q(self) -> int:
        """Number of inequality constraints."""
        return 0

    def h1(self, Q: np.ndarray) -> np.ndarray:
        return np.asarray(Q, dtype=float).ravel()

    def dh1_adjoint(self, alpha: np.ndarray) -> np.ndarray:
        return np.asarray(alpha, dtype=float).reshape(self.n, self.r)

    def h2(self, Q: np.ndarray) -> np.ndarray:
        return np.zeros(0)

    def dh2_apply(self, Q: np.ndarray, W: np.ndarray) -> np.ndarray:
        """Directional derivatives [<grad h2_i(Q), W>]_i."""
        return np.zeros(0)

    def dh2_adjoint(self, Q: np.ndarray, coeff: np.ndarray) -> np.ndarray:
        """Weighted combination sum_i coeff_i * grad h2_i(Q)."""
        return np.zeros((self.n, self.r))

    def h2_hessvec(self, Q: np.ndarray, coeff: np.ndarray, W: np.ndarray) -> np.ndarray:
        """Weighted combination sum_i coeff_i * hess h2_i(Q)[W]."""
        return np.zeros((self.n, self.r))

    def feasible_point(self):
        """A point with h2 <= 0, or None when any manifold point qualifies."""
        return None

    # -- objective and augmented objective --------------------------------
    def objective(self, Q: np.ndarray) -> float:
        """The original loss f(Q) + mu * ||Q||_1."""
        return self.smooth_value(Q) + self.mu * float(np.abs(Q).sum())

    def l1_envelope(self, X: np.ndarray, sigma: float) -> EnvelopeResult:
        """Envelope of the l1 term; degenerates gracefully when mu == 0."""
        if self.mu == 0.0:
            X = np.asarray(X, dtype=float)
            return EnvelopeResult(0.0, np.zeros_like(X), X.copy())
        return env_l1(X, self.mu, sigma)

    def l1_prox(self, X: np.ndarray, sigma: float) -> np.ndarray:
        if self.mu == 0.0:
            return np.asarray(X, dtype=float).copy()
        return prox_l1(X, self.mu / sigma)

    def lk_value(self, Q, lam, gamma, sigma) -> float:
        value, _ = self.lk_value_and_euclidean_grad(Q, lam, gamma, sigma)
        return value

    def lk_value_and_euclidean_grad(self, Q, lam, gamma, sigma):
        """Augmented objective L_k and its Euclidean gradient in one pass."""
        f, g = self.smooth_value_and_grad(Q)
        X = Q + self.dh1_adjoint(lam) / sigma
        env1 = self.l1_envelope(X, sigma)
        value = f + env1.value
        grad = g + env1.gradient
        if self.q:
            env2 = env_indicator_nonpositive(self.h2(Q) + gamma / sigma, sigma)
            value += env2.value
            grad = grad + self.dh2_adjoint(Q, env2.gradient)
        return value, grad

    def lk_euclidean_grad(self, Q, lam, gamma, sigma) -> np.ndarray:
        _, grad = self.lk_value_and_euclidean_grad(Q, lam, gamma, sigma)
        return grad

    def lk_euclidean_hessvec(self, Q, W, sigma, l1_mask, beta, active) -> np.ndarray:
        """Generalized Euclidean Hessian of L_k applied to W.

        ``l1_mask`` is the {0,1} dead-zone mask of the l1 envelope, ``beta``
        the envelope gradient of the inequality term (sigma*max(slack, 0))
        and ``active`` the {0,1} activity pattern of its second derivative;
        the three together freeze one element of the generalized Hessian.
        """
        out = self.euclidean_hessvec_smooth(Q, W)
        if self.mu > 0.0:
            out = out + sigma * (W * l1_mask)
        if self.q:
            out = out + self.h2_hessvec(Q, beta, W)
            coeff = sigma * (active * self.dh2_apply(Q, W))
            out = out + self.dh2_adjoint(Q, coeff)
        return out

    # -- reproducibility --------------------------------------------------
    def parameters(self) -> dict:
        """Seed-plus-parameters description sufficient to rebuild the instance."""
        raise NotImplementedError


class CmInstance(ProblemOracle):
    """Compressed modes: localized approximate eigenfunctions of -Delta/2."""

    name = "cm"

    def __init__(self, H: np.ndarray, mu: float, r: int, domain_length: float = 50.0):
        H = np.asarray(H, dtype=float)
        if not np.all(np.isfinite(H)):
            raise ValueError("Hamiltonian has non-finite entries")
        if np.linalg.norm(H - H.T) > 1e-12 * max(1.0, np.abs(H).max()):
            raise ValueError("Hamiltonian must be symmetric")
        super().__init__(H.shape[0], r, mu)
        self.H = H
        self.domain_length = float(domain_length)

    def smooth_value(self, Q):
        return float(np.tensordot(Q, self.H @ Q))

    def euclidean_grad_smooth(self, Q):
        return 2.0 * (self.H @ Q)

    def euclidean_hessvec_smooth(self, Q, W):
        return 2.0 * (self.H @ W)

    def smooth_value_and_grad(self, Q):
        HQ = self.H @ Q
        return float(np.tensordot(Q, HQ)), 2.0 * HQ

    def parameters(self):
        return {
            "problem": self.name,
            "n": self.n,
            "r": self.r,
            "mu": self.mu,
            "domain_length": self.domain_length,
        }


def build_cm(n: int, mu: float, r: int, domain_length: float = 50.0) -> CmInstance:
    """Second-order periodic finite-difference discretization of -Delta/2 on [0, L].

    Grid spacing h = L/n; stencil 1/h^2 on the diagonal and -1/(2 h^2) on the
    two (wrapped) off-diagonals, so H * ones = 0 and H is symmetric PSD.
    """
    if n < 3:
        raise ValueError("need at least 3 grid nodes")
    h = domain_length / n
    H = np.eye(n) / h**2
    off = -0.5 / h**2
    idx = np.arange(n)
    H[idx, (idx + 1) % n] = off
    H[idx, (idx - 1) % n] = off
    return CmInstance(H, mu=mu, r=r, domain_length=domain_length)


class SpcaInstance(ProblemOracle):
    """Sparse PCA: maximize explained variance with an l1 sparsity penalty."""

    name = "spca"

    def __init__(self, A: np.ndarray, mu: float, r: int, seed=None):
        A = np.asarray(A, dtype=float)
        if not np.all(np.isfinite(A)):
            raise ValueError("data matrix has non-finite entries")
        super().__init__(A.shape[1], r, mu)
        self.A = A
        self.M = A.T @ A  # cached Gram matrix
        self.seed = seed

    @property
    def p(self) -> int:
        return self.A.shape[0]

    def smooth_value(self, Q):
        return -float(np.tensordot(Q, self.M @ Q))

    def euclidean_grad_smooth(self, Q):
        return -2.0 * (self.M @ Q)

    def euclidean_hessvec_smooth(self, Q, W):
        return -2.0 * (self.M @ W)

    def smooth_value_and_grad(self, Q):
        MQ = self.M @ Q
        return -float(np.tensordot(Q, MQ)), -2.0 * MQ

    def parameters(self):
        return {
            "problem": self.name,
            "n": self.n,
            "p": self.p,
            "r": self.r,
            "mu": self.mu,
            "seed": self.seed,
        }


def build_spca(seed, n: int, mu: float, r: int, p: int = 50) -> SpcaInstance:
    """Ill-conditioned synthetic data for sparse PCA.

    A standard Gaussian p-by-n matrix has its singular values replaced by
    w_i^4 + 1e-5 (w_i standard Gaussian); columns are then centered and
    scaled to unit length. Deterministic per seed.
    """
    if n < p:
        raise ValueError("generator assumes n >= p")
    rng = as_generator(seed)
    A0 = rng.standard_normal((p, n))
    U, _, Vt = np.linalg.svd(A0, full_matrices=False)
    w = rng.standard_normal(p)
    A = U @ np.diag(w**4 + 1e-5) @ Vt
    A = A - A.mean(axis=0, keepdims=True)
    A = A / np.linalg.norm(A, axis=0, keepdims=True)
    return SpcaInstance(A, mu=mu, r=r, seed=seed if isinstance(seed, int) else None)


class ConstrainedSpcaInstance(SpcaInstance):
    """Sparse PCA with near-orthogonality constraints on the loadings.

    |Q_i^T M Q_j| <= Delta_ij is split into the two smooth inequalities
    +/-(Q_i^T M Q_j) - Delta_ij <= 0, giving q = r(r-1) constraints: for the
    pair index p over (i, j) with i < j in lexicographic order, component
    2p is the '+' branch and 2p+1 the '-' branch.
    """

    name = "cspca"

    def __init__(self, A: np.ndarray, mu: float, r: int, Delta: np.ndarray, seed=None):
        super().__init__(A, mu=mu, r=r, seed=seed)
        Delta = np.asarray(Delta, dtype=float)
        if Delta.shape != (r, r) or np.any(Delta < 0):
            raise ValueError("Delta must be a nonnegative r-by-r matrix")
        self.Delta = Delta
        self.pairs = [(i, j) for i in range(r) for j in range(i + 1, r)]

    @property
    def q(self) -> int:
        return self.r * (self.r - 1)

    def _cross_terms(self, Q):
        return (self.M @ Q).T @ Q  # (r, r): entry (i, j) = Q_i^T M Q_j

    def h2(self, Q):
        G = self._cross_terms(Q)
        out = np.empty(self.q)
        for p, (i, j) in enumerate(self.pairs):
            g = G[i, j]
            out[2 * p] = g - self.Delta[i, j]
            out[2 * p + 1] = -g - self.Delta[i, j]
        return out

    def dh2_apply(self, Q, W):
        T = (self.M @ Q).T @ W
        out = np.empty(self.q)
        for p, (i, j) in enumerate(self.pairs):
            dg = T[i, j] + T[j, i]
            out[2 * p] = dg
            out[2 * p + 1] = -dg
        return out

    def _pair_coefficients(self, coeff):
        # net weight on grad(Q_i^T M Q_j) as a symmetric r-by-r matrix
        C = np.zeros((self.r, self.r))
        for p, (i, j) in enumerate(self.pairs):
            c = coeff[2 * p] - coeff[2 * p + 1]
            C[i, j] = c
            C[j, i] = c
        return C

    def dh2_adjoint(self, Q, coeff):
        return self.M @ (Q @ self._pair_coefficients(coeff))

    def h2_hessvec(self, Q, coeff, W):
        return self.M @ (W @ self._pair_coefficients(coeff))

    def feasible_point(self):
        # leading eigenvectors of M: all cross terms vanish, so h2 = -Delta < 0
        vals, vecs = np.linalg.eigh(self.M)
        return vecs[:, ::-1][:, : self.r]

    def parameters(self):
        out = super().parameters()
        out["problem"] = self.name
        out["delta"] = float(self.Delta[self.pairs[0]]) if self.pairs else 0.0
        return out


def build_cspca(seed, n: int, mu: float, r: int, delta: float = 1e-8, p: int = 50) -> ConstrainedSpcaInstance:
    """Gaussian data (columns centered, unit length) plus |cross-term| bounds."""
    if r < 2:
        raise ValueError("constrained SPCA needs r >= 2")
    rng = as_generator(seed)
    A = rng.standard_normal((p, n))
    A = A - A.mean(axis=0, keepdims=True)
    A = A / np.linalg.norm(A, axis=0, keepdims=True)
    Delta = np.full((r, r), float(delta))
    np.fill_diagonal(Delta, 0.0)
    return ConstrainedSpcaInstance(
        A, mu=mu, r=r, Delta=Delta, seed=seed if isinstance(seed, int) else None
    )


def cpav(A: np.ndarray, V) -> float:
    """Cumulative percentage of adjusted variance of the loadings V.

    (tr(V^T A^T A V) - sqrt(sum_{i != j} (V_i^T A^T A V_j)^2)) / tr(A^T A);
    the correction discounts variance claimed by non-orthogonal components.
    """
    if isinstance(V, StiefelPoint):
        V = V.Q
    V = np.asarray(V, dtype=float)
    M = A.T @ A
    G = V.T @ (M @ V)
    off = G - np.diag(np.diag(G))
    return float((np.trace(G) - np.sqrt(np.sum(off * off))) / np.trace(M))


def sparsity_percent(Q, zero_tol: float = 1e-5) -> float:
    """Percentage of entries of Q that vanish to within ``zero_tol``."""
    if zero_tol <= 0:
        raise ValueError("zero tolerance must be positive")
    if isinstance(Q, StiefelPoint):
        Q = Q.Q
    Q = np.asarray(Q, dtype=float)
    return 100.0 * float(np.count_nonzero(np.abs(Q) <= zero_tol)) / Q.size


def save_instance(problem: ProblemOracle, path) -> None:
    """Dump the seed-plus-parameters description as JSON."""
    with open(path, "w") as fh:
        json.dump(problem.parameters(), fh, indent=2)


def load_instance(path) -> ProblemOracle:
    """Rebuild an instance from a JSON dump written by :func:`save_instance`."""
    with open(path) as fh:
        params = json.load(fh)
    kind = params.pop("problem")
    if kind == "cm":
        return build_cm(**params)
    if kind == "spca":
        return build_spca(**params)
    if kind == "cspca":
        return build_cspca(**params)
    raise ValueError(f"unknown problem kind {kind!r}")
