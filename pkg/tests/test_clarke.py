import numpy as np
import pytest

from manifold_alm.clarke import (
    AdmissibleDirectionError,
    ClarkeElement,
    apply_clarke_element,
    l1_envelope_mask,
    min_eigenvalue_probe,
    sample_admissible_direction,
    tangent_dimension,
)
from manifold_alm.moreau import prox_l1
from manifold_alm.problems import ProblemOracle, SpcaInstance, build_cm, build_cspca
from manifold_alm.stiefel import (
    StiefelPoint,
    TangentVector,
    orthonormal_complement,
    random_point,
    retract_array,
    tangent_component,
)


def random_element(problem, seed, sigma=2.0):
    rng = np.random.default_rng(seed)
    point = random_point(rng, problem.n, problem.r)
    lam = rng.standard_normal(problem.m)
    gamma = np.abs(rng.standard_normal(problem.q))
    sample = sample_admissible_direction(point, rng)
    return ClarkeElement(problem, point, lam, gamma, sigma, sample), point, rng


class TestDirectionSample:
    def test_structural_zero_labeled_from_below(self):
        point = StiefelPoint(np.array([[1.0], [0.0]]))
        sample = sample_admissible_direction(point, 0)
        assert sample.V.V[0, 0] == 0.0
        assert not sample.from_above[0, 0]  # Q_ij = +1 forces the lower limit

    def test_negative_unit_entry_labeled_from_above(self):
        point = StiefelPoint(np.array([[-1.0], [0.0]]))
        sample = sample_admissible_direction(point, 0)
        assert sample.V.V[0, 0] == 0.0
        assert sample.from_above[0, 0]

    def test_generic_entries_labeled_by_sign(self):
        point = random_point(1, 20, 5)
        sample = sample_admissible_direction(point, 2)
        V = sample.V.V
        assert np.all(V != 0.0)
        np.testing.assert_array_equal(sample.from_above, V > 0.0)

    def test_first_draw_accepted_on_generic_point(self):
        point = random_point(3, 20, 5)
        rng = np.random.default_rng(4)
        expected = tangent_component(point.Q, rng.standard_normal((20, 5)))
        sample = sample_admissible_direction(point, 4)
        np.testing.assert_array_equal(sample.V.V, expected)

    def test_acceptance_within_five_attempts_over_many_seeds(self):
        point = random_point(5, 5, 2)
        for seed in range(1000):
            sample_admissible_direction(point, seed, max_attempts=5)

    def test_exhaustion_raises(self):
        point = random_point(6, 4, 2)

        class ZeroGenerator(np.random.Generator):
            # degenerate stream: the projection of 0 is never admissible
            def standard_normal(self, *args, **kwargs):
                return np.zeros(args[0] if args else kwargs["size"])

        rng = ZeroGenerator(np.random.PCG64(0))
        with pytest.raises(AdmissibleDirectionError):
            sample_admissible_direction(point, rng, max_attempts=3)


class TestEnvelopeMask:
    def test_interior_and_exterior(self):
        X = np.array([[0.2, -0.3], [1.5, -2.0]])
        E = l1_envelope_mask(X, 0.5)
        np.testing.assert_array_equal(E, np.array([[1.0, 1.0], [0.0, 0.0]]))

    def test_boundary_defaults_closed(self):
        E = l1_envelope_mask(np.array([[0.5]]), 0.5)
        assert E[0, 0] == 1.0

    def test_boundary_resolved_by_sample_side(self):
        point = StiefelPoint(np.eye(2)[:, :1])
        up = type("S", (), {"from_above": np.array([[True]])})()
        down = type("S", (), {"from_above": np.array([[False]])})()
        t = 0.5
        # upper kink: moving up leaves the dead zone, moving down stays
        assert l1_envelope_mask(np.array([[t]]), t, up)[0, 0] == 0.0
        assert l1_envelope_mask(np.array([[t]]), t, down)[0, 0] == 1.0
        # lower kink: mirrored
        assert l1_envelope_mask(np.array([[-t]]), t, up)[0, 0] == 1.0
        assert l1_envelope_mask(np.array([[-t]]), t, down)[0, 0] == 0.0

    def test_boundary_agrees_with_one_sided_prox_derivative(self):
        t, h = 0.5, 1e-9
        right = (prox_l1(np.array([t + h]), t) - prox_l1(np.array([t]), t))[0] / h
        left = (prox_l1(np.array([t]), t) - prox_l1(np.array([t - h]), t))[0] / h
        # E = 1 - prox' on each side
        assert abs(right - 1.0) <= 1e-6  # leaving the dead zone: E = 0
        assert abs(left - 0.0) <= 1e-6   # staying inside:       E = 1


@pytest.fixture(params=["cm", "spca", "cspca"])
def problem(request):
    if request.param == "cm":
        return build_cm(n=24, mu=0.1, r=3)
    if request.param == "spca":
        rng = np.random.default_rng(100)
        A = rng.standard_normal((10, 24))
        return SpcaInstance(A, mu=0.5, r=3)
    return build_cspca(101, n=60, mu=0.5, r=3, delta=1e-2)


class TestClarkeElement:
    def test_zero_maps_to_zero(self, problem):
        element, point, _ = random_element(problem, 7)
        zero = TangentVector(point, np.zeros_like(point.Q))
        out = apply_clarke_element(element, zero)
        np.testing.assert_array_equal(out.V, np.zeros_like(point.Q))

    def test_self_adjoint_on_random_tangent_pairs(self, problem):
        element, point, rng = random_element(problem, 8)
        for _ in range(5):
            W = tangent_component(point.Q, rng.standard_normal(point.Q.shape))
            U = tangent_component(point.Q, rng.standard_normal(point.Q.shape))
            lhs = float(np.tensordot(element.apply_array(W), U))
            rhs = float(np.tensordot(W, element.apply_array(U)))
            assert abs(lhs - rhs) <= 1e-10 * (1 + abs(lhs))

    def test_independent_of_sample_at_generic_points(self, problem):
        element1, point, rng = random_element(problem, 9)
        sample2 = sample_admissible_direction(point, rng)
        element2 = ClarkeElement(
            problem, point, element1.lam, element1.gamma, element1.sigma, sample2
        )
        W = tangent_component(point.Q, rng.standard_normal(point.Q.shape))
        np.testing.assert_array_equal(
            element1.apply_array(W), element2.apply_array(W)
        )

    def test_matches_directional_derivative_of_gradient(self, problem):
        # central differences of the projected gradient along a retraction
        element, point, rng = random_element(problem, 10)
        Q = point.Q
        lam, gamma, sigma = element.lam, element.gamma, element.sigma

        def riemannian_grad(P):
            return tangent_component(
                P, problem.lk_euclidean_grad(P, lam, gamma, sigma)
            )

        W = tangent_component(Q, rng.standard_normal(Q.shape))
        W /= np.linalg.norm(W)
        t = 1e-5
        plus = riemannian_grad(retract_array(Q, t * W, "qr"))
        minus = riemannian_grad(retract_array(Q, -t * W, "qr"))
        fd = tangent_component(Q, (plus - minus) / (2 * t))
        got = element.apply_array(W)
        assert np.linalg.norm(fd - got) <= 1e-4 * (1 + np.linalg.norm(fd))

    def test_base_mismatch_rejected(self, problem):
        element, point, rng = random_element(problem, 11)
        other = random_point(rng, problem.n, problem.r)
        W = TangentVector(other, tangent_component(other.Q, rng.standard_normal(other.Q.shape)))
        with pytest.raises(ValueError):
            element.apply(W)


class _PureEnvelopeOracle(ProblemOracle):
    """Zero smooth part, all-ones dead-zone mask, gradient term suppressed."""

    name = "toy"

    def smooth_value(self, Q):
        return 0.0

    def euclidean_grad_smooth(self, Q):
        return np.zeros_like(Q)

    def euclidean_hessvec_smooth(self, Q, W):
        return np.zeros_like(W)

    def lk_euclidean_grad(self, Q, lam, gamma, sigma):
        return np.zeros_like(Q)


class TestMinEigenvalueProbe:
    def test_identity_on_tangent(self):
        # sigma * (W . E) with E all ones acts as the identity on tangents
        prob = _PureEnvelopeOracle(n=6, r=2, mu=10.0)
        point = random_point(12, 6, 2)
        element = ClarkeElement(prob, point, np.zeros(prob.m), np.zeros(0), 1.0)
        assert abs(min_eigenvalue_probe(element, tol=1e-10) - 1.0) <= 1e-8

    def test_one_dimensional_tangent_space(self):
        rng = np.random.default_rng(13)
        A = rng.standard_normal((2, 2))
        prob = SpcaInstance(A, mu=0.3, r=1)
        element, point, _ = random_element(prob, 14)
        v = tangent_component(point.Q, rng.standard_normal((2, 1)))
        rayleigh = float(np.tensordot(element.apply_array(v), v) / np.tensordot(v, v))
        assert abs(min_eigenvalue_probe(element, tol=1e-10) - rayleigh) <= 1e-8

    def test_matches_dense_assembly_on_cm(self):
        prob = build_cm(n=50, mu=0.05, r=5)
        element, point, _ = random_element(prob, 15, sigma=3.0)
        Q = point.Q
        n, r = Q.shape
        dim = tangent_dimension(n, r)
        Qperp = orthonormal_complement(Q)
        iu, ju = np.triu_indices(r, k=1)
        inv_sqrt2 = 1.0 / np.sqrt(2.0)

        def basis(idx):
            c = np.zeros(dim)
            c[idx] = 1.0
            Om = np.zeros((r, r))
            Om[iu, ju] = c[: iu.size] * inv_sqrt2
            Om -= Om.T
            K = c[iu.size:].reshape(n - r, r)
            return Q @ Om + Qperp @ K

        cols = [element.apply_array(basis(i)) for i in range(dim)]
        Mat = np.zeros((dim, dim))
        for j, col in enumerate(cols):
            A_coord = Q.T @ col
            Mat[: iu.size, j] = (A_coord[iu, ju] - A_coord[ju, iu]) * inv_sqrt2
            Mat[iu.size:, j] = (Qperp.T @ col).ravel()
        dense_min = np.linalg.eigvalsh(0.5 * (Mat + Mat.T))[0]
        assert abs(min_eigenvalue_probe(element, tol=1e-10) - dense_min) <= 1e-8
