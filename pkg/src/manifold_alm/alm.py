"""Outer augmented Lagrangian loop: subproblem dispatch, multiplier and
penalty updates, KKT residuals and termination.

The constrained problem  min f(Q) + psi(h1(Q))  s.t. h2(Q) <= 0  on the
manifold is split with auxiliary variables y = h1(Q), z = h2(Q) <= 0. Each
outer iteration minimizes the smoothed augmented objective over the manifold
(see :mod:`manifold_alm.subsolver`), recovers y and z through the proximal
and projection maps, updates the multipliers, and grows the penalty whenever
the splitting residual stalls.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .clarke import ClarkeElement, sample_admissible_direction
from .moreau import project_nonpositive
from .numerics import as_generator, symmetric_extreme_eigenvalue
from .problems import ProblemOracle
from .stiefel import StiefelPoint, orthonormality_defect, random_point, tangent_component
from .subsolver import NewtonConfig, solve_subproblem

_FEASIBILITY_SLACK = 1e-9  # tolerated h2 violation of the designated feasible point


@dataclass
class MultiplierState:
    """Running state of the outer loop."""

    lam: np.ndarray          # multiplier of y = h1(Q), length n*r
    gamma: np.ndarray        # multiplier of z = h2(Q), length q, >= 0
    sigma: float             # penalty weight, > 0
    delta_prev: float        # previous splitting residual (2-norm)
    phi_bound: float         # upper bound the subproblem must respect
    x_feas: np.ndarray       # designated feasible point (h2 <= 0)

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.gamma.size and self.gamma.min() < 0:
            raise ValueError("gamma must be nonnegative")


@dataclass
class AlmConfig:
    """Outer-loop parameters (defaults follow the compressed-modes setup)."""

    tau: float = 0.97            # residual-decrease factor keeping sigma fixed
    rho: float = 1.25            # penalty growth factor
    alpha_exp: float = 1.01      # sigma >= ||multiplier||^(1 + alpha_exp)
    sigma0: float = 1.0
    eps_kind: str = "coupled"    # "coupled": min(base^k, factor*Delta); "geometric": base^k
    eps_base: float = 0.95
    eps_feas_factor: float = 5.0
    feas_tol: float = 5e-7
    stat_tol: float | None = 5e-5   # None: terminate on feasibility alone
    max_outer: int = 500
    penalty_crosscheck: float | None = 2.5  # force sigma update when feas > c * stat

    def __post_init__(self):
        if not 0.0 < self.tau < 1.0:
            raise ValueError("tau must lie in (0, 1)")
        if self.rho <= 1.0:
            raise ValueError("rho must exceed 1")
        if self.alpha_exp <= 0:
            raise ValueError("alpha_exp must be positive")
        if self.eps_kind not in ("coupled", "geometric"):
            raise ValueError("eps_kind must be 'coupled' or 'geometric'")

    def epsilon(self, k: int, feas_prev: float) -> float:
        """Subproblem gradient target for outer iteration k (1-based).

        A small floor keeps the target positive when the feasibility residual
        vanishes (e.g. problems without any splitting to reconcile).
        """
        floor = 0.2 * self.stat_tol if self.stat_tol is not None else 1e-12
        eps = self.eps_base**k
        if self.eps_kind == "coupled" and np.isfinite(feas_prev):
            eps = min(eps, self.eps_feas_factor * feas_prev)
        return max(eps, floor)


@dataclass
class AlmTrace:
    """Append-only per-outer-iteration records of a run."""

    sigmas: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    feasibilities: list = field(default_factory=list)
    stationarities: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    newton_active: list = field(default_factory=list)
    cg_totals: list = field(default_factory=list)
    wall_times: list = field(default_factory=list)
    subsolver_traces: list = field(default_factory=list)
    gamma_mins: list = field(default_factory=list)
    gamma_dot_z: list = field(default_factory=list)
    identity_residuals: list = field(default_factory=list)
    orth_defects: list = field(default_factory=list)
    converged: bool = False

    @property
    def outer_iterations(self) -> int:
        return len(self.sigmas)

    @property
    def newton_start_fraction(self) -> float:
        if not self.newton_active:
            return 0.0
        return sum(self.newton_active) / len(self.newton_active)


class LkOracle:
    """Subproblem callbacks for a frozen multiplier state."""

    def __init__(self, problem: ProblemOracle, state: MultiplierState):
        self.problem = problem
        self.state = state

    def value(self, Q: np.ndarray) -> float:
        return self.problem.lk_value(
            Q, self.state.lam, self.state.gamma, self.state.sigma
        )

    def value_and_grad(self, Q: np.ndarray):
        value, egrad = self.problem.lk_value_and_euclidean_grad(
            Q, self.state.lam, self.state.gamma, self.state.sigma
        )
        return value, tangent_component(Q, egrad)

    def grad(self, Q: np.ndarray) -> np.ndarray:
        return self.value_and_grad(Q)[1]

    def clarke_element(self, point: StiefelPoint, rng) -> ClarkeElement:
        sample = sample_admissible_direction(point, rng)
        return ClarkeElement(
            self.problem,
            point,
            self.state.lam,
            self.state.gamma,
            self.state.sigma,
            sample,
        )


def compute_phi_bound(
    problem: ProblemOracle, x0: StiefelPoint, state: MultiplierState
) -> float:
    """Bound max{objective at the feasible point, L_sigma0 at the start}.

    Every subproblem solution is required to keep the augmented objective
    below this number, which anchors the feasibility analysis of the outer
    loop.
    """
    x_feas = state.x_feas
    h2_feas = problem.h2(x_feas)
    if h2_feas.size and h2_feas.max() > _FEASIBILITY_SLACK:
        raise ValueError("designated point violates the inequality constraints")
    at_feasible = problem.objective(x_feas)

    sigma = state.sigma
    Q0 = x0.Q
    X = Q0 + problem.dh1_adjoint(state.lam) / sigma
    y0 = problem.l1_prox(X, sigma)
    split1 = X - y0
    lagrangian = problem.smooth_value(Q0)
    lagrangian += problem.mu * float(np.abs(y0).sum())
    lagrangian += 0.5 * sigma * float(np.sum(split1 * split1))
    lagrangian -= float(state.lam @ state.lam) / (2.0 * sigma)
    if problem.q:
        slack = problem.h2(Q0) + state.gamma / sigma
        z0 = project_nonpositive(slack)
        split2 = slack - z0
        lagrangian += 0.5 * sigma * float(np.sum(split2 * split2))
        lagrangian -= float(state.gamma @ state.gamma) / (2.0 * sigma)
    return max(at_feasible, lagrangian)


def update_multipliers(
    state: MultiplierState,
    h1x: np.ndarray,
    y: np.ndarray,
    h2x: np.ndarray,
    z: np.ndarray,
) -> MultiplierState:
    """lam += sigma (h1 - y); gamma += sigma (h2 - z).

    When z is exactly the orthant projection of h2 + gamma/sigma, the gamma
    update algebraically equals sigma * max(h2 + gamma/sigma, 0); computing
    it in that form keeps gamma >= 0 and gamma^T z = 0 exact in floating
    point.
    """
    if h1x.shape != y.shape or h2x.shape != z.shape:
        raise ValueError("shape mismatch in multiplier update")
    lam_new = state.lam + state.sigma * (h1x - y)
    if h2x.size:
        slack = h2x + state.gamma / state.sigma
        if np.array_equal(z, project_nonpositive(slack)):
            gamma_new = state.sigma * np.maximum(slack, 0.0)
        else:
            gamma_new = state.gamma + state.sigma * (h2x - z)
    else:
        gamma_new = state.gamma
    return replace(state, lam=lam_new, gamma=gamma_new)


def update_penalty(
    state: MultiplierState,
    delta_k: float,
    cfg: AlmConfig,
    crosscheck_fired: bool = False,
) -> MultiplierState:
    """Keep sigma when the splitting residual decayed enough; grow it otherwise.

    ``delta_prev`` starts at +inf, so the penalty is never grown on the first
    iteration unless the feasibility/stationarity crosscheck fires.
    """
    if delta_k < 0:
        raise ValueError("delta_k must be nonnegative")
    if delta_k <= cfg.tau * state.delta_prev and not crosscheck_fired:
        return replace(state, delta_prev=delta_k)
    lam_norm = float(np.linalg.norm(state.lam))
    gamma_norm = float(np.linalg.norm(state.gamma)) if state.gamma.size else 0.0
    sigma_new = max(
        cfg.rho * state.sigma,
        lam_norm ** (1.0 + cfg.alpha_exp),
        gamma_norm ** (1.0 + cfg.alpha_exp),
    )
    return replace(state, sigma=sigma_new, delta_prev=delta_k)


def _min_norm_l1_subgradient(R: np.ndarray, lam_mat: np.ndarray, mu: float) -> float:
    """inf-norm of the minimum-norm element of mu * d||R||_1 - Lambda."""
    off = np.where(
        R != 0.0,
        np.abs(mu * np.sign(R) - lam_mat),
        np.maximum(np.abs(lam_mat) - mu, 0.0),
    )
    return float(off.max()) if off.size else 0.0


def kkt_residuals(problem: ProblemOracle, point: StiefelPoint, state: MultiplierState):
    """Normalized feasibility and stationarity residuals at ``point``.

    Uses the prox-updated auxiliary R and the corresponding updated
    multipliers, so the pair measures how close the current iterate is to a
    KKT point of the split problem. Both quantities are scale-normalized
    inf-norms.
    """
    Q = point.Q
    sigma = state.sigma
    X = Q + problem.dh1_adjoint(state.lam) / sigma
    R = problem.l1_prox(X, sigma)
    lam_plus = sigma * (X - R)

    norm_Q = float(np.linalg.norm(Q))
    norm_R = float(np.linalg.norm(R))
    feas = float(np.abs(Q - R).max()) / (max(norm_Q, norm_R) + 1.0)

    egrad = problem.euclidean_grad_smooth(Q) + lam_plus
    if problem.q:
        h2x = problem.h2(Q)
        slack = h2x + state.gamma / sigma
        z = project_nonpositive(slack)
        gamma_plus = sigma * np.maximum(slack, 0.0)
        egrad = egrad + problem.dh2_adjoint(Q, gamma_plus)
        denom = max(float(np.linalg.norm(h2x)), float(np.linalg.norm(z))) + 1.0
        feas += float(np.abs(h2x - z).max()) / denom

    grad_l = tangent_component(Q, egrad)
    stat = float(np.abs(grad_l).max()) / (norm_Q + 1.0)
    stat += _min_norm_l1_subgradient(R, lam_plus, problem.mu) / (norm_R + 1.0)
    return feas, stat


def spca_initial_sigma(problem) -> float:
    """3 * lambda_max(A^T A), the recommended starting penalty for sparse PCA."""
    M = problem.M
    lam_max = symmetric_extreme_eigenvalue(
        lambda v: M @ v, M.shape[0], which="max", tol=1e-8
    )
    return 3.0 * lam_max


def default_configs(problem: ProblemOracle, tolerance: str = "standard"):
    """Per-problem outer/inner parameter presets used by the benchmarks."""
    if tolerance not in ("standard", "high"):
        raise ValueError("tolerance must be 'standard' or 'high'")
    kind = problem.name
    if kind == "cm":
        alm = AlmConfig()
        newton = NewtonConfig(linesearch="ls1")
        if tolerance == "high":
            alm = replace(alm, feas_tol=5e-8, stat_tol=5e-8)
    elif kind == "spca":
        # the sparse-PCA benchmark always runs at the tight threshold
        alm = AlmConfig(
            tau=0.99,
            sigma0=spca_initial_sigma(problem),
            eps_kind="geometric",
            eps_base=0.9,
            feas_tol=5e-8,
            stat_tol=5e-8,
        )
        newton = NewtonConfig(
            linesearch="ls2", fo_max_iters=300, cg_max_iters=300
        )
    elif kind == "cspca":
        alm = AlmConfig(
            tau=0.25,
            rho=10.0,
            sigma0=1.0,
            eps_kind="geometric",
            eps_base=0.1,
            feas_tol=1e-9,
            stat_tol=None,
            penalty_crosscheck=None,
            max_outer=60,
        )
        newton = NewtonConfig(linesearch="ls2", fo_max_iters=2000)
    else:
        raise ValueError(f"no preset for problem kind {kind!r}")
    return alm, newton


def run_alm(
    problem: ProblemOracle,
    cfg: AlmConfig,
    newton_cfg: NewtonConfig,
    seed,
    x0: StiefelPoint | None = None,
):
    """Full outer loop; returns (final point, final state, trace).

    ``seed`` drives the random initial point and all randomized
    generalized-derivative sampling, so identical inputs reproduce the run
    bit for bit.
    """
    seq = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = seq.spawn(cfg.max_outer + 1)
    if x0 is None:
        x = random_point(as_generator(children[0]), problem.n, problem.r)
    else:
        x = x0

    feasible = problem.feasible_point()
    x_feas = x.Q if feasible is None else np.asarray(feasible, dtype=float)
    state = MultiplierState(
        lam=np.zeros(problem.m),
        gamma=np.zeros(problem.q),
        sigma=cfg.sigma0,
        delta_prev=np.inf,
        phi_bound=0.0,
        x_feas=x_feas,
    )
    state.phi_bound = compute_phi_bound(problem, x, state)

    trace = AlmTrace()
    feas_prev = np.inf
    for k in range(1, cfg.max_outer + 1):
        t0 = time.perf_counter()
        eps_k = cfg.epsilon(k, feas_prev)
        lk = LkOracle(problem, state)
        if lk.value(x.Q) > state.phi_bound:
            x = StiefelPoint(state.x_feas)
        x, sub_trace = solve_subproblem(
            lk, x, eps_k, state.phi_bound, newton_cfg, children[k]
        )

        Q = x.Q
        sigma = state.sigma
        h1x = problem.h1(Q)
        X = Q + problem.dh1_adjoint(state.lam) / sigma
        y = problem.l1_prox(X, sigma).ravel()
        h2x = problem.h2(Q)
        z = project_nonpositive(h2x + state.gamma / sigma) if problem.q else h2x

        feas, stat = kkt_residuals(problem, x, state)
        new_state = update_multipliers(state, h1x, y, h2x, z)
        delta_k = max(
            float(np.linalg.norm(h1x - y)),
            float(np.linalg.norm(h2x - z)) if problem.q else 0.0,
        )

        # cross-module consistency: the subproblem gradient must equal the
        # multiplier form grad f + sum lam_i grad[h1]_i + sum gamma_i grad[h2]_i
        grad_sub = lk.grad(Q)
        egrad_direct = problem.euclidean_grad_smooth(Q) + new_state.lam.reshape(Q.shape)
        if problem.q:
            egrad_direct = egrad_direct + problem.dh2_adjoint(Q, new_state.gamma)
        identity_residual = float(
            np.linalg.norm(grad_sub - tangent_component(Q, egrad_direct))
        )

        trace.sigmas.append(sigma)
        trace.deltas.append(delta_k)
        trace.feasibilities.append(feas)
        trace.stationarities.append(stat)
        trace.losses.append(problem.objective(Q))
        trace.newton_active.append(sub_trace.newton_activated)
        trace.cg_totals.append(sum(sub_trace.cg_iterations))
        trace.subsolver_traces.append(sub_trace)
        trace.gamma_mins.append(float(new_state.gamma.min()) if problem.q else 0.0)
        trace.gamma_dot_z.append(float(new_state.gamma @ z) if problem.q else 0.0)
        trace.identity_residuals.append(identity_residual)
        trace.orth_defects.append(orthonormality_defect(Q))
        trace.wall_times.append(time.perf_counter() - t0)

        if feas <= cfg.feas_tol and (cfg.stat_tol is None or stat <= cfg.stat_tol):
            state = replace(new_state, delta_prev=delta_k)
            trace.converged = True
            break

        fired = (
            cfg.penalty_crosscheck is not None
            and feas > cfg.penalty_crosscheck * stat
        )
        state = update_penalty(new_state, delta_k, cfg, crosscheck_fired=fired)
        feas_prev = feas

    return x, state, trace
