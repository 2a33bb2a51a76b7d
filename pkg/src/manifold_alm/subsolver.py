"""Globalized semismooth Newton method for the augmented subproblem.

Each outer iteration of the augmented Lagrangian loop needs a point whose
Riemannian gradient norm is below a shrinking target. The driver below runs
a Barzilai-Borwein gradient phase until the gradient is small enough for the
Newton model to be trustworthy, then switches to regularized semismooth
Newton steps: a CG solve of ``(H + omega I) V = -grad`` over the tangent
space with a generalized-Hessian element H, followed by one of two
backtracking line searches (Armijo on the objective, or residual decrease).
The activation threshold adapts when the Newton phase misbehaves.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .numerics import as_generator
from .stiefel import RetractionKind, StiefelPoint, retract_array


class StepUnderflow(RuntimeError):
    """Armijo backtracking hit the minimal step without sufficient decrease."""


@dataclass
class NewtonConfig:
    """Parameters of the subproblem solver (defaults follow the benchmarks)."""

    mu_ls: float = 0.1          # Armijo constant, in (0, 1/2)
    delta_ls: float = 0.5       # backtracking ratio, in (0, 1)
    nu_bar: float = 1.0         # regularization exponent, in (0, 1]
    beta0: float = 1.0          # sufficient-descent constants
    beta1: float = 1e-3
    p_exp: float = 0.05
    m_max: int = 13             # step-exponent cap for the residual search
    eta0: float = 0.1           # CG tolerance schedule eta_k = eta0 * decay^k
    eta_decay: float = 0.9
    min_step: float = 1e-4      # smallest admissible Armijo step
    cg_max_iters: int = 1000
    omega_schedule: str = "experiment-min"  # or "paper-power"
    omega_c1: float = 0.7       # experiment-min: omega = min(c1^k, c2*||grad||)
    omega_c2: float = 200.0
    omega_floor: float = 1e-12  # keeps H + omega*I regularizable near solutions
    linesearch: str = "ls1"     # "ls1" (objective Armijo) or "ls2" (residual)
    retraction: RetractionKind = RetractionKind.QR
    delta_G: float = 5e-4       # Newton activation threshold on ||grad||
    # first-order warm-start phase (Riemannian BB with nonmonotone Armijo)
    fo_max_iters: int = 1000
    fo_initial_step: float = 1e-2
    fo_backtrack: float = 0.5
    fo_armijo: float = 1e-4
    fo_memory: int = 5
    # safeguards: threshold adaptation triggers and budgets
    newton_episode_cap: int = 10
    direction_norm_cap: float = 1e4
    cg_restart_cap: int = 5
    max_total_iters: int = 100000

    def __post_init__(self):
        self.retraction = RetractionKind.parse(self.retraction)
        if not 0.0 < self.mu_ls < 0.5:
            raise ValueError("mu_ls must lie in (0, 1/2)")
        if not 0.0 < self.delta_ls < 1.0:
            raise ValueError("delta_ls must lie in (0, 1)")
        if not 0.0 < self.nu_bar <= 1.0:
            raise ValueError("nu_bar must lie in (0, 1]")
        if self.linesearch not in ("ls1", "ls2"):
            raise ValueError("linesearch must be 'ls1' or 'ls2'")
        if self.omega_schedule not in ("experiment-min", "paper-power"):
            raise ValueError("omega_schedule must be 'experiment-min' or 'paper-power'")
        if min(self.beta0, self.beta1, self.min_step, self.eta0) <= 0:
            raise ValueError("beta0, beta1, min_step and eta0 must be positive")


@dataclass
class SubsolverTrace:
    """Per-iteration diagnostics of a single subproblem solve."""

    grad_norms: list = field(default_factory=list)
    objective_values: list = field(default_factory=list)
    step_exponents: list = field(default_factory=list)   # None for gradient steps
    cg_iterations: list = field(default_factory=list)
    used_first_order: list = field(default_factory=list)
    negative_curvature: list = field(default_factory=list)
    initial_grad_norm: float = float("nan")
    converged: bool = True
    newton_activated: bool = False

    def record(self, grad_norm, objective, first_order, m=None, cg_iters=0, neg=False):
        if not np.isfinite(grad_norm):
            raise ValueError("non-finite gradient norm in trace")
        self.grad_norms.append(float(grad_norm))
        self.objective_values.append(float(objective))
        self.step_exponents.append(m)
        self.cg_iterations.append(int(cg_iters))
        self.used_first_order.append(bool(first_order))
        self.negative_curvature.append(bool(neg))

    def __len__(self):
        return len(self.grad_norms)

    def newton_step_count(self) -> int:
        return sum(1 for fo in self.used_first_order if not fo)

    def newton_episodes(self):
        """Contiguous runs of Newton records as (pre_norm, norms, exponents)."""
        episodes = []
        i = 0
        while i < len(self.grad_norms):
            if self.used_first_order[i]:
                i += 1
                continue
            j = i
            while j < len(self.grad_norms) and not self.used_first_order[j]:
                j += 1
            pre = self.grad_norms[i - 1] if i > 0 else self.initial_grad_norm
            episodes.append(
                (pre, self.grad_norms[i:j], self.step_exponents[i:j])
            )
            i = j
        return episodes


@dataclass
class CgResult:
    V: np.ndarray
    status: str                # "converged" | "negative_curvature" | "max_iters"
    direction: np.ndarray | None
    iterations: int
    residual_norm: float
    curvature: float = 0.0     # <(H + omega I) p, p> for the returned direction
    direction_sq: float = 0.0


def _dot(A, B) -> float:
    return float(np.tensordot(A, B))


def cg_regularized(apply_H, X, omega, tol, max_iters) -> CgResult:
    """Conjugate gradients for (H + omega I) V = -X on the tangent space.

    Stops when ||(H + omega I) V + X|| <= tol. If a direction of nonpositive
    curvature of the regularized operator shows up, it is returned for the
    caller to re-regularize. All iterates stay tangent because ``apply_H``
    maps the tangent space to itself.
    """
    if omega <= 0:
        raise ValueError("omega must be positive")
    V = np.zeros_like(X)
    resid = -np.asarray(X, dtype=float)
    rs = _dot(resid, resid)
    if np.sqrt(rs) <= tol:
        return CgResult(V, "converged", None, 0, float(np.sqrt(rs)))
    p = resid.copy()
    for it in range(1, max_iters + 1):
        Hp = apply_H(p) + omega * p
        pHp = _dot(p, Hp)
        psq = _dot(p, p)
        if pHp <= 0.0:
            return CgResult(
                V, "negative_curvature", p, it, float(np.sqrt(rs)), pHp, psq
            )
        alpha = rs / pHp
        V = V + alpha * p
        resid = resid - alpha * Hp
        rs_new = _dot(resid, resid)
        if np.sqrt(rs_new) <= tol:
            return CgResult(V, "converged", None, it, float(np.sqrt(rs_new)))
        p = resid + (rs_new / rs) * p
        rs = rs_new
    return CgResult(V, "max_iters", None, max_iters, float(np.sqrt(rs)))


def ls_armijo(phi, point: StiefelPoint, X, V, cfg: NewtonConfig):
    """Armijo backtracking with the sufficient-descent safeguard (LS-I).

    If V fails <-X, V> >= min(beta0, beta1 ||V||^p) ||V||^2 it is replaced by
    the steepest-descent direction -X. Returns the smallest step exponent
    m with delta^m >= min_step that achieves the Armijo decrease, together
    with the new point, the direction actually used and the new objective.

    Raises ``StepUnderflow`` when no admissible step succeeds.
    """
    vnorm = float(np.linalg.norm(V))
    descent = -_dot(X, V)
    if vnorm == 0.0 or descent < min(cfg.beta0, cfg.beta1 * vnorm**cfg.p_exp) * vnorm**2:
        V = -X
        descent = _dot(X, X)
    phi0 = phi(point.Q)
    m = 0
    step = 1.0
    while step >= cfg.min_step:
        cand = StiefelPoint(retract_array(point.Q, step * V, cfg.retraction))
        val = phi(cand.Q)
        if val <= phi0 - cfg.mu_ls * step * descent:
            return m, cand, V, val
        m += 1
        step *= cfg.delta_ls
    raise StepUnderflow(f"no Armijo step above {cfg.min_step:g}")


def ls_residual(grad_at, point: StiefelPoint, X, V, cfg: NewtonConfig):
    """Residual-decrease backtracking (LS-II).

    Finds the smallest m <= m_max with ||X(R(delta^m V))|| bounded by
    (1 - 2 mu delta^m) ||X||; when none exists the m_max step is taken
    anyway, so the residual may increase. Returns the new gradient as well
    to spare the caller a recomputation.
    """
    norm_X = float(np.linalg.norm(X))
    cand = grad_new = None
    for m in range(cfg.m_max + 1):
        step = cfg.delta_ls**m
        cand = StiefelPoint(retract_array(point.Q, step * V, cfg.retraction))
        grad_new = grad_at(cand.Q)
        if np.linalg.norm(grad_new) <= (1.0 - 2.0 * cfg.mu_ls * step) * norm_X:
            return m, cand, grad_new
    return cfg.m_max, cand, grad_new


def first_order_phase(
    value_and_grad,
    point: StiefelPoint,
    target: float,
    max_iters: int,
    cfg: NewtonConfig,
    phi_bound: float = np.inf,
    trace: SubsolverTrace | None = None,
):
    """Riemannian BB gradient descent with nonmonotone Armijo backtracking.

    Runs until ||grad|| < target (with objective at most ``phi_bound``) or
    the iteration budget is exhausted. Returns (point, iters, value, grad);
    the returned iterate never exceeds the bound because the best-seen point
    is restored if the last one does.
    """
    if target <= 0:
        raise ValueError("target must be positive")
    val, G = value_and_grad(point.Q)
    gnorm = float(np.linalg.norm(G))
    best_val, best_point = val, point
    history = deque([val], maxlen=cfg.fo_memory)
    step = cfg.fo_initial_step
    iters = 0
    while not (gnorm < target and val <= phi_bound) and iters < max_iters:
        reference = max(history)
        t = step
        while True:
            cand = StiefelPoint(retract_array(point.Q, -t * G, cfg.retraction))
            cval, cG = value_and_grad(cand.Q)
            if cval <= reference - cfg.fo_armijo * t * gnorm**2 or t <= 1e-15:
                break
            t *= cfg.fo_backtrack
        S = cand.Q - point.Q
        Y = cG - G
        sy = _dot(S, Y)
        # alternating Barzilai-Borwein step with a positivity safeguard
        if np.isfinite(sy) and sy > 1e-300:
            bb = _dot(S, S) / sy if iters % 2 == 0 else sy / _dot(Y, Y)
            step = float(np.clip(bb, 1e-10, 1e4))
        else:
            step = cfg.fo_initial_step
        point, val, G = cand, cval, cG
        gnorm = float(np.linalg.norm(G))
        history.append(val)
        if val < best_val:
            best_val, best_point = val, point
        iters += 1
        if trace is not None:
            trace.record(gnorm, val, first_order=True)
    if val > phi_bound:
        point = best_point
        val, G = value_and_grad(point.Q)
        gnorm = float(np.linalg.norm(G))
    return point, iters, val, G


def _omega(cfg: NewtonConfig, k_inner: int, gnorm: float) -> float:
    if cfg.omega_schedule == "paper-power":
        omega = gnorm**cfg.nu_bar
    else:
        omega = min(cfg.omega_c1 ** k_inner, cfg.omega_c2 * gnorm)
    return max(omega, cfg.omega_floor)


def _newton_direction(element, G, omega, eta, cfg: NewtonConfig):
    """CG solve with re-regularization restarts on negative curvature."""
    cg_total = 0
    saw_negative = False
    for _ in range(cfg.cg_restart_cap + 1):
        result = cg_regularized(element.apply_array, G, omega, eta, cfg.cg_max_iters)
        cg_total += result.iterations
        if result.status != "negative_curvature":
            return result.V, cg_total, saw_negative
        saw_negative = True
        # Rayleigh quotient of the unregularized element along the bad
        # direction; doubling its magnitude makes the curvature positive
        rayleigh = result.curvature / result.direction_sq - omega
        omega = max(-2.0 * rayleigh, cfg.omega_floor)
    return -G, cg_total, saw_negative


def solve_subproblem(
    lk,
    point: StiefelPoint,
    eps_k: float,
    phi_bound: float,
    cfg: NewtonConfig,
    seed,
):
    """Drive ||grad L_k|| below ``eps_k`` while keeping L_k <= ``phi_bound``.

    ``lk`` bundles the subproblem callbacks: ``value(Q)``,
    ``value_and_grad(Q)``, ``grad(Q)`` and ``clarke_element(point, rng)``.
    The first-order phase runs until the gradient norm falls below the
    activation threshold, after which Newton episodes take over; the
    threshold shrinks whenever an episode stalls (step underflow, episode
    too long, or an exploding direction), mirroring the adaptive rules the
    benchmarks use. Returns the final point and the iteration trace.
    """
    if eps_k <= 0:
        raise ValueError("eps_k must be positive")
    rng = as_generator(seed)
    trace = SubsolverTrace()
    delta_g = cfg.delta_G
    val, G = lk.value_and_grad(point.Q)
    gnorm = float(np.linalg.norm(G))
    trace.initial_grad_norm = gnorm
    best_val, best_point = val, point
    total = 0
    k_inner = 0

    def done():
        return gnorm < eps_k and val <= phi_bound

    while not done() and total < cfg.max_total_iters:
        fo_target = max(eps_k, delta_g)
        budget = min(cfg.fo_max_iters, cfg.max_total_iters - total)
        point, fo_iters, val, G = first_order_phase(
            lk.value_and_grad, point, fo_target, budget, cfg,
            phi_bound=phi_bound, trace=trace,
        )
        gnorm = float(np.linalg.norm(G))
        total += max(fo_iters, 1)
        if val < best_val:
            best_val, best_point = val, point
        if done() or gnorm >= delta_g:
            continue

        # Newton episode
        trace.newton_activated = True
        steps = 0
        while not done() and total < cfg.max_total_iters:
            if steps >= cfg.newton_episode_cap:
                delta_g *= 0.9
                break
            element = lk.clarke_element(point, rng)
            omega = _omega(cfg, k_inner, gnorm)
            eta = max(min(cfg.eta0 * cfg.eta_decay**k_inner, gnorm ** (1.0 + cfg.nu_bar)), 1e-15)
            V, cg_iters, neg = _newton_direction(element, G, omega, eta, cfg)
            k_inner += 1
            total += 1
            steps += 1
            if np.linalg.norm(V) > cfg.direction_norm_cap:
                delta_g *= 0.8
                break
            if cfg.linesearch == "ls1":
                try:
                    m, point, _, val = ls_armijo(lk.value, point, G, V, cfg)
                except StepUnderflow:
                    delta_g *= 0.95
                    break
                G = lk.grad(point.Q)
                gnorm = float(np.linalg.norm(G))
            else:
                m, point, G = ls_residual(lk.grad, point, G, V, cfg)
                gnorm = float(np.linalg.norm(G))
                val = lk.value(point.Q)
            trace.record(gnorm, val, first_order=False, m=m, cg_iters=cg_iters, neg=neg)
            if val < best_val:
                best_val, best_point = val, point
            if cfg.linesearch == "ls2" and val > phi_bound:
                # LS-II is not a descent method; restart the gradient phase
                # from the best iterate seen so far
                point = best_point
                val, G = lk.value_and_grad(point.Q)
                gnorm = float(np.linalg.norm(G))
                break

    trace.converged = done()
    if not trace.converged and best_val < val:
        point = best_point
    return point, trace
