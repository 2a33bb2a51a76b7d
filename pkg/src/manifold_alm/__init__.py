"""Augmented Lagrangian solver for nonsmooth optimization on the Stiefel
manifold, with a globalized semismooth Newton subproblem solver.

Typical use: build a problem instance, grab its parameter presets, and run::

    from manifold_alm import build_cm, default_configs, run_alm

    problem = build_cm(n=200, mu=0.1, r=20)
    alm_cfg, newton_cfg = default_configs(problem)
    point, state, trace = run_alm(problem, alm_cfg, newton_cfg, seed=0)
"""

from .alm import (
    AlmConfig,
    AlmTrace,
    LkOracle,
    MultiplierState,
    compute_phi_bound,
    default_configs,
    kkt_residuals,
    run_alm,
    update_multipliers,
    update_penalty,
)
from .clarke import (
    ClarkeElement,
    DirectionSample,
    apply_clarke_element,
    l1_envelope_mask,
    min_eigenvalue_probe,
    sample_admissible_direction,
)
from .moreau import (
    EnvelopeResult,
    env_indicator_nonpositive,
    env_l1,
    project_nonpositive,
    prox_l1,
)
from .numerics import (
    EigenConvergenceError,
    gaussian_matrix,
    matrix_exponential,
    polar_orthonormal_factor,
    qr_orthonormal_factor,
    symmetric_extreme_eigenvalue,
)
from .problems import (
    CmInstance,
    ConstrainedSpcaInstance,
    ProblemOracle,
    SpcaInstance,
    build_cm,
    build_cspca,
    build_spca,
    cpav,
    load_instance,
    save_instance,
    sparsity_percent,
)
from .stiefel import (
    RetractionKind,
    StiefelPoint,
    TangentVector,
    inner,
    project_tangent,
    random_point,
    retract,
)
from .subsolver import (
    NewtonConfig,
    StepUnderflow,
    SubsolverTrace,
    cg_regularized,
    first_order_phase,
    ls_armijo,
    ls_residual,
    solve_subproblem,
)

__version__ = "0.1.0"
