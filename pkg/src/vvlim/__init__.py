"""Vanishing-viscosity limits of (boundary) Riemann problems.

Small hyperbolic-parabolic systems E(u) u_t + A(u, u_x) u_x = B(u) u_xx
with invertible or singular viscosity: envelope-based admissible-state
curves, boundary-layer manifolds, the solver maps phi / beta o phi with
local inversion, and a direct viscous simulator for cross-validation.
"""

from .boundary_layers import (
    LayerProfile,
    ManifoldParam,
    center_component_Fk,
    combined_F,
    layer_profile,
    perturbation_Fp,
    stable_component_Fs,
    stable_manifold,
)
from .boundary_riemann import (
    BoundarySolution,
    SolverRegime,
    detect_regime,
    extract_trace,
    phi_map,
    solve_boundary_riemann,
)
from .envelopes import (
    HULL_KERNEL,
    EnvelopeResult,
    SampledFunction,
    concave_envelope,
    convex_envelope,
    monotone_concave_envelope,
    monotone_convex_envelope,
)
from .errors import (
    ConvergenceError,
    InvalidInputError,
    UnsupportedCaseError,
    VvlimError,
)
from .parabolic import (
    NuFamily,
    SimGrid,
    SimResult,
    counterexample_family,
    estimate_trace,
    simulate_ibvp,
)
from .spectral import (
    EigenData,
    ReducedBlocks,
    SubspaceTriple,
    eig_pencil,
    generalized_eigs,
    reduce_singular,
    stable_dimension,
    transversal_subspaces,
    verify_count_invariance,
)
from .systems import (
    CATALOG_NAMES,
    BoundaryMap,
    HypothesisReport,
    SystemSpec,
    build_boundary_map,
    check_beta_transversality,
    check_block_linear_degeneracy,
    check_kawashima,
    check_strict_hyperbolicity,
    make_catalog_system,
)
from .wave_curves import (
    BoundaryLayer,
    ClosureModel,
    ConstantState,
    CurveState,
    Rarefaction,
    RiemannPattern,
    Shock,
    admissible_curve,
    char_admissible_curve,
    make_closure,
    sample_solution,
    solve_cauchy_riemann,
    wave_pattern,
)

__version__ = "0.1.0"
