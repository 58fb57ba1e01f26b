"""The boundary Riemann solver maps phi and their Newton inversion.

Four regimes, split by whether the viscosity matrix is invertible and
whether an eigenvalue of E^-1 A can vanish at the boundary.  In every
regime the map phi composes the positive-speed admissible curves
(outermost family first) with a layer description: the stable-manifold
chart in the non-characteristic case, the combined map F in the
characteristic one.  For singular viscosity the datum lives in the
range of the boundary map and the solver inverts the composition with it.
"""

from dataclasses import dataclass, field

import numpy as np

from .boundary_layers import combined_F, stable_manifold
from .errors import InvalidInputError, UnsupportedCaseError
from .spectral import eig_pencil
from .systems import build_boundary_map
from .wave_curves import (
    BoundaryLayer,
    ConstantState,
    CurveState,
    RiemannPattern,
    _damped_newton,
    admissible_curve,
    make_closure,
    sample_solution,
    wave_pattern,
)

DEFAULT_CHAR_MARGIN = 5.0  # the constant M in |lambda_k| <= M delta


@dataclass
class SolverRegime:
    viscosity: str        # "invertible" | "singular"
    boundary: str         # "non_characteristic" | "characteristic"
    counts: tuple         # (n or k-1, n11, q)
    parameter_dim: int
    char_family: int | None = None
    M: float = DEFAULT_CHAR_MARGIN
    delta: float = 0.0

    @property
    def characteristic(self):
        return self.boundary == "characteristic"


@dataclass
class BoundarySolution:
    s: np.ndarray
    pattern: RiemannPattern
    trace: np.ndarray
    residual: float
    newton_iters: int
    regime: SolverRegime = None


def detect_regime(spec, u0, delta=None, M=DEFAULT_CHAR_MARGIN) -> SolverRegime:
    """Classify the boundary state.

    Characteristic iff some |lambda_i(u0)| <= M * delta; two eigenvalues
    inside the margin violate the strict-hyperbolicity margin and raise.
    """
    u0 = np.atleast_1d(np.asarray(u0, float))
    delta = float(delta if delta is not None else spec.delta)
    margin = M * delta
    gap = eig_pencil(spec, u0).gap
    if np.isfinite(gap):
        # the margin may not span more than one eigenvalue of a strictly
        # hyperbolic pencil
        margin = min(margin, 0.5 * gap)
    ea = eig_pencil(spec, u0, near_zero_tol=margin)
    near = np.abs(ea.values) <= margin
    if near.sum() > 1:
        raise UnsupportedCaseError(
            "two eigenvalues simultaneously near zero: the strict "
            "hyperbolicity margin is violated"
        )
    char = bool(near.any())
    char_family = int(np.argmax(near)) + 1 if char else None
    n_or_km1 = ea.k_minus_1 if char else ea.n
    n11 = q = 0
    if spec.singular:
        nr = spec.N - spec.r
        from .systems import sym_pencil_eig

        w11, _ = sym_pencil_eig(spec.A0(u0)[:nr, :nr], spec.E(u0)[:nr, :nr])
        s11 = max(1.0, np.abs(w11).max())
        n11 = int(np.count_nonzero(w11 < -1e-9 * s11))
        q = int(np.count_nonzero(np.abs(w11) <= 1e-9 * s11))
    pdim = spec.N - n11 - q if spec.singular else spec.N
    return SolverRegime(
        viscosity="singular" if spec.singular else "invertible",
        boundary="characteristic" if char else "non_characteristic",
        counts=(n_or_km1, n11, q), parameter_dim=pdim,
        char_family=char_family, M=M, delta=delta,
    )


class PhiMap:
    """Callable boundary solver map with its assembly data.

    Parameter layout follows the family slots of the paper composition:
    layer coordinates first, the characteristic parameter (if any) in its
    family slot, the outgoing curve parameters last.
    """

    def __init__(self, spec, regime, u0, m=None, with_perturbation=True,
                 refined_layers=False):
        self.spec = spec
        self.regime = regime
        self.u0 = np.atleast_1d(np.asarray(u0, float))
        self.m = m
        self.with_perturbation = with_perturbation
        n_or_km1, n11, q = regime.counts
        self.n_layer_params = n_or_km1 - (n11 + q)
        if regime.characteristic:
            k = regime.char_family
            self.out_families = list(range(k + 1, spec.N + 1))
            self.char_closure = make_closure(spec, k, self.u0)
        else:
            n = n_or_km1
            self.out_families = list(range(n + 1, spec.N + 1))
            self.char_closure = None
        self.out_closures = [make_closure(spec, i, self.u0)
                             for i in self.out_families]
        self.refined_layers = refined_layers
        dim = (self.n_layer_params + (1 if regime.characteristic else 0)
               + len(self.out_families))
        if dim != regime.parameter_dim:
            raise UnsupportedCaseError(
                f"parameter bookkeeping mismatch: {dim} slots vs "
                f"parameter_dim {regime.parameter_dim}"
            )
        self.dim = dim

    def split(self, s):
        s = np.atleast_1d(np.asarray(s, float))
        if s.shape != (self.dim,):
            raise InvalidInputError(f"phi expects {self.dim} parameters")
        nl = self.n_layer_params
        if self.regime.characteristic:
            return s[:nl], float(s[nl]), s[nl + 1:]
        return s[:nl], None, s[nl:]

    def __call__(self, s, full=False):
        """Boundary value phi(u0, s); with full=True also the assembly
        (outgoing curves, characteristic curve, layer data)."""
        s_layer, s_k, s_out = self.split(s)
        state = self.u0
        out_curves = []
        for closure, si in sorted(zip(self.out_closures, s_out),
                                  key=lambda t: -t[0].family):
            cur = admissible_curve(self.spec, closure, state, si, m=self.m)
            out_curves.append(cur)
            state = cur.endpoint
        out_curves.reverse()
        u_bar = state
        if self.regime.characteristic:
            value, char_curve, fs = combined_F(
                self.spec, self.char_closure, u_bar,
                np.concatenate([s_layer, [s_k]]), m=self.m,
                with_perturbation=self.with_perturbation,
            )
            if full:
                return value, out_curves, char_curve, u_bar
            return value
        chart = stable_manifold(self.spec, u_bar,
                                n_stable=self.n_layer_params,
                                refined=self.refined_layers)
        value = chart(s_layer)
        if full:
            return value, out_curves, None, u_bar
        return value


def phi_map(spec, regime, u0, s, m=None, with_perturbation=True):
    """One-shot evaluation of the boundary solver map."""
    return PhiMap(spec, regime, u0, m=m,
                  with_perturbation=with_perturbation)(s)


def solve_boundary_riemann(spec, u0, boundary_datum, regime=None, m=None,
                           with_perturbation=True, tol=None,
                           max_iter=50) -> BoundarySolution:
    """Invert the solver map on the boundary datum and build the pattern.

    Invertible viscosity solves phi(u0, s) = u_b for the full boundary
    state; singular viscosity solves beta(phi(u0, s)) = g with the
    boundary map frozen at u0.  The Newton iteration starts at s = 0 with
    step halving and a chord Jacobian refreshed on stagnation.
    """
    u0 = np.atleast_1d(np.asarray(u0, float))
    datum = np.atleast_1d(np.asarray(boundary_datum, float))
    if regime is None:
        regime = detect_regime(spec, u0)
    phi = PhiMap(spec, regime, u0, m=m, with_perturbation=with_perturbation)
    if spec.singular:
        bmap = build_boundary_map(spec, u0)
        if datum.shape != (bmap.out_dim,):
            raise InvalidInputError(
                f"singular regime expects a datum of dimension {bmap.out_dim}"
            )
        if np.linalg.norm(bmap(u0) - datum) > spec.delta + 1e-12:
            raise InvalidInputError("|beta(u0) - g| exceeds delta")
        target = datum

        def residual(s):
            val, *assembly = phi(s, full=True)
            return bmap(val) - target, (val, assembly)
    else:
        if datum.shape != (spec.N,):
            raise InvalidInputError(f"datum must be an {spec.N}-vector")
        if np.linalg.norm(datum - u0) > spec.delta + 1e-12:
            raise InvalidInputError("|u_b - u0| exceeds delta")

        def residual(s):
            val, *assembly = phi(s, full=True)
            return val - datum, (val, assembly)

    tol = tol if tol is not None else 1e-9 * (1.0 + np.linalg.norm(u0))
    s, payload, rnorm, iters = _damped_newton(residual, np.zeros(phi.dim),
                                              tol, max_iter)
    value, (out_curves, char_curve, u_bar) = payload
    pattern, trace = _assemble_pattern(
        spec, regime, value, u_bar, out_curves, char_curve, u0
    )
    return BoundarySolution(
        s=s, pattern=pattern, trace=trace, residual=float(rnorm),
        newton_iters=iters, regime=regime,
    )


def _assemble_pattern(spec, regime, boundary_value, u_bar, out_curves,
                      char_curve, u0):
    """Glue the layer and the entering waves into a speed-ordered pattern."""
    pieces = []
    if regime.characteristic and char_curve is not None:
        s_bar = char_curve.s_bar if char_curve.s_bar is not None else \
            abs(char_curve.s)
        if s_bar <= char_curve.grid[0] + 1e-15 * (1.0 + s_bar):
            # sigma vanishes immediately: the whole family folds into
            # the layer and the trace is the curve base itself
            trace = char_curve.u[0].copy()
            char_pieces = []
        else:
            entering = char_curve.restrict(s_bar)
            trace = entering.endpoint.copy()
            char_pieces = wave_pattern(entering)
    else:
        trace = u_bar.copy()
        char_pieces = []
    layer_gap = np.linalg.norm(np.asarray(boundary_value) - trace)
    if layer_gap > 1e-9 * (1.0 + np.linalg.norm(trace)):
        pieces.append(BoundaryLayer(
            u_boundary=np.asarray(boundary_value, float).copy(),
            u_trace=trace.copy(),
        ))
    pieces.append(ConstantState(trace.copy()))
    pieces.extend(char_pieces)
    for cur in out_curves:
        pieces.extend(wave_pattern(cur))
        pieces.append(ConstantState(cur.u[0].copy()))
    pattern = RiemannPattern(pieces=pieces, trace=trace.copy(),
                             left_state=trace.copy(),
                             right_state=np.asarray(u0, float).copy())
    _check_speed_order(pattern)
    return pattern, trace


def _check_speed_order(pattern):
    speeds = []
    for p in pattern.pieces:
        if hasattr(p, "speed"):
            speeds.append((p.speed, p.speed))
        elif hasattr(p, "speed_from"):
            speeds.append((p.speed_from, p.speed_to))
    last = -np.inf
    for lo, hi in speeds:
        if lo < last - 1e-8:
            raise UnsupportedCaseError(
                f"wave speeds out of order: {lo} after {last}"
            )
        last = max(last, hi)


def extract_trace(solution: BoundarySolution):
    """Trace of the hyperbolic limit on the boundary axis."""
    return solution.trace.copy()
