"""Admissible-state curves, wave patterns, and the Cauchy Riemann solver.

The i-th curve of admissible states is the fixed point of the system

    u(tau)     = u_start + d * int_0^tau r~(u, v, sigma)
    v(tau)     = f(tau) - env f(tau)
    sigma(tau) = d * (env f)'(tau) / c_E

on the traversal grid xi in [0, |s|], d = sign(s), where f is the
running integral of the effective speed lambda~ = phi + c_E sigma and
env is the concave (s > 0) or convex (s < 0) envelope; the boundary
characteristic variant uses the monotone envelopes, which clip the wave
speeds at zero.  Gaps of the envelope are traveling waves (shocks),
contact intervals are rarefactions.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .envelopes import (
    SampledFunction,
    concave_envelope,
    convex_envelope,
    monotone_concave_envelope,
    monotone_convex_envelope,
)
from .errors import ConvergenceError, InvalidInputError, UnsupportedCaseError
from .spectral import ZERO_EIG_RTOL, eig_pencil
from .systems import sym_pencil_eig

NODES_PER_UNIT = 513
MIN_NODES = 129
PICARD_DAMPING = 0.5
PICARD_MAX_ITER = 200
NEWTON_MAX_ITER = 50
NEWTON_MAX_HALVINGS = 30


# ---------------------------------------------------------------------------
# closure


@dataclass
class ClosureModel:
    """Leading-order closure of the traveling-wave manifold reduction.

    The frozen-eigenvector closure takes r~(u, v, sigma) = r_i(u), the
    matched unit eigenvector field of E^-1 A(u,0), and

        phi(u, v, sigma) = <r_i, (A(u,0) - sigma E) r_i> / <r_i, B r_i>,

    which vanishes exactly at sigma = lambda_i(u).  It is exact for
    scalar systems and O(s^2)-accurate otherwise; a custom closure hook
    may replace both fields.
    """

    kind: str
    family: int  # 1-based
    spec: object
    anchor: np.ndarray
    r_base: np.ndarray
    cE: float
    lam_anchor: float
    custom_r: Callable | None = None
    custom_phi: Callable | None = None

    def r_tilde(self, u, v, sigma):
        if self.custom_r is not None:
            return self.custom_r(u, v, sigma)
        qA, qE, qB, r = self.field_stack(np.asarray(u, float)[None, :])
        return r[0]

    def phi(self, u, v, sigma):
        if self.custom_phi is not None:
            return self.custom_phi(u, v, sigma)
        qA, qE, qB, _ = self.field_stack(np.asarray(u, float)[None, :])
        return float((qA[0] - sigma * qE[0]) / qB[0])

    def lambda_tilde(self, u, v, sigma):
        return self.phi(u, v, sigma) + self.cE * sigma

    def field_stack(self, U):
        """Quadratic forms <r,Ar>, <r,Er>, <r,Br> and r itself on a stack
        of states; r is sign-matched to the anchor orientation."""
        spec = self.spec
        m = U.shape[0]
        A = np.empty((m, spec.N, spec.N))
        E = np.empty_like(A)
        B = np.empty_like(A)
        zero = np.zeros(spec.N)
        for j in range(m):
            A[j] = spec.eval_A(U[j], zero)
            E[j] = spec.eval_E(U[j])
            B[j] = spec.eval_B(U[j])
        if spec.N == 1:
            r = np.ones((m, 1))
            lam = A[:, 0, 0] / E[:, 0, 0]
        else:
            L = np.linalg.cholesky(E)
            Li = np.linalg.inv(L)
            At = Li @ A @ Li.transpose(0, 2, 1)
            At = 0.5 * (At + At.transpose(0, 2, 1))
            w, Y = np.linalg.eigh(At)
            V = Li.transpose(0, 2, 1) @ Y
            r = V[:, :, self.family - 1]
            r = r / np.linalg.norm(r, axis=1, keepdims=True)
            lam = w[:, self.family - 1]
        sgn = np.sign(r @ self.r_base)
        sgn[sgn == 0] = 1.0
        r = r * sgn[:, None]
        qA = np.einsum("mi,mij,mj->m", r, A, r)
        qE = np.einsum("mi,mij,mj->m", r, E, r)
        qB = np.einsum("mi,mij,mj->m", r, B, r)
        return qA, qE, qB, r


def make_closure(spec, family, u_anchor=None) -> ClosureModel:
    """Frozen-eigenvector closure for one wave family, anchored at u_anchor."""
    anchor = np.asarray(u_anchor if u_anchor is not None else spec.u_base, float)
    if not (1 <= family <= spec.N):
        raise InvalidInputError(f"family must be in 1..{spec.N}")
    ea = eig_pencil(spec, anchor)
    lam = float(ea.values[family - 1])
    r = ea.vectors[:, family - 1].copy()
    # orientation: genuinely nonlinear families point uphill in lambda
    h = 1e-6 * (1.0 + np.linalg.norm(anchor))
    lam_p = eig_pencil(spec, anchor + h * r).values[family - 1]
    lam_m = eig_pencil(spec, anchor - h * r).values[family - 1]
    dlam = (lam_p - lam_m) / (2 * h)
    if abs(dlam) > 1e-6 and dlam < 0:
        r = -r
    E = spec.E(anchor)
    B = spec.B(anchor)
    qB = float(r @ B @ r)
    if qB <= 0:
        raise InvalidInputError(
            "<r_i, B r_i> <= 0 at the anchor: Kawashima/positivity failure "
            "along this family"
        )
    if spec.singular:
        nr = spec.N - spec.r
        M = spec.A0(anchor)[:nr, :nr] - lam * E[:nr, :nr]
        sv = np.linalg.svd(np.atleast_2d(M), compute_uv=False)
        if sv.size and sv[-1] <= 1e-9 * max(sv[0], 1.0):
            raise UnsupportedCaseError(
                "ker(A11 - lambda_i E11) is nontrivial at the anchor: the "
                "singular-viscosity curve construction requires it trivial"
            )
    return ClosureModel(
        kind="frozen_eigenvector", family=family, spec=spec, anchor=anchor,
        r_base=r, cE=float(r @ E @ r), lam_anchor=lam,
    )


# ---------------------------------------------------------------------------
# curve fixed point


@dataclass
class CurveState:
    i: int
    s: float
    grid: np.ndarray      # traversal coordinate xi in [0, |s|]
    u: np.ndarray         # (m, N)
    v: np.ndarray         # f - env f (<= 0 on the concave branch)
    sigma: np.ndarray     # wave speeds, non-increasing along the traversal
    converged: bool
    iterations: int
    monotone: bool = False
    s_bar: float | None = None
    underline_s: float | None = None
    contact: np.ndarray | None = None

    @property
    def endpoint(self):
        return self.u[-1]

    @property
    def direction(self):
        return 1.0 if self.s >= 0 else -1.0

    def restrict(self, xi_max):
        """Sub-curve on [0, xi_max] (nearest grid node)."""
        j = int(np.searchsorted(self.grid, xi_max + 1e-15 * (1 + xi_max)))
        j = max(2, min(j, len(self.grid)))
        return CurveState(
            i=self.i, s=self.direction * self.grid[j - 1],
            grid=self.grid[:j], u=self.u[:j], v=self.v[:j],
            sigma=self.sigma[:j], converged=self.converged,
            iterations=self.iterations, monotone=self.monotone,
            contact=None if self.contact is None else self.contact[:j],
        )

    def state_at(self, xi):
        cols = [np.interp(xi, self.grid, self.u[:, c])
                for c in range(self.u.shape[1])]
        return np.array(cols)


def _reflected(vals, der):
    return vals[::-1].copy(), -der[::-1].copy()


def _envelope_for(f: SampledFunction, positive: bool, monotone: bool):
    """Envelope of the traversal integral h for the four branch cases.

    s > 0: concave (monotone-concave) envelope of h.
    s < 0: convex envelope of h; the monotone variant needs the largest
    convex non-increasing minorant, obtained by reflecting the
    non-decreasing construction.
    """
    if positive:
        res = monotone_concave_envelope(f) if monotone else concave_envelope(f)
        return res.env.values, res.env.deriv, res.contact
    if not monotone:
        res = convex_envelope(f)
        return res.env.values, res.env.deriv, res.contact
    vals_r, der_r = _reflected(f.values, f.deriv)
    fr = SampledFunction(s=f.s, values=vals_r, deriv=der_r, lip_k=f.lip_k)
    res = monotone_convex_envelope(fr)
    env_vals, env_der = _reflected(res.env.values, res.env.deriv)
    return env_vals, env_der, res.contact[::-1].copy()


def _default_nodes(s):
    return max(MIN_NODES, int(np.ceil(NODES_PER_UNIT * abs(s))) + 1)


def _run_fixed_point(spec, closure, u_start, s, monotone, m, tol_fp,
                     max_iter, damping):
    d = 1.0 if s >= 0 else -1.0
    L = abs(s)
    xi = np.linspace(0.0, L, m)
    h = L / (m - 1)
    r0 = closure.r_tilde(u_start, 0.0, closure.lam_anchor)
    u = u_start[None, :] + d * xi[:, None] * r0[None, :]
    sigma = np.full(m, closure.lam_anchor)
    if monotone:
        sigma = np.maximum(sigma, 0.0)
    v = np.zeros(m)
    cE = closure.cE
    converged = False
    resid = np.inf
    contact = None
    it = 0
    for it in range(1, max_iter + 1):
        qA, qE, qB, r = closure.field_stack(u)
        phi = (qA - sigma * qE) / qB
        lam_t = phi + cE * sigma
        fprime = d * lam_t
        fvals = np.empty(m)
        fvals[0] = 0.0
        np.cumsum((fprime[:-1] + fprime[1:]) * 0.5 * h, out=fvals[1:])
        lip = max(1.0, np.abs(np.diff(fprime)).max() / h if m > 1 else 1.0)
        f = SampledFunction(s=max(L, 1e-300), values=fvals, deriv=fprime,
                            lip_k=lip)
        env_vals, env_der, contact = _envelope_for(f, d > 0, monotone)
        v_new = fvals - env_vals
        sigma_new = d * env_der / cE
        du = np.empty_like(u)
        du[0] = 0.0
        steps = (r[:-1] + r[1:]) * 0.5 * h
        np.cumsum(steps, axis=0, out=du[1:])
        u_new = u_start[None, :] + d * du
        resid = max(
            np.abs(u_new - u).max(),
            np.abs(v_new - v).max(),
            np.abs(sigma_new - sigma).max(),
        )
        u = u + damping * (u_new - u)
        v = v + damping * (v_new - v)
        sigma = sigma + damping * (sigma_new - sigma)
        if resid < tol_fp:
            u, v, sigma = u_new, v_new, sigma_new
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"curve fixed point did not converge in {max_iter} iterations "
            f"(family {closure.family}, s={s:g})", residual=resid,
        )
    return CurveState(
        i=closure.family, s=s, grid=xi, u=u, v=v, sigma=sigma,
        converged=True, iterations=it, monotone=monotone, contact=contact,
    )


def admissible_curve(spec, closure, u_start, s, m=None, tol_fp=None,
                     max_iter=PICARD_MAX_ITER, damping=PICARD_DAMPING):
    """Curve of states reachable from u_start by i-family waves.

    Positive s uses the concave envelope, negative s the convex one; the
    endpoint is T^i_s(u_start).  Degenerate s = 0 returns the trivial
    one-point curve.
    """
    u_start = np.atleast_1d(np.asarray(u_start, float))
    if abs(s) > spec.delta + 1e-12:
        raise InvalidInputError(f"|s|={abs(s):g} exceeds delta={spec.delta:g}")
    if s == 0.0:
        g = np.array([0.0, 0.0])
        return CurveState(
            i=closure.family, s=0.0, grid=g,
            u=np.vstack([u_start, u_start]), v=np.zeros(2),
            sigma=np.full(2, closure.lam_anchor), converged=True, iterations=0,
        )
    m = m or _default_nodes(s)
    tol = tol_fp if tol_fp is not None else 1e-10 * (1.0 + abs(s))
    return _run_fixed_point(spec, closure, u_start, s, False, m, tol,
                            max_iter, damping)


def char_admissible_curve(spec, closure, u_start, s, m=None, tol_fp=None,
                          max_iter=PICARD_MAX_ITER, damping=PICARD_DAMPING):
    """Characteristic-family curve built with the monotone envelopes.

    Returns the curve together with s_bar = min{ sigma = 0 } (|s| if
    sigma never vanishes) and underline_s = max{ sigma = 0 and v = 0 }
    (s_bar when that set is empty).  States beyond s_bar travel at zero
    speed and belong to the boundary layer.
    """
    u_start = np.atleast_1d(np.asarray(u_start, float))
    if abs(s) > spec.delta + 1e-12:
        raise InvalidInputError(f"|s|={abs(s):g} exceeds delta={spec.delta:g}")
    if s == 0.0:
        g = np.array([0.0, 0.0])
        lam0 = max(closure.lam_anchor, 0.0)
        return CurveState(
            i=closure.family, s=0.0, grid=g,
            u=np.vstack([u_start, u_start]), v=np.zeros(2),
            sigma=np.full(2, lam0), converged=True, iterations=0,
            monotone=True, s_bar=0.0, underline_s=0.0,
        )
    m = m or _default_nodes(s)
    tol = tol_fp if tol_fp is not None else 1e-10 * (1.0 + abs(s))
    cur = _run_fixed_point(spec, closure, u_start, s, True, m, tol,
                           max_iter, damping)
    sig_tol = 1e-9 * max(1.0, np.abs(cur.sigma).max())
    v_tol = 10.0 * _v_tolerance(cur)
    zero = cur.sigma <= sig_tol
    if zero.any():
        cur.s_bar = float(cur.grid[np.argmax(zero)])
    else:
        cur.s_bar = float(abs(s))
    both = zero & (np.abs(cur.v) <= v_tol)
    if both.any():
        cur.underline_s = float(cur.grid[np.nonzero(both)[0][-1]])
    else:
        cur.underline_s = cur.s_bar
    return cur


def _v_tolerance(cur):
    h = cur.grid[1] - cur.grid[0] if len(cur.grid) > 1 else 1.0
    return max(1e-12, 1e-6 * h * max(1.0, np.abs(cur.v).max()))


# ---------------------------------------------------------------------------
# wave pieces and patterns


@dataclass
class ConstantState:
    u: np.ndarray


@dataclass
class Shock:
    family: int
    u_from: np.ndarray  # left state
    u_to: np.ndarray    # right state
    speed: float


@dataclass
class Rarefaction:
    family: int
    u_from: np.ndarray
    u_to: np.ndarray
    speed_from: float
    speed_to: float
    # samples ordered left to right for fan inversion
    speeds: np.ndarray = field(default=None, repr=False)
    states: np.ndarray = field(default=None, repr=False)


@dataclass
class BoundaryLayer:
    u_boundary: np.ndarray
    u_trace: np.ndarray


@dataclass
class RiemannPattern:
    pieces: list
    trace: np.ndarray
    left_state: np.ndarray
    right_state: np.ndarray

    def wave_pieces(self):
        return [p for p in self.pieces if isinstance(p, (Shock, Rarefaction))]


def wave_pattern(curve: CurveState):
    """Split a converged curve into shock and rarefaction pieces.

    Traversal runs from the base (right side, fastest) to the endpoint;
    pieces are returned ordered left to right, i.e. by non-decreasing
    speed.  Maximal |v| > 0 runs become shocks at the constant gap speed,
    contact runs with non-trivial extent become rarefactions.
    """
    if not curve.converged:
        raise InvalidInputError("wave_pattern needs a converged curve")
    m = len(curve.grid)
    v_tol = _v_tolerance(curve)
    in_gap = np.abs(curve.v) > v_tol
    pieces = []
    j = 0
    while j < m:
        if in_gap[j]:
            j0 = j
            while j < m and in_gap[j]:
                j += 1
            ja = max(j0 - 1, 0)
            jb = min(j, m - 1)
            speed = float(np.median(curve.sigma[j0:j]))
            pieces.append(Shock(
                family=curve.i, u_from=curve.u[jb].copy(),
                u_to=curve.u[ja].copy(), speed=speed,
            ))
        else:
            j0 = j
            while j < m and not in_gap[j]:
                j += 1
            ja, jb = j0, j - 1
            if jb > ja:
                sl = slice(ja, jb + 1)
                speeds = curve.sigma[sl][::-1].copy()
                states = curve.u[sl][::-1].copy()
                if abs(speeds[-1] - speeds[0]) <= 1e-12 * max(
                        1.0, np.abs(speeds).max()):
                    continue  # flat contact span carries no fan
                pieces.append(Rarefaction(
                    family=curve.i, u_from=curve.u[jb].copy(),
                    u_to=curve.u[ja].copy(),
                    speed_from=float(curve.sigma[jb]),
                    speed_to=float(curve.sigma[ja]),
                    speeds=speeds, states=states,
                ))
    pieces.reverse()  # traversal order is right-to-left
    return pieces


def _compose_curves(spec, closures, u_right, svals, curve_fn=admissible_curve,
                    m=None):
    """Apply T^{i} factors outermost-family-first starting from u_right."""
    state = np.asarray(u_right, float)
    curves = []
    for closure, s in sorted(zip(closures, svals),
                             key=lambda t: -t[0].family):
        cur = curve_fn(spec, closure, state, s, m=m)
        curves.append(cur)
        state = cur.endpoint
    curves.reverse()  # ascending family order
    return state, curves


def psi_map(spec, closures, u_plus, svec, m=None):
    """The composition T^1 o ... o T^N applied to u_plus."""
    return _compose_curves(spec, closures, u_plus, svec, m=m)


def solve_cauchy_riemann(spec, u_minus, u_plus, m=None, tol=None,
                         max_iter=NEWTON_MAX_ITER):
    """Riemann solver: damped Newton inversion of psi(u_plus, s) = u_minus."""
    u_minus = np.atleast_1d(np.asarray(u_minus, float))
    u_plus = np.atleast_1d(np.asarray(u_plus, float))
    if np.linalg.norm(u_minus - u_plus) > spec.delta:
        raise InvalidInputError("data further apart than delta")
    closures = [make_closure(spec, i, u_plus) for i in range(1, spec.N + 1)]
    tol = tol if tol is not None else 1e-9 * (1.0 + np.linalg.norm(u_minus))

    def residual(s):
        end, curves = psi_map(spec, closures, u_plus, s, m=m)
        return end - u_minus, curves

    s, curves, _, _ = _damped_newton(residual, np.zeros(spec.N), tol,
                                     max_iter)
    pieces = [ConstantState(u_minus.copy())]
    for cur in curves:
        ps = wave_pattern(cur)
        pieces.extend(ps)
        pieces.append(ConstantState(cur.u[0].copy()))
    trace = _pattern_trace(pieces, u_minus)
    return RiemannPattern(pieces=pieces, trace=trace,
                          left_state=u_minus.copy(),
                          right_state=u_plus.copy())


def _pattern_trace(pieces, left_state):
    """Value at x = 0+, t > 0: the state just right of the last wave with
    negative speed."""
    trace = np.asarray(left_state, float).copy()
    for p in pieces:
        if isinstance(p, Shock):
            if p.speed < 0:
                trace = p.u_to.copy()
        elif isinstance(p, Rarefaction):
            if p.speed_to < 0:
                trace = p.u_to.copy()
            elif p.speed_from < 0 <= p.speed_to:
                trace = _fan_state(p, 0.0)
    return trace


def _fan_state(piece: Rarefaction, xi):
    sp = piece.speeds
    st = piece.states
    out = np.array([
        np.interp(xi, sp, st[:, c]) for c in range(st.shape[1])
    ])
    return out


def _damped_newton(residual_fn, s0, tol, max_iter,
                   fd_scale=1e-6, max_halvings=NEWTON_MAX_HALVINGS):
    """Damped chord Newton; returns (s, payload, residual_norm, iterations).

    The finite-difference Jacobian is reused across steps and refreshed
    when step halving fails to produce descent.
    """
    s = np.asarray(s0, float).copy()
    res, payload = residual_fn(s)
    rnorm = np.linalg.norm(res, np.inf)
    jac = None
    fresh = False
    for it in range(1, max_iter + 1):
        if rnorm <= tol:
            return s, payload, rnorm, it - 1
        if jac is None:
            jac = _fd_jacobian(residual_fn, s, res, fd_scale)
            fresh = True
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError as exc:
            raise ConvergenceError(f"singular Newton matrix: {exc}",
                                   residual=rnorm) from exc
        lam = 1.0
        for _ in range(max_halvings):
            cand = s + lam * step
            try:
                res_c, payload_c = residual_fn(cand)
            except (ConvergenceError, InvalidInputError):
                lam *= 0.5
                continue
            rn_c = np.linalg.norm(res_c, np.inf)
            if rn_c < rnorm:
                s, res, rnorm, payload = cand, res_c, rn_c, payload_c
                fresh = False
                break
            lam *= 0.5
        else:
            if not fresh:
                jac = None  # refresh the chord Jacobian and retry
                continue
            raise ConvergenceError(
                "Newton stagnation: no descent after step halving",
                residual=rnorm,
            )
    if rnorm <= tol:
        return s, payload, rnorm, max_iter
    raise ConvergenceError(
        f"Newton did not reach tolerance {tol:g} in {max_iter} iterations",
        residual=rnorm,
    )


def _fd_jacobian(residual_fn, s, res0, fd_scale):
    n = len(s)
    jac = np.empty((len(res0), n))
    for j in range(n):
        h = fd_scale * (1.0 + abs(s[j]))
        sp = s.copy()
        sp[j] += h
        res_p, _ = residual_fn(sp)
        jac[:, j] = (res_p - res0) / h
    return jac


def sample_solution(pattern: RiemannPattern, t, x):
    """Pointwise evaluation of the self-similar pattern at (t, x)."""
    if t <= 0:
        raise InvalidInputError("t must be positive")
    xi = x / t
    current = pattern.left_state.copy()
    for p in pattern.pieces:
        if isinstance(p, BoundaryLayer):
            current = p.u_trace.copy()
        elif isinstance(p, Shock):
            if xi < p.speed:
                return current
            current = p.u_to.copy()
        elif isinstance(p, Rarefaction):
            if xi < p.speed_from:
                return current
            if xi <= p.speed_to:
                return _fan_state(p, xi)
            current = p.u_to.copy()
    return current
