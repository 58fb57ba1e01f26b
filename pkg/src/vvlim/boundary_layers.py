"""Boundary-layer profiles, stable-manifold charts, and the maps F^k, F^s, F^p.

Steady solutions of the viscous system decay to an interior state along
the stable directions of the layer ODE; for an invertible viscosity
matrix those are the negative-eigenvalue pairs of B^-1 A, for a singular
one the negative generalized eigenvalues of the reduced pencil with
their lifted eigenvectors.  The characteristic boundary splits the
boundary value into a zero-speed curve part (F^k), a uniformly decaying
part (F^s), and an O(delta^2) interaction correction (F^p).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConvergenceError, InvalidInputError, UnsupportedCaseError
from .spectral import ZERO_EIG_RTOL, eig_pencil, generalized_eigs
from .wave_curves import char_admissible_curve

ODE_RTOL = 1e-9
ODE_ATOL = 1e-12


# ---------------------------------------------------------------------------
# layer eigendata


def layer_eigendata(spec, u, n_stable=None):
    """Decay rates mu_i < 0 and directions chi_i of the layer ODE at u.

    Invertible B: stable eigenpairs of B^-1 A(u,0).  Singular B: negative
    generalized eigenvalues with lifted eigenvectors.  When n_stable is
    given, the that many most negative rates are returned (the way the
    characteristic solver excludes the near-zero family).
    """
    pairs = generalized_eigs(spec, u, 0.0)
    scale = max(1.0, max((abs(mu) for mu, _ in pairs), default=1.0))
    neg = [(mu, vec) for mu, vec in pairs if mu < -ZERO_EIG_RTOL * scale]
    neg.sort(key=lambda t: t[0])
    if n_stable is not None:
        if n_stable > len(neg):
            raise UnsupportedCaseError(
                f"requested {n_stable} stable layer directions, found {len(neg)}"
            )
        neg = neg[:n_stable]
    mu = np.array([t[0] for t in neg])
    chi = (np.column_stack([t[1] for t in neg])
           if neg else np.zeros((spec.N, 0)))
    return mu, chi


def _matched_layer_frame(spec, u, mu_base, chi_base):
    """Layer directions at u, matched to the base frame by decay rate and
    overlap; used to evaluate the Rcheck^s field along profiles."""
    pairs = generalized_eigs(spec, u, 0.0)
    out = np.empty_like(chi_base)
    rates = np.empty_like(mu_base)
    for j, (mu0, c0) in enumerate(zip(mu_base, chi_base.T)):
        best = min(pairs, key=lambda t: abs(t[0] - mu0))
        vec = best[1]
        if vec @ c0 < 0:
            vec = -vec
        out[:, j] = vec
        rates[j] = best[0]
    return rates, out


def _frames_stack(spec, U, mu_base, chi_base):
    """Matched layer frames along a stack of states.

    Invertible viscosity and the trivial-kernel singular reduction use
    batched pencil paths; a nontrivial kernel of A11 falls back to the
    per-state reduction.
    """
    m = U.shape[0]
    d = chi_base.shape[1]
    rates = np.empty((m, d))
    frames = np.empty((m, spec.N, d))
    if d == 0:
        return rates, frames
    if not spec.singular:
        A = np.empty((m, spec.N, spec.N))
        B = np.empty_like(A)
        zero = np.zeros(spec.N)
        for j in range(m):
            A[j] = spec.eval_A(U[j], zero)
            B[j] = spec.eval_B(U[j])
        w, V = _batched_sym_pencil(A, B)
        return _match_columns(w, V, mu_base, chi_base, rates, frames)
    nr = spec.N - spec.r
    A11 = spec.A0(U[0])[:nr, :nr]
    sv = np.linalg.svd(np.atleast_2d(A11), compute_uv=False)
    if sv.size and sv[-1] > 1e-9 * max(sv[0], 1.0):
        # trivial kernel of A11: batched reduced pencil abar = al22 -
        # A21 A11^-1 A21^T against bbar = b, eigenvectors lifted by
        # (-A11^-1 A21^T xi, xi)
        A = np.empty((m, spec.N, spec.N))
        B = np.empty_like(A)
        zero = np.zeros(spec.N)
        for j in range(m):
            A[j] = spec.A0(U[j])
            B[j] = spec.eval_B(U[j])
        A11s = A[:, :nr, :nr]
        A21s = A[:, nr:, :nr]
        al22 = A[:, nr:, nr:]
        b = B[:, nr:, nr:]
        lift_w = -np.linalg.solve(A11s, A21s.transpose(0, 2, 1))
        abar = al22 + A21s @ lift_w
        abar = 0.5 * (abar + abar.transpose(0, 2, 1))
        w, Xi = _batched_sym_pencil(abar, b)
        V = np.concatenate([lift_w @ Xi, Xi], axis=1)
        V = V / np.linalg.norm(V, axis=1, keepdims=True)
        return _match_columns(w, V, mu_base, chi_base, rates, frames)
    for j in range(m):
        rates[j], frames[j] = _matched_layer_frame(spec, U[j], mu_base,
                                                   chi_base)
    return rates, frames


def _batched_sym_pencil(A, M):
    """Eigen-decomposition of M^-1 A for stacks of symmetric A, SPD M."""
    L = np.linalg.cholesky(M)
    Li = np.linalg.inv(L)
    At = Li @ A @ Li.transpose(0, 2, 1)
    At = 0.5 * (At + At.transpose(0, 2, 1))
    w, Y = np.linalg.eigh(At)
    V = Li.transpose(0, 2, 1) @ Y
    V = V / np.linalg.norm(V, axis=1, keepdims=True)
    return w, V


def _match_columns(w, V, mu_base, chi_base, rates, frames):
    m = w.shape[0]
    rows = np.arange(m)
    for jcol, mu0 in enumerate(mu_base):
        idx = np.argmin(np.abs(w - mu0), axis=1)
        rates[:, jcol] = w[rows, idx]
        cols = V[rows, :, idx]
        sgn = np.sign(cols @ chi_base[:, jcol])
        sgn[sgn == 0] = 1.0
        frames[:, :, jcol] = cols * sgn[:, None]
    return rates, frames


@dataclass
class ManifoldParam:
    base: np.ndarray
    mu: np.ndarray
    chi: np.ndarray
    refined: bool = False
    fs_options: dict = field(default_factory=dict)
    spec: object = None

    @property
    def dim(self):
        return len(self.mu)

    def order1(self, svec):
        """First-order chart: u(0) = base + sum_i (s_i / mu_i) chi_i."""
        svec = np.atleast_1d(np.asarray(svec, float))
        if svec.shape != (self.dim,):
            raise InvalidInputError(f"chart expects {self.dim} parameters")
        if self.dim == 0:
            return self.base.copy()
        return self.base + self.chi @ (svec / self.mu)

    def __call__(self, svec):
        if not self.refined or self.dim == 0:
            return self.order1(svec)
        res = stable_component_Fs(self.spec, self.base,
                                  np.asarray(svec, float), **self.fs_options)
        return self.base + res.u_s0


def stable_manifold(spec, u_bar, n_stable=None, refined=False,
                    **fs_options) -> ManifoldParam:
    """Stable-manifold parameterization of the layer ODE at u_bar.

    The default chart is the first-order formula from the linearization;
    refined=True evaluates the chart through the decaying fixed point
    (one extra order in the parameter).
    """
    u_bar = np.atleast_1d(np.asarray(u_bar, float))
    mu, chi = layer_eigendata(spec, u_bar, n_stable)
    return ManifoldParam(base=u_bar, mu=mu, chi=chi, refined=refined,
                         fs_options=fs_options, spec=spec)


def default_truncation(spec, u_bar, mu=None):
    """Half-line cutoff X = 40/c from the slowest decay rate."""
    if mu is None or len(mu) == 0:
        mu, _ = layer_eigendata(spec, u_bar)
    if len(mu) == 0:
        return 40.0
    c = np.abs(mu).min()
    return float(np.clip(40.0 / c, 10.0, 2000.0))


# ---------------------------------------------------------------------------
# layer profiles


@dataclass
class LayerProfile:
    x_grid: np.ndarray
    u: np.ndarray
    target: np.ndarray
    decay_rate: float
    converged: bool
    deriv: np.ndarray = None  # u_x samples from the first-order state


def _steady_rhs_invertible(spec):
    def rhs(x, y):
        N = spec.N
        u, p = y[:N], y[N:]
        return np.concatenate([p, np.linalg.solve(spec.B(u),
                                                  spec.eval_A(u, p) @ p)])
    return rhs


def _steady_rhs_singular_q0(spec):
    """Explicit form of the steady system when ker A11(u) is trivial.

    State (u, z) with z the derivative of the parabolic component:
    the first block line is algebraic, w = -A11^-1 A12 z, and
    b(u) z' = A21 w + A22 z closes the system.
    """
    nr = spec.N - spec.r

    def rhs(x, y):
        u, z = y[:spec.N], y[spec.N:]
        A = spec.A0(u)
        w = -np.linalg.solve(A[:nr, :nr], A[:nr, nr:] @ z)
        ux = np.concatenate([w, z])
        A_full = spec.eval_A(u, ux)
        zp = np.linalg.solve(spec.B(u)[nr:, nr:],
                             A_full[nr:, :nr] @ w + A_full[nr:, nr:] @ z)
        return np.concatenate([ux, zp])
    return rhs


def layer_profile(spec, u0, u_bar, X=None, tol_layer=1e-6,
                  n_points=400) -> LayerProfile:
    """Integrate the steady layer equation from u(0) = u0 toward u_bar.

    Conservative systems fix the derivative datum through the first
    integral B(u) u_x = f(u) - f(u_bar); otherwise the first-order chart
    supplies it.  Divergence (leaving the 2 delta ball) signals that u0
    is not on the stable manifold of u_bar and raises.
    """
    u0 = np.atleast_1d(np.asarray(u0, float))
    u_bar = np.atleast_1d(np.asarray(u_bar, float))
    if np.linalg.norm(u0 - u_bar) > spec.delta + 1e-12:
        raise InvalidInputError("u0 further from the target than delta")
    mu, chi = layer_eigendata(spec, u_bar)
    if X is None:
        X = default_truncation(spec, u_bar, mu)
    nr = spec.N - spec.r
    if spec.singular:
        A11 = spec.A0(u_bar)[:nr, :nr]
        sv = np.linalg.svd(np.atleast_2d(A11), compute_uv=False)
        if sv.size and sv[-1] <= 1e-9 * max(sv[0], 1.0):
            raise UnsupportedCaseError(
                "layer profile integration implemented for trivial ker A11 only"
            )
    if np.allclose(u0, u_bar):
        xg = np.linspace(0.0, X, n_points)
        return LayerProfile(x_grid=xg, u=np.tile(u_bar, (n_points, 1)),
                            target=u_bar, decay_rate=0.0, converged=True,
                            deriv=np.zeros((n_points, spec.N)))
    if spec.conservative:
        fb = spec.flux(u_bar)
        if spec.singular:
            z0 = np.linalg.solve(spec.B(u0)[nr:, nr:],
                                 (spec.flux(u0) - fb)[nr:])
            y0 = np.concatenate([u0, z0])
            rhs = _steady_rhs_singular_q0(spec)
        else:
            p0 = np.linalg.solve(spec.B(u0), spec.flux(u0) - fb)
            y0 = np.concatenate([u0, p0])
            rhs = _steady_rhs_invertible(spec)
    else:
        if spec.singular:
            raise UnsupportedCaseError(
                "non-conservative singular layer profiles need the flux form"
            )
        svec, *_ = np.linalg.lstsq(chi / mu, u0 - u_bar, rcond=None)
        p0 = chi @ svec if len(mu) else np.zeros(spec.N)
        y0 = np.concatenate([u0, p0])
        rhs = _steady_rhs_invertible(spec)

    escape = 2.0 * spec.delta

    def too_far(x, y):
        return np.linalg.norm(y[: spec.N] - u_bar) - escape

    too_far.terminal = True

    # integrating past the equilibrium is exponentially unstable in the
    # outgoing modes, so stop once firmly inside the tolerance ball and
    # continue the profile with the target itself
    def entered(x, y):
        return (np.linalg.norm(y - np.concatenate([u_bar,
                                                   np.zeros(len(y) - spec.N)]))
                - 0.1 * tol_layer)

    entered.terminal = True
    entered.direction = -1.0
    xg = np.linspace(0.0, X, n_points)
    sol = solve_ivp(rhs, (0.0, X), y0, t_eval=xg, rtol=ODE_RTOL,
                    atol=ODE_ATOL, events=[too_far, entered],
                    dense_output=False)
    if not sol.success or (sol.status == 1 and len(sol.t_events[0])):
        yend = sol.y[: spec.N, -1] if sol.y.size else y0[: spec.N]
        raise ConvergenceError(
            "layer trajectory diverged: the datum is not on the stable "
            "manifold of the target",
            residual=float(np.linalg.norm(yend - u_bar)),
        )
    U = np.tile(u_bar, (n_points, 1))
    got = sol.y.shape[1]
    U[:got] = sol.y[: spec.N].T
    DU = np.zeros((n_points, spec.N))
    if spec.singular:
        nr = spec.N - spec.r
        for j in range(got):
            z = sol.y[spec.N:, j]
            A = spec.A0(U[j])
            w = -np.linalg.solve(A[:nr, :nr], A[:nr, nr:] @ z)
            DU[j] = np.concatenate([w, z])
    else:
        DU[:got] = sol.y[spec.N:].T
    dist = np.linalg.norm(U - u_bar, axis=1)
    j_in = np.nonzero(dist <= tol_layer)[0]
    converged = j_in.size > 0 and bool(np.all(dist[j_in[0]:] <= 10 * tol_layer))
    rate = 0.0
    good = (dist > 1e-13) & (dist < 0.5 * np.linalg.norm(u0 - u_bar) + 1e-30)
    if good.sum() > 5:
        rate = float(np.polyfit(xg[good], np.log(dist[good]), 1)[0])
    if not converged:
        raise ConvergenceError(
            "layer trajectory did not enter the tolerance ball before the "
            "truncation point", residual=float(dist[-1]),
        )
    return LayerProfile(x_grid=xg, u=U, target=u_bar, decay_rate=rate,
                        converged=True, deriv=DU)


# ---------------------------------------------------------------------------
# characteristic components


def center_component_Fk(spec, closure, u_bar_k, s_k, m=None):
    """F^k: endpoint of the monotone-envelope curve of the near-zero family."""
    cur = char_admissible_curve(spec, closure, u_bar_k, s_k, m=m)
    return cur.endpoint, cur


@dataclass
class FsResult:
    u_s0: np.ndarray
    x_grid: np.ndarray
    u_s: np.ndarray
    V_s: np.ndarray
    first_order: np.ndarray
    iterations: int


def _phi1(z):
    out = np.empty_like(z)
    small = np.abs(z) < 1e-5
    zs = z[small]
    out[small] = 1.0 + zs / 2.0 + zs * zs / 6.0
    zb = z[~small]
    out[~small] = np.expm1(zb) / zb
    return out


def _phi2(z):
    out = np.empty_like(z)
    small = np.abs(z) < 1e-4
    zs = z[small]
    out[small] = 0.5 + zs / 6.0 + zs * zs / 24.0
    zb = z[~small]
    out[~small] = (np.expm1(zb) - zb) / (zb * zb)
    return out


def _exp_weighted_back_integral(frames, expo, h):
    """u(x_j) = -int_{x_j}^{X} frame(y) e^{expo(y)} dy, columnwise.

    Per cell the frame is linear and the exponent is linear, which makes
    the rule exact for a constant frame with exponential decay: the
    first-order layer formula is then reproduced to rounding, and all
    quadrature errors carry extra powers of the data size.
    """
    n, N, d = frames.shape
    cells = np.zeros((n - 1, N))
    for i in range(d):
        E0 = expo[:-1, i]
        z = expo[1:, i] - E0
        f0 = frames[:-1, :, i]
        f1 = frames[1:, :, i]
        w = np.exp(E0)[:, None] * h * (
            f0 * _phi1(z)[:, None] + (f1 - f0) * _phi2(z)[:, None]
        )
        cells += w
    tail = np.cumsum(cells[::-1], axis=0)[::-1]
    return np.vstack([-tail, np.zeros((1, N))])


def stable_component_Fs(spec, u_bar_k, Vs0, X=None, n_stable=None,
                        max_iter=40, tol=None, n_points=801) -> FsResult:
    """F^s: the uniformly decaying layer component.

    Fixed point of

        u_s(x) = -int_x^X Rcheck^s(u_bar + u_s) V_s dy
        V_s'   = Lcheck^s(u_bar + u_s) V_s,  V_s(0) given,

    solved by Picard sweeps on a fixed grid with exponential-aware
    quadrature.  At first order u_s(0) equals Rcheck^s Lambda_bar^-1
    V_s(0); the residual of that formula is quadratic in |V_s(0)|.
    """
    u_bar_k = np.atleast_1d(np.asarray(u_bar_k, float))
    Vs0 = np.atleast_1d(np.asarray(Vs0, float))
    mu, chi = layer_eigendata(spec, u_bar_k, n_stable)
    d = len(mu)
    if Vs0.shape != (d,):
        raise InvalidInputError(f"Vs0 must have length {d}")
    if X is None:
        X = default_truncation(spec, u_bar_k, mu)
    xg = np.linspace(0.0, X, n_points)
    h = xg[1] - xg[0]
    first_order = chi @ (Vs0 / mu) if d else np.zeros(spec.N)
    if d == 0 or not np.any(Vs0):
        zero = np.zeros((n_points, spec.N))
        return FsResult(u_s0=np.zeros(spec.N), x_grid=xg, u_s=zero,
                        V_s=np.zeros((n_points, d)), first_order=first_order,
                        iterations=0)
    tol = tol if tol is not None else 1e-13 * (1.0 + np.linalg.norm(Vs0))

    u_s = np.zeros((n_points, spec.N))
    V_s = Vs0[None, :] * np.exp(np.outer(xg, mu))
    expo = np.outer(xg, mu)
    resid = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        rates, frames = _frames_stack(spec, u_bar_k[None, :] + u_s, mu, chi)
        expo_new = np.zeros((n_points, d))
        np.cumsum((rates[:-1] + rates[1:]) * 0.5 * h, axis=0,
                  out=expo_new[1:])
        V_new = Vs0[None, :] * np.exp(expo_new)
        scaled = frames * Vs0[None, None, :]
        u_new = _exp_weighted_back_integral(scaled, expo_new, h)
        resid = max(np.abs(u_new - u_s).max(), np.abs(V_new - V_s).max())
        u_s, V_s, expo = u_new, V_new, expo_new
        if resid < tol:
            break
    else:
        raise ConvergenceError(
            f"F^s Picard iteration did not converge in {max_iter} sweeps",
            residual=resid,
        )
    tail = np.abs(V_s[-1]).max() if d else 0.0
    if tail > 1e-8 * (1.0 + np.linalg.norm(Vs0)):
        raise ConvergenceError(
            "truncation X too small: layer tail above tolerance",
            residual=float(tail),
        )
    return FsResult(u_s0=u_s[0].copy(), x_grid=xg, u_s=u_s, V_s=V_s,
                    first_order=first_order, iterations=it)


def _beta_map(curve, xg):
    """Inverse time rescale beta(x): the layer rides the curve from s_k
    back toward underline_s, with beta' = d * v(beta); constant s_k when
    v vanishes at the tip."""
    L = curve.grid[-1]
    d = curve.direction
    v_tip = curve.v[-1]
    v_tol = 1e-12 * (1.0 + np.abs(curve.v).max())
    if abs(v_tip) <= v_tol:
        return np.full_like(xg, L)
    lo = curve.underline_s if curve.underline_s is not None else 0.0

    def rhs(x, b):
        vv = np.interp(np.clip(b[0], lo, L), curve.grid, curve.v)
        return [d * vv]

    sol = solve_ivp(rhs, (xg[0], xg[-1]), [L], t_eval=xg,
                    rtol=ODE_RTOL, atol=ODE_ATOL)
    if not sol.success:
        raise ConvergenceError("beta integration failed")
    return np.clip(sol.y[0], lo, L)


def perturbation_Fp(spec, closure, curve, fs: FsResult, X=None,
                    max_iter=30, tol=None):
    """F^p: the interaction correction U(0), of size O(delta^2).

    Fixed point for (U, q, p) around the superposition of the zero-speed
    curve part and the decaying layer part; the integral equations are
    integrated backward (U, q) and in Duhamel form (p) with the current
    iterate frozen in the coefficients.  Vanishes identically when the
    decaying component is zero.
    """
    u_bar_k = np.asarray(curve.u[0], float)
    d_s = fs.V_s.shape[1]
    if d_s == 0 or not np.any(fs.V_s):
        return np.zeros(spec.N)
    mu, chi = layer_eigendata(spec, u_bar_k, d_s)
    xg = fs.x_grid
    n = len(xg)
    h = xg[1] - xg[0]
    beta = _beta_map(curve, xg)
    u_k_b = np.vstack([curve.state_at(b) for b in beta])
    v_k_b = np.interp(beta, curve.grid, curve.v)
    sg_b = np.interp(beta, curve.grid, curve.sigma)

    u_layer = u_bar_k[None, :] + fs.u_s
    rates_layer, frames_layer = _frames_stack(spec, u_layer, mu, chi)
    qA_c, qE_c, qB_c, rk_center = closure.field_stack(u_k_b)
    phi_center = (qA_c - sg_b * qE_c) / qB_c

    tol = tol if tol is not None else 1e-13 * (1.0 + np.abs(fs.V_s).max())
    U = np.zeros((n, spec.N))
    q = np.zeros(n)
    p = np.zeros((n, d_s))
    resid = np.inf
    for _ in range(max_iter):
        u_full = u_k_b + fs.u_s + U
        rates_full, frames_full = _frames_stack(spec, u_full, mu, chi)
        qA_f, qE_f, qB_f, rk_full = closure.field_stack(u_full)
        phi_full = (qA_f - sg_b * qE_f) / qB_f
        dU = (np.einsum("nij,nj->ni", frames_full - frames_layer, fs.V_s)
              + np.einsum("nij,nj->ni", frames_full, p)
              + (rk_full - rk_center) * v_k_b[:, None]
              + rk_full * q[:, None])
        dq = (phi_full - phi_center) * v_k_b + phi_full * q
        dp = (rates_full - mu[None, :]) * p \
            + (rates_full - rates_layer) * fs.V_s
        U_new = _back_integral(dU, h)
        q_new = _back_integral(dq[:, None], h)[:, 0]
        p_new = _duhamel(dp, mu, xg)
        resid = max(np.abs(U_new - U).max(), np.abs(q_new - q).max(),
                    np.abs(p_new - p).max())
        U, q, p = U_new, q_new, p_new
        if resid < tol:
            break
    else:
        raise ConvergenceError("F^p iteration did not converge",
                               residual=resid)
    return U[0].copy()


def _back_integral(g, h):
    """G(x) = -int_x^X g(y) dy on the uniform grid, trapezoid rule."""
    steps = (g[:-1] + g[1:]) * 0.5 * h
    tail = np.cumsum(steps[::-1], axis=0)[::-1]
    out = np.vstack([-tail, np.zeros((1, g.shape[1]))])
    return out


def _duhamel(g, mu, xg):
    """p(x) = int_0^x e^{mu (x-y)} g(y) dy columnwise via the ODE form."""
    n, d = g.shape
    h = xg[1] - xg[0]
    p = np.zeros((n, d))
    for j in range(1, n):
        decay = np.exp(mu * h)
        p[j] = decay * p[j - 1] + 0.5 * h * (decay * g[j - 1] + g[j])
    return p


def combined_F(spec, closure, u_bar_k, svec, X=None, m=None,
               with_perturbation=True):
    """F = F^k + F^s + F^p: boundary value of the characteristic block.

    svec = (s_1 ... s_k); the first k-1 entries are the decaying-layer
    coordinates V_s(0) and the last is the curve parameter of the
    near-zero family.
    """
    svec = np.atleast_1d(np.asarray(svec, float))
    Vs0, s_k = svec[:-1], float(svec[-1])
    endpoint, curve = center_component_Fk(spec, closure, u_bar_k, s_k, m=m)
    fs = stable_component_Fs(spec, np.asarray(u_bar_k, float), Vs0,
                             X=X, n_stable=len(Vs0))
    out = endpoint + fs.u_s0
    if with_perturbation and (len(Vs0) or abs(s_k) > 0):
        out = out + perturbation_Fp(spec, closure, curve, fs, X=X)
    return out, curve, fs
