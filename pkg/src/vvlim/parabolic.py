"""Direct viscous simulation and the closed-form counterexample families.

The simulator discretizes the eps-viscous initial boundary value problem
by method of lines: local Lax-Friedrichs flux differencing for
conservative systems (centered transport otherwise), central second
differences for the viscous term, explicit Heun time stepping under the
combined advective/diffusive stability bound.  It serves as an empirical
eps -> 0 oracle for the boundary Riemann solver.

The counterexample families integrate the regularized layer ODEs whose
nu -> 0 limits are the known non-C^1 profiles.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConvergenceError, InvalidInputError
from .spectral import eig_pencil
from .systems import build_boundary_map

CFL = 0.4


@dataclass
class SimGrid:
    L: float
    J: int
    T_final: float
    eps: float
    lam_max: float = None
    beta_max: float = None

    @property
    def dx(self):
        return self.L / self.J

    def dt(self):
        if self.lam_max is None or self.beta_max is None:
            raise InvalidInputError("stability bounds not set; call prepare()")
        adv = self.dx / self.lam_max if self.lam_max > 0 else np.inf
        diff = self.dx ** 2 / (2.0 * self.eps * self.beta_max)
        return CFL * min(adv, diff)


@dataclass
class SimResult:
    x: np.ndarray
    times: np.ndarray
    snapshots: np.ndarray  # (len(times), nodes, N)
    eps: float

    @property
    def final(self):
        return self.snapshots[-1]


def _stability_bounds(spec, states):
    lam = 0.0
    beta = 0.0
    for u in states:
        ea = eig_pencil(spec, u)
        lam = max(lam, np.abs(ea.values).max())
        EiB = np.linalg.solve(spec.E(u), spec.B(u))
        beta = max(beta, np.linalg.norm(EiB, 2))
    return 1.2 * lam + 1e-12, 1.2 * beta + 1e-12


def _flux_batch(spec, U):
    """Flux on an (N, nodes) state block; catalog fluxes broadcast."""
    out = spec.flux(U)
    return np.asarray(out)


def simulate_ibvp(spec, eps, grid: SimGrid, u0_profile, boundary_datum,
                  t_out=None) -> SimResult:
    """March the viscous IBVP to T_final and return space-time samples.

    u0_profile is a constant state or an (nodes, N) array; the boundary
    datum is the full left state for invertible viscosity or the image
    under the boundary map for a singular one (the remaining components
    close by first-order extrapolation from the interior).  The right
    boundary copies the last interior node on a domain long enough that
    no wave reaches it.
    """
    nodes = grid.J + 1
    x = np.linspace(0.0, grid.L, nodes)
    u0_profile = np.asarray(u0_profile, float)
    if u0_profile.ndim == 1:
        U = np.tile(u0_profile, (nodes, 1)).T.copy()  # (N, nodes)
    else:
        U = u0_profile.T.copy()
    datum = np.atleast_1d(np.asarray(boundary_datum, float))

    if spec.singular:
        bmap = build_boundary_map(spec, spec.u_base)
        if datum.shape != (bmap.out_dim,):
            raise InvalidInputError(
                f"boundary datum must have dimension {bmap.out_dim}"
            )
        M = np.column_stack([bmap.W_basis, bmap.Z_basis])
        Minv = np.linalg.inv(M)
        nw = bmap.out_dim

        def apply_left(U):
            z_extrap = Minv[nw:] @ (2.0 * U[:, 1] - U[:, 2])
            U[:, 0] = bmap.W_basis @ datum + bmap.Z_basis @ z_extrap
    else:
        if datum.shape != (spec.N,):
            raise InvalidInputError(f"boundary datum must be an {spec.N}-vector")

        def apply_left(U):
            U[:, 0] = datum

    probe = [U[:, 0], U[:, -1]]
    if not spec.singular:
        probe.append(datum)
    if grid.lam_max is None or grid.beta_max is None:
        grid.lam_max, grid.beta_max = _stability_bounds(spec, probe)
    dt = grid.dt()
    dx = grid.dx
    if not spec.conservative:
        raise InvalidInputError(
            "the simulator requires a conservative flux (all catalog "
            "systems used as oracles provide one)"
        )
    E0 = spec.E(spec.u_base)
    E_const = np.allclose(E0, np.eye(spec.N))
    Bt0 = np.linalg.solve(E0, spec.B(spec.u_base))

    def rhs(U):
        # local Lax-Friedrichs flux differencing + central viscosity;
        # for non-identity (constant-in-practice) E the update is the
        # physical conservative form u_t + f_x = eps (E^-1 B) u_xx
        F = _flux_batch(spec, U)
        alpha = grid.lam_max
        Fh = 0.5 * (F[:, 1:] + F[:, :-1]) - 0.5 * alpha * (U[:, 1:] - U[:, :-1])
        dF = np.zeros_like(U)
        dF[:, 1:-1] = (Fh[:, 1:] - Fh[:, :-1]) / dx
        d2 = np.zeros_like(U)
        d2[:, 1:-1] = (U[:, 2:] - 2.0 * U[:, 1:-1] + U[:, :-2]) / dx ** 2
        visc = np.einsum("ij,jm->im", Bt0, d2)
        return -dF + eps * visc

    t = 0.0
    t_out = sorted(set((t_out or [])) | {grid.T_final})
    out_times = []
    out_snaps = []
    next_out = 0
    while t < grid.T_final - 1e-14:
        step = min(dt, grid.T_final - t)
        while next_out < len(t_out) and t_out[next_out] <= t + 1e-14:
            out_times.append(t)
            out_snaps.append(U.T.copy())
            next_out += 1
        if next_out < len(t_out):
            step = min(step, t_out[next_out] - t)
        k1 = rhs(U)
        U1 = U + step * k1
        apply_left(U1)
        U1[:, -1] = U1[:, -2]
        k2 = rhs(U1)
        U = U + 0.5 * step * (k1 + k2)
        apply_left(U)
        U[:, -1] = U[:, -2]
        if not np.all(np.isfinite(U)):
            raise ConvergenceError("simulation blew up (NaN)", residual=np.inf)
        t += step
    out_times.append(t)
    out_snaps.append(U.T.copy())
    return SimResult(x=x, times=np.array(out_times),
                     snapshots=np.array(out_snaps), eps=eps)


def estimate_trace(result: SimResult, eps=None, K=8, var_tol=0.05):
    """Average the final profile over x in [K eps, 2 K eps].

    The window sits outside the boundary layer but inside the first
    wave; in-window variation above var_tol * data scale means the
    window collided with a wave and raises.
    """
    eps = eps if eps is not None else result.eps
    lo, hi = K * eps, 2 * K * eps
    mask = (result.x >= lo) & (result.x <= hi)
    if mask.sum() < 2:
        raise InvalidInputError("trace window contains fewer than 2 nodes")
    win = result.final[mask]
    scale = max(1.0, np.abs(result.final).max())
    if (win.max(axis=0) - win.min(axis=0)).max() > var_tol * scale:
        raise ConvergenceError(
            "trace window collides with a wave (variation above threshold)",
            residual=float((win.max(axis=0) - win.min(axis=0)).max()),
        )
    return win.mean(axis=0)


# ---------------------------------------------------------------------------
# counterexample families


@dataclass
class NuFamily:
    example: str
    nu: float
    u10: float
    x: np.ndarray
    solution: np.ndarray
    closed_form_limit: np.ndarray
    sup_error: float
    kink_x: float | None
    params: dict = field(default_factory=dict)


def _kernel_ode(nu):
    def f(x, y):
        u = y[0]
        return [(nu - u) / u]
    return f


def _travelling_ode(nu):
    # first integrals of the traveling-wave system with limit (nu, 0, 0):
    # u2 = (nu^2 - u1^2)/2 and u2' = u1 + u2 - nu collapse to this scalar ODE
    def f(x, y):
        u = y[0]
        return [(u - nu) * (u + nu - 2.0) / (2.0 * u)]
    return f


def _rank_ode(nu, gamma):
    # derived from the orbit relation u2^2 = nu u1^2 + 2g/(g+1) u1^(g+1);
    # the crude display of this ODE elsewhere drops a power and a factor
    def f(x, y):
        u = max(y[0], 0.0)
        num = np.sqrt(nu * u * u + 2.0 * gamma / (gamma + 1.0)
                      * u ** (gamma + 1.0))
        den = nu + gamma * u ** (gamma - 1.0)
        return [-num / den]
    return f


def _closed_forms(example, u10, gamma):
    if example == "ex_kernel":
        kink = u10

        def limit(x):
            return np.maximum(u10 - x, 0.0)
    elif example == "ex_travelling":
        kink = 2.0 * np.log(2.0 / (2.0 - u10))

        def limit(x):
            return np.where(x <= kink, 2.0 + (u10 - 2.0) * np.exp(x / 2.0),
                            0.0)
    elif example == "ex_rank":
        kink = np.sqrt(2.0 * gamma * (gamma + 1.0) / (gamma - 1.0) ** 2
                       * u10 ** (gamma - 1.0))

        def limit(x):
            core = ((gamma - 1.0) ** 2 / (2.0 * gamma * (gamma + 1.0))
                    * (x - kink) ** 2)
            return np.where(x <= kink, core ** (1.0 / (gamma - 1.0)), 0.0)
    else:
        raise InvalidInputError(
            "example must be ex_kernel, ex_travelling, or ex_rank"
        )
    return kink, limit


def counterexample_family(example, nu, u10, gamma=5.0, x_max=None,
                          n_points=2001) -> NuFamily:
    """Integrate the nu-regularized layer ODE and compare to its limit.

    ex_kernel:      u' = (nu - u)/u,      limit (u10 - x)^+
    ex_travelling:  traveling wave at speed 0 with far field (nu, 0, 0),
                    limit 2 + (u10-2) e^{x/2} cut at 2 log(2/(2-u10))
    ex_rank:        B-regularized steady profile, limit the gamma power
                    law vanishing at x0
    """
    if nu <= 0:
        raise InvalidInputError("nu must be positive")
    if u10 <= 0:
        raise InvalidInputError("u10 must be positive")
    if example == "ex_travelling" and u10 >= 2.0:
        raise InvalidInputError("ex_travelling needs 0 < u10 < 2")
    if example == "ex_rank" and gamma <= 3.0:
        raise InvalidInputError("ex_rank needs gamma > 3")
    kink, limit = _closed_forms(example, u10, gamma)
    if x_max is None:
        x_max = 2.2 * kink
    xg = np.linspace(0.0, x_max, n_points)
    if example == "ex_kernel":
        rhs = _kernel_ode(nu)
    elif example == "ex_travelling":
        rhs = _travelling_ode(nu)
    else:
        rhs = _rank_ode(nu, gamma)
    sol = solve_ivp(rhs, (0.0, x_max), [float(u10)], t_eval=xg,
                    method="LSODA", rtol=1e-10, atol=1e-13)
    if not sol.success:
        raise ConvergenceError(f"nu-ODE integration failed: {sol.message}")
    u1 = sol.y[0]
    cf = limit(xg)
    below = u1 < 1e-3 * u10
    kink_est = float(xg[np.argmax(below)]) if below.any() else None
    return NuFamily(
        example=example, nu=nu, u10=u10, x=xg, solution=u1,
        closed_form_limit=cf, sup_error=float(np.abs(u1 - cf).max()),
        kink_x=kink_est, params={"gamma": gamma, "kink_limit": float(kink)},
    )


def nu_monotone(fam_small: NuFamily, fam_large: NuFamily, tol=1e-10):
    """True when the smaller-nu profile sits below the larger-nu one."""
    if fam_small.nu >= fam_large.nu:
        raise InvalidInputError("pass families ordered by nu")
    return bool(np.all(fam_small.solution <= fam_large.solution + tol))
