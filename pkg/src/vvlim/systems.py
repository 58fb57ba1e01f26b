"""System definitions, structural hypothesis checkers, and the boundary map.

A system is the symmetrized form  E(u) u_t + A(u, u_x) u_x = B(u) u_xx
supplied directly through matrix evaluators.  The checkers sample the
structural hypotheses (strict hyperbolicity, Kawashima coupling, block
linear degeneracy, transversality) at given states and return reports;
they never prove anything for all u.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla

from .errors import InvalidInputError, UnsupportedCaseError

RANK_RTOL = 1e-9  # singular values below RANK_RTOL * largest count as zero


@dataclass
class SystemSpec:
    """A hyperbolic-parabolic system in symmetrized form."""

    name: str
    N: int
    r: int
    eval_E: Callable[[np.ndarray], np.ndarray]
    eval_A: Callable[[np.ndarray, np.ndarray], np.ndarray]
    eval_B: Callable[[np.ndarray], np.ndarray]
    u_base: np.ndarray
    delta: float
    flux: Callable[[np.ndarray], np.ndarray] | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u_base = np.atleast_1d(np.asarray(self.u_base, dtype=float))
        if self.u_base.shape != (self.N,):
            raise InvalidInputError("base state has wrong dimension")
        if not (1 <= self.r <= self.N):
            raise InvalidInputError("rank r must satisfy 1 <= r <= N")
        if self.delta <= 0:
            raise InvalidInputError("delta must be positive")

    @property
    def conservative(self):
        return self.flux is not None

    @property
    def singular(self):
        return self.r < self.N

    def A0(self, u):
        """A(u, 0)."""
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return self.eval_A(u, np.zeros(self.N))

    def E(self, u):
        return self.eval_E(np.atleast_1d(np.asarray(u, dtype=float)))

    def B(self, u):
        return self.eval_B(np.atleast_1d(np.asarray(u, dtype=float)))

    def require_in_ball(self, u, slack=1e-9):
        u = np.atleast_1d(np.asarray(u, dtype=float))
        if np.linalg.norm(u - self.u_base) > self.delta + slack:
            raise InvalidInputError(
                f"state {u} outside the delta-ball of {self.u_base} (delta={self.delta})"
            )
        return u


@dataclass
class HypothesisReport:
    name: str
    passed: bool
    witnesses: list = field(default_factory=list)
    constants: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.passed and not self.witnesses:
            raise InvalidInputError("failed report requires at least one witness")
        if not self.passed:
            self.constants = {}


@dataclass
class BoundaryMap:
    """The linear boundary-condition map at a frozen base state.

    Columns of Z_basis span the directions lost at the boundary (lifted
    eigenvectors of E11^-1 A11 with non-positive spectrum); W_basis holds
    the r parabolic directions plus the lifted positive eigenvectors.
    ``projector @ u`` returns the W-coordinates of u, so its kernel is
    span(Z_basis).
    """

    base: np.ndarray
    Z_basis: np.ndarray  # N x (n11+q)
    W_basis: np.ndarray  # N x (N-n11-q)
    projector: np.ndarray  # (N-n11-q) x N
    n11: int
    q: int

    def __call__(self, u):
        return self.projector @ np.atleast_1d(np.asarray(u, dtype=float))

    @property
    def out_dim(self):
        return self.W_basis.shape[1]


# ---------------------------------------------------------------------------
# catalog


def _const(mat):
    mat = np.asarray(mat, dtype=float)
    return lambda u, _mat=mat: _mat.copy()


def _singular4x4_matrix():
    # frozen orthogonal synthesis: spectrum {-2,-1,0,1}, A11 with one
    # negative eigenvalue and trivial kernel, healthy Kawashima margins
    seed = np.array(
        [
            [0.0611, 0.0709, 0.4337, 0.2775],
            [0.5303, 0.5367, 0.6184, -0.7950],
            [0.3000, -1.6027, 0.2668, -1.2616],
            [-0.0713, 0.4740, -0.4149, 0.0977],
        ]
    )
    Q, _ = np.linalg.qr(seed)
    return Q @ np.diag([-2.0, -1.0, 0.0, 1.0]) @ Q.T


CATALOG_NAMES = (
    "burgers",
    "cubic",
    "p_system",
    "linear_const",
    "char2x2",
    "ex_kernel",
    "ex_travelling",
    "ex_rank",
    "singular2x2",
    "singular3x3_q1",
    "singular4x4",
)


def make_catalog_system(name, params=None) -> SystemSpec:
    """Build a catalog system by name.

    Every entry returns fully populated evaluators; states and radii are
    chosen so the shipped examples lie inside the delta-ball.
    """
    params = dict(params or {})

    if name == "burgers":
        return SystemSpec(
            name=name, N=1, r=1,
            eval_E=_const([[1.0]]),
            eval_A=lambda u, p: np.array([[u[0]]]),
            eval_B=_const([[1.0]]),
            flux=lambda u: np.array([0.5 * u[0] ** 2]),
            u_base=[0.0], delta=4.0, params=params,
        )

    if name == "cubic":
        return SystemSpec(
            name=name, N=1, r=1,
            eval_E=_const([[1.0]]),
            eval_A=lambda u, p: np.array([[3.0 * u[0] ** 2 + 1.0]]),
            eval_B=_const([[1.0]]),
            flux=lambda u: np.array([u[0] ** 3 + u[0]]),
            u_base=[0.0], delta=2.0, params=params,
        )

    if name == "p_system":
        gamma = float(params.get("gamma", 1.4))
        if gamma <= 1.0:
            raise InvalidInputError("p_system needs adiabatic exponent gamma > 1")

        def dp(v):
            return -gamma * v ** (-gamma - 1.0)

        def eval_E(u):
            return np.diag([-dp(u[0]), 1.0])

        def eval_A(u, p):
            return np.array([[0.0, dp(u[0])], [dp(u[0]), 0.0]])

        # physical system u_t + f(u)_x = eps u_xx, multiplied by E on the
        # left; identity physical viscosity turns into B = E
        return SystemSpec(
            name=name, N=2, r=2,
            eval_E=eval_E, eval_A=eval_A, eval_B=eval_E,
            flux=lambda u: np.array([-u[1], u[0] ** (-gamma)]),
            u_base=[1.0, 0.0], delta=0.15, params={"gamma": gamma},
        )

    if name == "linear_const":
        A = np.array([[-1.0, 0.3], [0.3, 1.0]])
        B = np.array([[1.5, 0.2], [0.2, 1.2]])
        return SystemSpec(
            name=name, N=2, r=2,
            eval_E=_const(np.eye(2)), eval_A=lambda u, p, _A=A: _A.copy(),
            eval_B=_const(B),
            flux=lambda u, _A=A: _A @ u,
            u_base=[0.0, 0.0], delta=0.3, params=params,
        )

    if name == "char2x2":
        # lambda(0) = {-2.125, 0}: family 2 is boundary characteristic
        def eval_A(u, p):
            return np.array([[-2.0 + u[0], 0.5], [0.5, -0.125 + u[1]]])

        return SystemSpec(
            name=name, N=2, r=2,
            eval_E=_const(np.eye(2)), eval_A=eval_A, eval_B=_const(np.eye(2)),
            flux=lambda u: np.array(
                [-2.0 * u[0] + 0.5 * u[0] ** 2 + 0.5 * u[1],
                 0.5 * u[0] - 0.125 * u[1] + 0.5 * u[1] ** 2]
            ),
            u_base=[0.0, 0.0], delta=0.1, params=params,
        )

    if name in ("ex_kernel", "singular2x2"):
        # same matrices; ex_kernel ships the wide ball that reaches the
        # block-degeneracy failure at u1 = 0, singular2x2 stays clear of it
        def eval_A(u, p):
            return np.array([[u[0], 1.0], [1.0, 0.0]])

        return SystemSpec(
            name=name, N=2, r=1,
            eval_E=_const(np.eye(2)), eval_A=eval_A,
            eval_B=_const([[0.0, 0.0], [0.0, 1.0]]),
            flux=lambda u: np.array([0.5 * u[0] ** 2 + u[1], u[0]]),
            u_base=[1.0, 0.0],
            delta=1.5 if name == "ex_kernel" else 0.45,
            params=params,
        )

    if name == "ex_travelling":
        def eval_A(u, p):
            return np.array([[u[0], 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 0.0]])

        return SystemSpec(
            name=name, N=3, r=2,
            eval_E=_const(np.eye(3)), eval_A=eval_A,
            eval_B=_const(np.diag([0.0, 1.0, 1.0])),
            flux=lambda u: np.array([0.5 * u[0] ** 2 + u[1], u[0] + u[1],
                                     0.0 * u[0]]),
            u_base=[0.0, 0.0, 0.0], delta=1.0, params=params,
        )

    if name == "ex_rank":
        gamma = float(params.get("gamma", 5.0))
        if gamma <= 3.0:
            raise InvalidInputError("ex_rank needs gamma > 3")

        def eval_B(u):
            return np.diag([gamma * u[0] ** (gamma - 1.0) if u[0] > 0 else 0.0, 1.0])

        return SystemSpec(
            name=name, N=2, r=2,
            eval_E=_const(np.eye(2)),
            eval_A=lambda u, p: np.array([[0.0, 1.0], [1.0, 0.0]]),
            eval_B=eval_B,
            flux=lambda u: np.array([u[1], u[0]]),
            u_base=[1.0, 0.0], delta=1.5, params={"gamma": gamma},
        )

    if name == "singular3x3_q1":
        # A11 is the scalar 0: ker(A11 - sigma E11) has dimension 1 exactly
        # at sigma = 0, independent of u
        def eval_A(u, p):
            return np.array(
                [[0.0, 1.0, 0.0], [1.0, u[1], 0.3], [0.0, 0.3, -2.0 + u[2]]]
            )

        return SystemSpec(
            name=name, N=3, r=2,
            eval_E=_const(np.eye(3)), eval_A=eval_A,
            eval_B=_const(np.diag([0.0, 1.0, 1.0])),
            flux=lambda u: np.array(
                [u[1], u[0] + 0.5 * u[1] ** 2 + 0.3 * u[2],
                 0.3 * u[1] - 2.0 * u[2] + 0.5 * u[2] ** 2]
            ),
            u_base=[0.0, 0.0, 0.0], delta=0.3, params=params,
        )

    if name == "singular4x4":
        A = _singular4x4_matrix()
        return SystemSpec(
            name=name, N=4, r=2,
            eval_E=_const(np.eye(4)), eval_A=lambda u, p, _A=A: _A.copy(),
            eval_B=_const(np.diag([0.0, 0.0, 1.0, 1.0])),
            flux=lambda u, _A=A: _A @ u,
            u_base=[0.0, 0.0, 0.0, 0.0], delta=0.1, params=params,
        )

    raise InvalidInputError(
        f"unknown catalog system {name!r}; known: {', '.join(CATALOG_NAMES)}"
    )


# ---------------------------------------------------------------------------
# numeric helpers


def numerical_rank(M, rtol=RANK_RTOL):
    sv = np.linalg.svd(np.atleast_2d(M), compute_uv=False)
    if sv.size == 0:
        return 0
    return int(np.count_nonzero(sv > rtol * max(sv[0], 1e-300)))


def kernel_basis(M, rtol=RANK_RTOL):
    """Orthonormal basis (columns) of the numerical kernel of M."""
    M = np.atleast_2d(M)
    _, sv, Vt = np.linalg.svd(M)
    scale = max(sv[0] if sv.size else 0.0, 1e-300)
    mask = np.ones(Vt.shape[0], dtype=bool)
    mask[: sv.size] = sv <= rtol * scale
    return Vt[mask].T


def fix_sign(v, tol=1e-12):
    """Deterministic orientation: first component of modulus > tol positive."""
    v = np.asarray(v, dtype=float)
    nz = np.nonzero(np.abs(v) > tol * max(1.0, np.abs(v).max()))[0]
    if nz.size and v[nz[0]] < 0:
        return -v
    return v


def sym_pencil_eig(A, E):
    """Real eigen-decomposition of E^-1 A for symmetric A, SPD E.

    Eigenvalues ascending; eigenvectors unit 2-norm with deterministic
    sign.  Raises for a non-SPD right matrix.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    E = np.atleast_2d(np.asarray(E, dtype=float))
    try:
        w, V = sla.eigh(A, E)
    except (sla.LinAlgError, ValueError) as exc:
        raise UnsupportedCaseError(f"pencil eigenproblem failed: {exc}") from exc
    V = V / np.linalg.norm(V, axis=0, keepdims=True)
    for j in range(V.shape[1]):
        V[:, j] = fix_sign(V[:, j])
    return w, V


# ---------------------------------------------------------------------------
# hypothesis checkers


def check_symmetric_dissipative(spec, samples):
    """Sampled form of the symmetrization hypothesis.

    A(u, 0) symmetric, E SPD, and B positive definite (r = N) or with the
    zero / b block structure and b positive definite (r < N).
    """
    witnesses = []
    c_E = np.inf
    c_low = np.inf
    for u in samples:
        u = spec.require_in_ball(u)
        A = spec.A0(u)
        E = spec.E(u)
        B = spec.B(u)
        sym_defect = np.abs(A - A.T).max()
        if sym_defect > 1e-9 * max(1.0, np.abs(A).max()):
            witnesses.append((u, {"A_symmetry_defect": sym_defect}))
            continue
        eE = np.linalg.eigvalsh(0.5 * (E + E.T))
        if eE.min() <= 0:
            witnesses.append((u, {"E_min_eig": eE.min()}))
            continue
        c_E = min(c_E, eE.min())
        if spec.r == spec.N:
            sB = np.linalg.eigvalsh(0.5 * (B + B.T))
            if sB.min() <= 0:
                witnesses.append((u, {"B_min_eig": sB.min()}))
                continue
            c_low = min(c_low, sB.min())
        else:
            nr = spec.N - spec.r
            off = max(np.abs(B[:nr, :]).max(), np.abs(B[:, :nr]).max())
            if off > 1e-12 * max(1.0, np.abs(B).max()):
                witnesses.append((u, {"B_block_defect": off}))
                continue
            sb = np.linalg.eigvalsh(0.5 * (B[nr:, nr:] + B[nr:, nr:].T))
            if sb.min() <= 0:
                witnesses.append((u, {"b_min_eig": sb.min()}))
                continue
            c_low = min(c_low, sb.min())
    passed = not witnesses
    constants = {"c_E": c_E, ("c_B" if spec.r == spec.N else "c_b"): c_low}
    return HypothesisReport(
        name="symmetric_dissipative", passed=passed,
        witnesses=witnesses, constants=constants if passed else {},
    )


def check_strict_hyperbolicity(spec, samples):
    """All eigenvalues of E^-1 A(u,0) real with a uniform pairwise gap."""
    witnesses = []
    c = np.inf
    for u in samples:
        u = spec.require_in_ball(u)
        A = spec.A0(u)
        if np.abs(A - A.T).max() <= 1e-9 * max(1.0, np.abs(A).max()):
            w, _ = sym_pencil_eig(A, spec.E(u))
        else:
            wc = sla.eig(np.linalg.solve(spec.E(u), A), right=False)
            scale = max(1.0, np.abs(wc).max())
            if np.abs(wc.imag).max() > 1e-9 * scale:
                witnesses.append((u, {"max_imag": np.abs(wc.imag).max()}))
                continue
            w = np.sort(wc.real)
        if spec.N == 1:
            continue  # the pairwise inf is vacuous
        gap = np.diff(np.sort(w)).min()
        if gap <= 1e-12 * max(1.0, np.abs(w).max()):
            witnesses.append((u, {"min_gap": gap}))
            continue
        c = min(c, gap)
    passed = not witnesses
    return HypothesisReport(
        name="strict_hyperbolicity", passed=passed, witnesses=witnesses,
        constants={"c": c} if passed else {},
    )


def check_kawashima(spec, u):
    """No eigenvector of E^-1 A(u,0) lies in ker B(u)."""
    if spec.r == spec.N:
        raise InvalidInputError("Kawashima check is vacuous for invertible viscosity")
    u = spec.require_in_ball(u)
    B = spec.B(u)
    rank_B = numerical_rank(B)
    if rank_B != spec.r:
        return HypothesisReport(
            name="kawashima", passed=False,
            witnesses=[(u, {"rank_B": rank_B, "declared_r": spec.r,
                            "note": "rank of B is not constant"})],
        )
    K = kernel_basis(B)
    w, V = sym_pencil_eig(spec.A0(u), spec.E(u))
    min_residual = np.inf
    witnesses = []
    for j in range(spec.N):
        v = V[:, j]
        resid = np.linalg.norm(v - K @ (K.T @ v))
        min_residual = min(min_residual, resid)
        if resid <= 1e-9:
            witnesses.append((u, {"eigenvalue": w[j], "kernel_residual": resid}))
    passed = not witnesses
    return HypothesisReport(
        name="kawashima", passed=passed, witnesses=witnesses,
        constants={"min_kernel_angle_sin": min_residual} if passed else {},
    )


def check_block_linear_degeneracy(spec, sigma, samples):
    """dim ker(A11(u) - sigma E11(u)) must not depend on u."""
    if spec.r == spec.N:
        raise InvalidInputError("block decomposition requires r < N")
    nr = spec.N - spec.r
    dims = []
    for u in samples:
        u = spec.require_in_ball(u)
        M = spec.A0(u)[:nr, :nr] - sigma * spec.E(u)[:nr, :nr]
        dims.append(nr - numerical_rank(M))
    passed = len(set(dims)) <= 1
    witnesses = [] if passed else [
        (np.atleast_1d(np.asarray(u, float)), {"kernel_dim": d})
        for u, d in zip(samples, dims)
    ]
    return HypothesisReport(
        name="block_linear_degeneracy", passed=passed, witnesses=witnesses,
        constants={"q": dims[0], "sigma": sigma} if passed else {},
    )


def build_boundary_map(spec, u) -> BoundaryMap:
    """Boundary-condition map at u for a singular viscosity matrix.

    Z collects the lifted eigenvectors of E11^-1 A11 with non-positive
    spectrum (n11 negative plus q zero directions); W collects the r
    parabolic coordinate directions and the lifted positive eigenvectors.
    """
    if spec.r == spec.N:
        raise InvalidInputError("boundary map requires singular viscosity (r < N)")
    u = spec.require_in_ball(u)
    nr = spec.N - spec.r
    A11 = spec.A0(u)[:nr, :nr]
    E11 = spec.E(u)[:nr, :nr]
    if np.abs(A11 - A11.T).max() > 1e-9 * max(1.0, np.abs(A11).max()):
        wc, Vc = sla.eig(np.linalg.solve(E11, A11))
        if np.abs(wc.imag).max() > 1e-9 * max(1.0, np.abs(wc).max()):
            raise UnsupportedCaseError("E11^-1 A11 has non-real spectrum")
        order = np.argsort(wc.real)
        w, V = wc.real[order], Vc.real[:, order]
        if numerical_rank(V) < nr:
            raise UnsupportedCaseError("defective E11^-1 A11: generalized "
                                       "eigenvectors are not implemented")
    else:
        w, V = sym_pencil_eig(A11, E11)
    scale = max(1.0, np.abs(w).max())
    nonpos = w <= RANK_RTOL * scale
    n11 = int(np.count_nonzero(w < -RANK_RTOL * scale))
    q = int(np.count_nonzero(nonpos)) - n11

    def lift(cols):
        out = np.zeros((spec.N, cols.shape[1]))
        out[:nr, :] = cols
        return out

    Z = lift(V[:, nonpos]) if nonpos.any() else np.zeros((spec.N, 0))
    W_cols = [np.eye(spec.N)[:, nr + j] for j in range(spec.r)]
    if (~nonpos).any():
        W_cols = [lift(V[:, ~nonpos])[:, j] for j in range((~nonpos).sum())] + W_cols
    W = np.column_stack(W_cols)
    M = np.column_stack([W, Z]) if Z.shape[1] else W
    if numerical_rank(M) < spec.N:
        raise UnsupportedCaseError("Z and W do not span R^N")
    projector = np.linalg.inv(M)[: W.shape[1], :]
    return BoundaryMap(base=u, Z_basis=Z, W_basis=W, projector=projector,
                       n11=n11, q=q)


def check_beta_transversality(spec, u0, V_basis):
    """Both direct-sum conditions of the transversality lemma.

    [Z | V] and [Z | W] must be numerically full-rank N x N, where V is
    supplied by the spectral module (layer directions Theta plus outgoing
    eigenvectors Xi).
    """
    bmap = build_boundary_map(spec, u0)
    V = np.column_stack([np.asarray(v, dtype=float) for v in V_basis]) \
        if len(V_basis) else np.zeros((spec.N, 0))
    expected = spec.N - bmap.Z_basis.shape[1]
    if V.shape[1] != expected:
        raise InvalidInputError(
            f"V basis has {V.shape[1]} vectors, expected {expected}"
        )
    svs = {}
    ok = True
    for label, M in (("ZV", np.column_stack([bmap.Z_basis, V])),
                     ("ZW", np.column_stack([bmap.Z_basis, bmap.W_basis]))):
        sv = np.linalg.svd(M, compute_uv=False)
        svs[f"smin_{label}"] = sv[-1] / sv[0]
        ok = ok and sv[-1] > RANK_RTOL * sv[0]
    return HypothesisReport(
        name="beta_transversality", passed=ok,
        witnesses=[] if ok else [(np.asarray(u0, float), svs)],
        constants=svs if ok else {},
    )
